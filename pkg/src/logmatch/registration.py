"""Closed-form rigid registration from correspondences and the ICP loop.

Given fixed correspondences, the least-squares rotation is recovered in
closed form: build the cross-covariance of the paired (centered) points,
assemble a symmetric 4x4 matrix from it, and take the unit eigenvector of
the largest eigenvalue as the rotation quaternion. The translation then
maps the moving centroid onto the matched-model centroid. Iterating
matching and registration yields ICP, whose mean-square error is
non-increasing and converges to a local minimum.

Conventions: the moving cloud P is aligned onto the model cloud X; every
registration is an absolute transform of the original moving points, not an
increment on the previous iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .correspondence import CorrespondenceSet, SpatialIndex, build_index
from .errors import InvalidInputError, NumericalError
from .geometry import (
    PointCloud,
    RigidTransform,
    UnitQuaternion,
    _apply_arrays,
    _rotation_matrix,
)

_JACOBI_MAX_SWEEPS = 100
# Convergence threshold on the off-diagonal norm, relative to the Frobenius
# norm of the input; an absolute threshold would be unreachable for the
# mm^2-scale covariances this solver sees.
_JACOBI_REL_TOL = 1e-12
_SYMMETRY_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class RegistrationResult:
    """A fitted transform and the mean-square error (mm^2) it achieves."""

    transform: RigidTransform
    mse: float

    def __post_init__(self) -> None:
        value = float(self.mse)
        if not (math.isfinite(value) and value >= 0.0):
            raise InvalidInputError(f"mse must be finite and non-negative, got {value!r}")
        object.__setattr__(self, "mse", value)


@dataclass(frozen=True, eq=False)
class IcpConfig:
    """Knobs of the iterative alignment.

    tau is the convergence threshold on the drop in mean-square error
    between consecutive iterations (mm^2). pre_align optionally translates
    the moving cloud so both centroids coincide before iterating; it is off
    by default because the plain algorithm starts from the given initial
    transform and is sensitive to it. stride > 1 subsamples the moving
    cloud (every stride-th point) as a performance escape hatch.
    """

    tau: float = 1e-8
    max_iterations: int = 50
    initial_transform: RigidTransform = field(default_factory=RigidTransform.identity)
    pre_align: bool = False
    stride: int = 1

    def __post_init__(self) -> None:
        if not (math.isfinite(self.tau) and self.tau > 0.0):
            raise InvalidInputError(f"tau must be positive, got {self.tau!r}")
        if self.max_iterations < 1:
            raise InvalidInputError(f"max_iterations must be >= 1, got {self.max_iterations!r}")
        if not isinstance(self.initial_transform, RigidTransform):
            raise InvalidInputError("initial_transform must be a RigidTransform")
        if self.stride < 1:
            raise InvalidInputError(f"stride must be >= 1, got {self.stride!r}")


class TerminalReason(str, Enum):
    CONVERGED = "converged"
    MAX_ITERATIONS = "max_iterations"


@dataclass(frozen=True, eq=False)
class IcpIteration:
    """One iteration of the trace: index k, the error d_k, the transform."""

    index: int
    mse: float
    transform: RigidTransform


@dataclass(frozen=True, eq=False)
class IcpTrace:
    """Full per-iteration history. The error sequence never increases."""

    iterations: tuple[IcpIteration, ...]
    terminal_reason: TerminalReason

    def __post_init__(self) -> None:
        if not self.iterations:
            raise InvalidInputError("trace must contain at least one iteration")
        previous = None
        for entry in self.iterations:
            if previous is not None and entry.mse > previous + 1e-12:
                raise NumericalError(
                    f"mean-square error increased at iteration {entry.index}: {previous!r} -> {entry.mse!r}"
                )
            previous = entry.mse

    def errors(self) -> np.ndarray:
        return np.array([entry.mse for entry in self.iterations], dtype=np.float64)


def cross_covariance(moving: PointCloud, model: PointCloud, pairs: CorrespondenceSet) -> np.ndarray:
    """Cross-covariance of the paired points, (1/n) sum (p - mu_p)(x - mu_x)^T.

    mu_p is the centroid of the moving points, mu_x the centroid of their
    matched model points counted with multiplicity.
    """
    _check_pairs(moving, model, pairs)
    matched = model.xyz[pairs.target_indices]
    return _cross_covariance_arrays(moving.xyz, matched)


def _check_pairs(moving: PointCloud, model: PointCloud, pairs: CorrespondenceSet) -> None:
    if len(pairs) != len(moving):
        raise InvalidInputError(
            f"correspondences must cover the moving cloud: {len(pairs)} pairs for {len(moving)} points"
        )
    if pairs.target_indices.max() >= len(model) or pairs.target_indices.min() < 0:
        raise InvalidInputError("correspondence target index out of range for the model cloud")


def _cross_covariance_arrays(p_xyz: np.ndarray, x_xyz: np.ndarray) -> np.ndarray:
    mu_p = p_xyz.mean(axis=0)
    mu_x = x_xyz.mean(axis=0)
    return (p_xyz - mu_p).T @ (x_xyz - mu_x) / p_xyz.shape[0]


def quaternion_alignment_matrix(sigma: np.ndarray) -> np.ndarray:
    """Symmetric 4x4 matrix whose top eigenvector is the optimal rotation.

    Layout: top-left scalar trace(sigma); first row and column completed by
    the vector (A12, A20, A01) of the antisymmetric part A = sigma - sigma^T
    (0-based indices); lower-right 3x3 block sigma + sigma^T - trace(sigma) I.
    """
    s = np.asarray(sigma, dtype=np.float64)
    if s.shape != (3, 3):
        raise InvalidInputError(f"expected a 3x3 matrix, got shape {s.shape}")
    if not np.isfinite(s).all():
        raise InvalidInputError("cross-covariance contains non-finite entries")
    trace = float(np.trace(s))
    delta = np.array([s[1, 2] - s[2, 1], s[2, 0] - s[0, 2], s[0, 1] - s[1, 0]])
    q = np.empty((4, 4), dtype=np.float64)
    q[0, 0] = trace
    q[0, 1:] = delta
    q[1:, 0] = delta
    q[1:, 1:] = s + s.T - trace * np.eye(3)
    return q


_PAIRS4 = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))


def _jacobi_eigh4(a: list[list[float]]) -> tuple[list[float], list[list[float]]]:
    """Cyclic Jacobi sweeps on a symmetric 4x4 given as nested lists.

    Mutates `a`; returns (eigenvalues, eigenvector columns), unsorted.
    Raises NumericalError if the off-diagonal norm has not fallen below
    1e-12 x ||input||_F after 100 sweeps.
    """
    v = [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]]
    off2 = 2.0 * (a[0][1] ** 2 + a[0][2] ** 2 + a[0][3] ** 2
                  + a[1][2] ** 2 + a[1][3] ** 2 + a[2][3] ** 2)
    fro2 = off2 + a[0][0] ** 2 + a[1][1] ** 2 + a[2][2] ** 2 + a[3][3] ** 2
    threshold2 = _JACOBI_REL_TOL * _JACOBI_REL_TOL * fro2

    for _ in range(_JACOBI_MAX_SWEEPS):
        if off2 <= threshold2:
            break
        for p, q in _PAIRS4:
            apq = a[p][q]
            if apq == 0.0:
                continue
            theta = (a[q][q] - a[p][p]) / (2.0 * apq)
            t = (1.0 if theta >= 0.0 else -1.0) / (abs(theta) + math.sqrt(theta * theta + 1.0))
            c = 1.0 / math.sqrt(t * t + 1.0)
            s = t * c
            tau = s / (1.0 + c)
            h = t * apq
            a[p][p] -= h
            a[q][q] += h
            a[p][q] = 0.0
            a[q][p] = 0.0
            for r in range(4):
                if r != p and r != q:
                    arp = a[r][p]
                    arq = a[r][q]
                    a[r][p] = arp - s * (arq + tau * arp)
                    a[p][r] = a[r][p]
                    a[r][q] = arq + s * (arp - tau * arq)
                    a[q][r] = a[r][q]
            for r in range(4):
                vrp = v[r][p]
                vrq = v[r][q]
                v[r][p] = vrp - s * (vrq + tau * vrp)
                v[r][q] = vrq + s * (vrp - tau * vrq)
        off2 = 2.0 * (a[0][1] ** 2 + a[0][2] ** 2 + a[0][3] ** 2
                      + a[1][2] ** 2 + a[1][3] ** 2 + a[2][3] ** 2)
    else:
        raise NumericalError(f"Jacobi sweeps did not converge: off-diagonal norm {math.sqrt(off2)!r}")
    return [a[0][0], a[1][1], a[2][2], a[3][3]], v


def _pick_max_eigenpair(values: list[float], vectors: list[list[float]]) -> tuple[float, list[float]]:
    """Largest eigenvalue and its column; equal maxima keep the lowest index."""
    best = max(range(4), key=lambda i: (values[i], -i))
    return values[best], [vectors[0][best], vectors[1][best], vectors[2][best], vectors[3][best]]


def max_eigenvector(matrix: np.ndarray) -> tuple[float, np.ndarray]:
    """Largest eigenvalue of a symmetric 4x4 matrix and a unit eigenvector.

    The input must be symmetric within 1e-9 (scaled by its magnitude).
    Degenerate spectra are fine; any maximizing eigenvector is returned.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.shape != (4, 4):
        raise InvalidInputError(f"expected a 4x4 matrix, got shape {m.shape}")
    if not np.isfinite(m).all():
        raise InvalidInputError("matrix contains non-finite entries")
    magnitude = float(np.abs(m).max())
    if float(np.abs(m - m.T).max()) > _SYMMETRY_TOL * max(1.0, magnitude):
        raise InvalidInputError("matrix is not symmetric within tolerance")
    values, vectors = _jacobi_eigh4([[float(m[r, c]) for c in range(4)] for r in range(4)])
    value, column = _pick_max_eigenpair(values, vectors)
    vec = np.array(column, dtype=np.float64)
    return value, vec / float(np.linalg.norm(vec))


def _fit_arrays(p_xyz: np.ndarray, x_xyz: np.ndarray) -> tuple[np.ndarray, np.ndarray, UnitQuaternion]:
    """Closed-form least-squares rigid fit of paired arrays: (R, T, quaternion).

    Hot path of the ICP loop; builds the alignment matrix entrywise, which
    is bit-identical to quaternion_alignment_matrix on the same input.
    """
    mu_p = p_xyz.mean(axis=0)
    mu_x = x_xyz.mean(axis=0)
    sigma = (p_xyz - mu_p).T @ (x_xyz - mu_x) / p_xyz.shape[0]
    s00, s01, s02, s10, s11, s12, s20, s21, s22 = sigma.ravel().tolist()
    trace = s00 + s11 + s22
    d0 = s12 - s21
    d1 = s20 - s02
    d2 = s01 - s10
    b01 = s01 + s10
    b02 = s02 + s20
    b12 = s12 + s21
    q = [
        [trace, d0, d1, d2],
        [d0, s00 + s00 - trace, b01, b02],
        [d1, b01, s11 + s11 - trace, b12],
        [d2, b02, b12, s22 + s22 - trace],
    ]
    values, vectors = _jacobi_eigh4(q)
    _, column = _pick_max_eigenpair(values, vectors)
    norm = math.sqrt(column[0] ** 2 + column[1] ** 2 + column[2] ** 2 + column[3] ** 2)
    quat = UnitQuaternion(column[0] / norm, column[1] / norm, column[2] / norm, column[3] / norm)
    rot = _rotation_matrix(quat.q0, quat.q1, quat.q2, quat.q3)
    return rot, mu_x - rot @ mu_p, quat


def _mse_arrays(x_xyz: np.ndarray, p_transformed: np.ndarray) -> float:
    diff = x_xyz - p_transformed
    return float((diff * diff).sum(axis=1).mean())


def mse(moving: PointCloud, model: PointCloud, pairs: CorrespondenceSet, t: RigidTransform) -> float:
    """Mean squared residual (mm^2) of the pairs under the transform:
    (1/n) sum ||x_i - (R p_i + T)||^2."""
    _check_pairs(moving, model, pairs)
    transformed = _apply_arrays(t.matrix(), t.translation, moving.xyz)
    return _mse_arrays(model.xyz[pairs.target_indices], transformed)


def compute_registration(
    moving: PointCloud, model: PointCloud, pairs: CorrespondenceSet
) -> RegistrationResult:
    """Least-squares rigid transform for fixed correspondences.

    Rotation comes from the largest eigenvector of the quaternion alignment
    matrix; translation maps the moving centroid onto the matched-model
    centroid. The reported mse is the residual of the given pairs at the
    fitted transform. Degenerate geometry (single point, collinear cloud)
    leaves the rotation underdetermined; whichever maximizing eigenvector
    the solver finds is accepted.
    """
    _check_pairs(moving, model, pairs)
    matched = model.xyz[pairs.target_indices]
    rot, trans, quat = _fit_arrays(moving.xyz, matched)
    transform = RigidTransform(quat, trans)
    return RegistrationResult(transform, _mse_arrays(matched, _apply_arrays(rot, trans, moving.xyz)))


def icp_align(
    moving: PointCloud,
    model: PointCloud,
    cfg: IcpConfig | None = None,
    *,
    model_index: SpatialIndex | None = None,
) -> tuple[RegistrationResult, IcpTrace]:
    """Iteratively align the moving cloud onto the model cloud.

    Each iteration matches the currently-placed moving points to their
    closest model points, refits the transform of the *original* moving
    cloud against those matches in closed form, and re-places the cloud.
    Iteration stops when the drop in mean-square error falls strictly below
    cfg.tau, or after cfg.max_iterations registrations. The first error has
    no predecessor, so convergence is checked from the second iteration on.

    Pass a prebuilt model_index to amortize index construction over many
    alignments against the same model.
    """
    if cfg is None:
        cfg = IcpConfig()
    index = model_index if model_index is not None else build_index(model)
    if index.points.shape != model.xyz.shape or not np.array_equal(index.points, model.xyz):
        raise InvalidInputError("model_index was not built over the given model cloud")
    model_pts = index.points

    p0 = np.ascontiguousarray(moving.xyz[:: cfg.stride])
    initial = cfg.initial_transform
    if cfg.pre_align:
        placed = _apply_arrays(initial.matrix(), initial.translation, p0)
        shift = model_pts.mean(axis=0) - placed.mean(axis=0)
        initial = RigidTransform(initial.rotation, initial.translation + shift)

    current = _apply_arrays(initial.matrix(), initial.translation, p0)
    incumbent = initial
    previous_error: float | None = None
    entries: list[IcpIteration] = []
    reason = TerminalReason.MAX_ITERATIONS

    for k in range(cfg.max_iterations):
        idx, sq = index.query_batch(current)
        incumbent_error = float(sq.mean())
        matched = model_pts[idx]
        rot, trans, quat = _fit_arrays(p0, matched)
        placed = _apply_arrays(rot, trans, p0)
        fitted_error = _mse_arrays(matched, placed)
        if fitted_error <= incumbent_error:
            error = fitted_error
            incumbent = RigidTransform(quat, trans)
            current = placed
        else:
            # The closed form cannot worsen the objective; keep the incumbent
            # transform when rounding at the convergence plateau says otherwise.
            error = incumbent_error
        entries.append(IcpIteration(k, error, incumbent))
        if previous_error is not None and previous_error - error < cfg.tau:
            reason = TerminalReason.CONVERGED
            break
        previous_error = error

    trace = IcpTrace(tuple(entries), reason)
    final = entries[-1]
    return RegistrationResult(final.transform, final.mse), trace


def icp_distance(a: PointCloud, b: PointCloud, cfg: IcpConfig | None = None) -> float:
    """Converged mean-square error (mm^2) of aligning a onto b.

    Directional: a is the moving cloud. Rigid only, so shapes differing by
    scale keep a strictly positive distance.
    """
    result, _ = icp_align(a, b, cfg)
    return result.mse
