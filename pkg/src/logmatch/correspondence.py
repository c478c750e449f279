"""Exact closest-point queries from a moving cloud into a fixed model cloud.

The index is exact, never approximate: for every query it returns the same
(point, squared distance) as an exhaustive linear scan, with ties at equal
distance resolved to the lowest model index. That determinism is what makes
distance rankings reproducible bit-for-bit across runs and platforms.

Matching is directional (each moving point gets its closest model point) and
many-to-one matches are allowed, which is how two clouds of different sizes
can be compared at all.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np
from scipy.spatial import cKDTree

from .errors import InvalidInputError
from .geometry import Point3, PointCloud

# Below this model size a vectorized scan beats tree traversal and is
# trivially exact; above it a k-d tree with explicit tie resolution is used.
_BRUTE_FORCE_MAX = 256


@dataclass(frozen=True, eq=False)
class CorrespondenceSet:
    """One matched model point per moving point, in moving-cloud order.

    Entry i pairs moving point i with model point target_indices[i] at the
    exact squared Euclidean distance squared_distances[i] (mm^2).
    """

    target_indices: np.ndarray
    squared_distances: np.ndarray

    def __post_init__(self) -> None:
        idx = np.ascontiguousarray(self.target_indices, dtype=np.int64)
        sq = np.ascontiguousarray(self.squared_distances, dtype=np.float64)
        if idx.ndim != 1 or sq.shape != idx.shape:
            raise InvalidInputError("target_indices and squared_distances must be equal-length 1-D arrays")
        if idx.shape[0] < 1:
            raise InvalidInputError("correspondence set must not be empty")
        if (sq < 0).any() or not np.isfinite(sq).all():
            raise InvalidInputError("squared distances must be finite and non-negative")
        idx.setflags(write=False)
        sq.setflags(write=False)
        object.__setattr__(self, "target_indices", idx)
        object.__setattr__(self, "squared_distances", sq)

    def __len__(self) -> int:
        return self.target_indices.shape[0]

    def pairs(self) -> Iterator[tuple[int, int, float]]:
        """(source_index, target_index, squared_distance) triples in order."""
        for i in range(len(self)):
            yield i, int(self.target_indices[i]), float(self.squared_distances[i])


class SpatialIndex:
    """Immutable exact nearest-neighbour structure over a model cloud.

    Safe for concurrent queries once built. Use :func:`build_index`.
    """

    __slots__ = ("_points", "_tree")

    def __init__(self, model: PointCloud):
        pts = np.array(model.xyz, dtype=np.float64)
        pts.setflags(write=False)
        self._points = pts
        self._tree = cKDTree(pts) if pts.shape[0] > _BRUTE_FORCE_MAX else None

    def __len__(self) -> int:
        return self._points.shape[0]

    @property
    def points(self) -> np.ndarray:
        """The indexed model points, read-only, in original order."""
        return self._points

    def query_batch(self, xyz: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Exact nearest model point for each row of an (m, 3) array.

        Returns (target_indices, squared_distances). Ties go to the lowest
        model index; squared distances are recomputed from the matched pair
        so they are bit-identical to a direct evaluation.
        """
        pts = np.asarray(xyz, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise InvalidInputError(f"queries must have shape (m, 3), got {pts.shape}")
        model = self._points
        if self._tree is None:
            diffs = pts[:, None, :] - model[None, :, :]
            d2 = (diffs * diffs).sum(axis=2)
            # argmin returns the first (lowest-index) minimum; the matrix
            # entries are exactly the per-pair squared distances.
            idx = d2.argmin(axis=1).astype(np.int64)
            return idx, d2[np.arange(pts.shape[0]), idx]
        dist, nbr = self._tree.query(pts, k=2)
        idx = nbr[:, 0].astype(np.int64)
        for row in np.nonzero(dist[:, 0] == dist[:, 1])[0]:
            idx[row] = self._resolve_tie(pts[row], float(dist[row, 0]))
        matched = pts - model[idx]
        return idx, (matched * matched).sum(axis=1)

    def _resolve_tie(self, point: np.ndarray, distance: float) -> int:
        # The reported distance may be off by a rounding in the last place;
        # inflate the ball slightly, then compare exact squared distances.
        radius = distance * (1.0 + 1e-9)
        candidates = self._tree.query_ball_point(point, radius)
        diffs = self._points[candidates] - point
        sq = (diffs * diffs).sum(axis=1)
        return min(zip(sq.tolist(), candidates))[1]


def build_index(model: PointCloud) -> SpatialIndex:
    """Build an exact nearest-neighbour index over the model cloud."""
    if not isinstance(model, PointCloud):
        raise InvalidInputError("model must be a PointCloud")
    return SpatialIndex(model)


def nearest_point(index: SpatialIndex, p: Point3) -> tuple[int, float]:
    """The model point closest to p: (target_index, squared_distance).

    Ties at equal distance resolve to the lowest target index.
    """
    idx, sq = index.query_batch(p.as_array()[None, :])
    return int(idx[0]), float(sq[0])


def match_correspondences(index: SpatialIndex, moving: PointCloud) -> CorrespondenceSet:
    """Closest model point for every moving point, in moving-cloud order.

    The result always has exactly one pair per moving point; several moving
    points may share a model point.
    """
    idx, sq = index.query_batch(moving.xyz)
    return CorrespondenceSet(idx, sq)
