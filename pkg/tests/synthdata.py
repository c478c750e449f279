"""Synthetic cloud and dataset generators shared by the test modules.

Everything is driven by an explicit numpy Generator so tests are
reproducible bit-for-bit.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from logmatch import PointCloud, ProductBasket, RigidTransform, UnitQuaternion, apply_transform
from logmatch.io import write_scan


def box_cloud(rng: np.random.Generator, n: int, size: float = 1000.0) -> PointCloud:
    """n uniform points in a [0, size]^3 box."""
    return PointCloud(rng.uniform(0.0, size, (n, 3)))


def random_axis(rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def random_transform(
    rng: np.random.Generator, max_angle: float, max_translation: float
) -> RigidTransform:
    """Rotation up to max_angle radians about a random axis, translation with
    components up to max_translation."""
    q = UnitQuaternion.from_axis_angle(random_axis(rng), rng.uniform(0.0, max_angle))
    return RigidTransform(q, rng.uniform(-max_translation, max_translation, 3))


def rotation_angle(r_a: np.ndarray, r_b: np.ndarray) -> float:
    """Angle in radians between two rotation matrices."""
    cos = (np.trace(r_a.T @ r_b) - 1.0) / 2.0
    return math.acos(min(1.0, max(-1.0, cos)))


def cylinder_cloud(
    rng: np.random.Generator,
    n: int,
    length: float = 1000.0,
    radius: float = 100.0,
    caps: bool = True,
) -> PointCloud:
    """Points on the surface of an axis-aligned (x) cylinder centred at 0."""
    n_side = int(n * 0.8) if caps else n
    x = rng.uniform(-length / 2.0, length / 2.0, n_side)
    theta = rng.uniform(0.0, 2.0 * np.pi, n_side)
    side = np.column_stack([x, radius * np.cos(theta), radius * np.sin(theta)])
    if not caps:
        return PointCloud(side)
    n_cap = n - n_side
    r = radius * np.sqrt(rng.uniform(0.0, 1.0, n_cap))
    theta = rng.uniform(0.0, 2.0 * np.pi, n_cap)
    x = np.where(rng.uniform(size=n_cap) < 0.5, -length / 2.0, length / 2.0)
    cap = np.column_stack([x, r * np.cos(theta), r * np.sin(theta)])
    return PointCloud(np.vstack([side, cap]))


def cone_cloud(
    rng: np.random.Generator,
    n: int,
    length: float = 1000.0,
    r_wide: float = 100.0,
    r_narrow: float = 50.0,
) -> PointCloud:
    """Points on the lateral surface of a truncated cone along x."""
    x = rng.uniform(-length / 2.0, length / 2.0, n)
    radius = r_wide + (x + length / 2.0) / length * (r_narrow - r_wide)
    theta = rng.uniform(0.0, 2.0 * np.pi, n)
    return PointCloud(np.column_stack([x, radius * np.cos(theta), radius * np.sin(theta)]))


def log_like_cloud(rng: np.random.Generator, n: int = 48) -> PointCloud:
    """A wobbly tube resembling a log surface scan, randomly proportioned."""
    length = rng.uniform(600.0, 1400.0)
    radius = rng.uniform(60.0, 160.0)
    s = rng.uniform(-length / 2.0, length / 2.0, n)
    theta = rng.uniform(0.0, 2.0 * np.pi, n)
    wobble = 1.0 + 0.3 * np.sin(s / length * rng.uniform(2.0, 6.0) + rng.uniform(0.0, 2.0 * np.pi))
    r = radius * wobble
    return PointCloud(np.column_stack([s, r * np.cos(theta), r * np.sin(theta)]))


def jittered_copy(
    rng: np.random.Generator,
    cloud: PointCloud,
    max_angle: float = math.radians(15.0),
    max_translation: float = 40.0,
    noise: float = 0.5,
) -> PointCloud:
    """A rigidly moved copy with per-coordinate gaussian jitter (mm)."""
    moved = apply_transform(random_transform(rng, max_angle, max_translation), cloud)
    return PointCloud(moved.xyz + rng.normal(0.0, noise, moved.xyz.shape))


def distinct_baskets(rng: np.random.Generator, count: int, width: int = 19) -> list[ProductBasket]:
    """Pairwise-distinct random baskets, none empty."""
    seen = set()
    out = []
    while len(out) < count:
        q = tuple(int(v) for v in rng.integers(0, 6, width))
        if q in seen or not any(q):
            continue
        seen.add(q)
        out.append(ProductBasket(q))
    return out


def write_dataset_files(
    root: Path,
    entries: list[tuple[str, PointCloud, ProductBasket]],
    name: str = "data",
    product_names: list[str] | None = None,
) -> Path:
    """Write scans, a baskets table and a manifest; returns the manifest path."""
    scans = root / f"{name}_scans"
    scans.mkdir(parents=True, exist_ok=True)
    width = len(entries[0][2])
    names = product_names or [f"p{i + 1}" for i in range(width)]
    manifest_lines = ["id,scan_path"]
    basket_lines = ["id," + ",".join(names)]
    for log_id, cloud, basket in entries:
        scan_path = scans / f"{log_id}.xyz"
        write_scan(cloud, scan_path)
        manifest_lines.append(f"{log_id},{scan_path.relative_to(root).as_posix()}")
        basket_lines.append(log_id + "," + ",".join(str(q) for q in basket.quantities))
    manifest = root / f"{name}.csv"
    manifest.write_text("\n".join(manifest_lines) + "\n", encoding="utf-8")
    (root / f"{name}.baskets.csv").write_text("\n".join(basket_lines) + "\n", encoding="utf-8")
    return manifest


def prototype_dataset(
    rng: np.random.Generator,
    n_prototypes: int = 30,
    train_copies: int = 5,
    test_copies: int = 2,
    points: int = 48,
    width: int = 19,
) -> list[tuple[str, PointCloud, ProductBasket]]:
    """Clustered dataset: per prototype, several jittered rigid copies sharing
    one distinct basket. Entries are (id, scan, basket)."""
    baskets = distinct_baskets(rng, n_prototypes, width)
    entries = []
    for pi in range(n_prototypes):
        proto = log_like_cloud(rng, points)
        for ci in range(train_copies + test_copies):
            entries.append((f"log{pi:02d}_{ci}", jittered_copy(rng, proto), baskets[pi]))
    return entries
