"""Point-cloud primitives: oriented-box containment, point-set IoU,
radius-graph connected components, BEV polygon tests.

All functions are pure; point indices are the canonical identity of points
and are never reordered.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class DegeneratePolygonError(ValueError):
    """Raised for a BEV polygon with zero area (invalid annotation)."""


@dataclass(frozen=True)
class PointCloud:
    """Ordered set of 3D points, optionally with intensity.

    ``xyz`` is an (N, 3) float64 array; index i is the identity of point i.
    """

    xyz: np.ndarray
    intensity: np.ndarray | None = None
    scene_id: str = ""

    def __post_init__(self):
        xyz = np.asarray(self.xyz, dtype=np.float64)
        if xyz.ndim != 2 or xyz.shape[1] != 3:
            raise ValueError(f"xyz must be (N, 3), got {xyz.shape}")
        if not np.all(np.isfinite(xyz)):
            raise ValueError("point coordinates must be finite")
        object.__setattr__(self, "xyz", xyz)
        if self.intensity is not None:
            inten = np.asarray(self.intensity, dtype=np.float64)
            if inten.shape != (len(xyz),):
                raise ValueError("intensity length must match point count")
            object.__setattr__(self, "intensity", inten)

    def __len__(self) -> int:
        return len(self.xyz)


def normalize_yaw(yaw: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    wrapped = math.fmod(yaw + math.pi, 2.0 * math.pi)
    if wrapped <= 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


@dataclass(frozen=True)
class Box3D:
    """Oriented 3D box: center, (length, width, height), yaw about +z."""

    center: tuple[float, float, float]
    dims: tuple[float, float, float]
    yaw: float
    class_id: int = 0
    score: float | None = None

    def __post_init__(self):
        if any(d <= 0 for d in self.dims):
            raise ValueError(f"box dims must be strictly positive, got {self.dims}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "dims", tuple(float(d) for d in self.dims))
        object.__setattr__(self, "yaw", normalize_yaw(float(self.yaw)))

    def corners_bev(self) -> np.ndarray:
        """The four BEV corners, counter-clockwise, as a (4, 2) array."""
        l, w = self.dims[0] / 2.0, self.dims[1] / 2.0
        local = np.array([[l, w], [-l, w], [-l, -w], [l, -w]])
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.array(self.center[:2])


@dataclass(frozen=True)
class PointIndexSet:
    """Sorted unique point indices into one PointCloud."""

    indices: np.ndarray

    def __post_init__(self):
        idx = np.unique(np.asarray(self.indices, dtype=np.int64))
        object.__setattr__(self, "indices", idx)

    def __len__(self) -> int:
        return len(self.indices)

    def as_set(self) -> set[int]:
        return set(int(i) for i in self.indices)


def box_frame_coords(cloud: PointCloud, box: Box3D) -> np.ndarray:
    """Coordinates of all points expressed in the box frame."""
    d = cloud.xyz - np.array(box.center)
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    out = np.empty_like(d)
    out[:, 0] = c * d[:, 0] + s * d[:, 1]
    out[:, 1] = -s * d[:, 0] + c * d[:, 1]
    out[:, 2] = d[:, 2]
    return out


def points_in_box(cloud: PointCloud, box: Box3D) -> PointIndexSet:
    """Indices of points inside the oriented box (closed containment)."""
    local = box_frame_coords(cloud, box)
    half = np.array(box.dims) / 2.0
    inside = np.all(np.abs(local) <= half, axis=1)
    return PointIndexSet(np.flatnonzero(inside))


def point_set_iou(a: PointIndexSet, b: PointIndexSet) -> float:
    """|a n b| / |a u b|; 0 when both sets are empty."""
    n_inter = len(np.intersect1d(a.indices, b.indices, assume_unique=True))
    n_union = len(a) + len(b) - n_inter
    if n_union == 0:
        return 0.0
    return n_inter / n_union


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        root = i
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[i] != root:
            self.parent[i], i = root, self.parent[i]
        return root

    def union(self, i: int, j: int):
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            self.parent[max(ri, rj)] = min(ri, rj)


def connected_components(
    cloud: PointCloud, subset: PointIndexSet, radius: float
) -> dict[int, int]:
    """Radius-graph connected components over a subset of the cloud.

    Two points share a component iff a chain of pairwise distances <= radius
    links them. Returns {point_index: component_id}; component IDs are
    assigned by ascending smallest member index, so the output is
    reproducible byte-for-byte.

    Uses a uniform grid with cell size = radius, so only the 27 neighbor
    cells must be scanned per point.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    idx = subset.indices
    if len(idx) == 0:
        return {}
    pts = cloud.xyz[idx]
    cells = np.floor(pts / radius).astype(np.int64)
    grid: dict[tuple[int, int, int], list[int]] = {}
    for local_i, cell in enumerate(map(tuple, cells)):
        grid.setdefault(cell, []).append(local_i)

    uf = _UnionFind(len(idx))
    r2 = radius * radius
    offsets = [
        (dx, dy, dz)
        for dx in (-1, 0, 1)
        for dy in (-1, 0, 1)
        for dz in (-1, 0, 1)
    ]
    for cell, members in grid.items():
        for off in offsets:
            neighbor = (cell[0] + off[0], cell[1] + off[1], cell[2] + off[2])
            if neighbor < cell:
                continue  # each unordered cell pair visited once
            others = grid.get(neighbor)
            if others is None:
                continue
            for i in members:
                for j in others:
                    if neighbor == cell and j <= i:
                        continue
                    d = pts[i] - pts[j]
                    if d[0] * d[0] + d[1] * d[1] + d[2] * d[2] <= r2:
                        uf.union(i, j)

    # Component IDs ordered by smallest member point index.
    root_to_id: dict[int, int] = {}
    labeling: dict[int, int] = {}
    for local_i in range(len(idx)):  # idx is sorted ascending
        root = uf.find(local_i)
        if root not in root_to_id:
            root_to_id[root] = len(root_to_id)
        labeling[int(idx[local_i])] = root_to_id[root]
    return labeling


def polygon_signed_area(polygon: np.ndarray) -> float:
    x, y = polygon[:, 0], polygon[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def bev_polygon_contains(polygon: np.ndarray, point: tuple[float, float]) -> bool:
    """Closed containment of a 2D point in a convex BEV quadrilateral."""
    poly = np.asarray(polygon, dtype=np.float64)
    area = polygon_signed_area(poly)
    if area == 0.0:
        raise DegeneratePolygonError("polygon has zero area")
    if area < 0:
        poly = poly[::-1]
    px, py = point
    for i in range(len(poly)):
        ax, ay = poly[i]
        bx, by = poly[(i + 1) % len(poly)]
        cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
        if cross < 0.0:
            return False
    return True


def bev_polygon_contains_many(polygon: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Vectorized closed containment test for an (M, 2) batch of points."""
    poly = np.asarray(polygon, dtype=np.float64)
    area = polygon_signed_area(poly)
    if area == 0.0:
        raise DegeneratePolygonError("polygon has zero area")
    if area < 0:
        poly = poly[::-1]
    inside = np.ones(len(points), dtype=bool)
    for i in range(len(poly)):
        a = poly[i]
        b = poly[(i + 1) % len(poly)]
        cross = (b[0] - a[0]) * (points[:, 1] - a[1]) - (b[1] - a[1]) * (
            points[:, 0] - a[0]
        )
        inside &= cross >= 0.0
    return inside
