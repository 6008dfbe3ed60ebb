"""Coarse cluster-level labels: generation from noisy boxes or 3-click
annotations, accurate-box budget selection, and annotation cost accounting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import (
    Box3D,
    PointCloud,
    PointIndexSet,
    bev_polygon_contains_many,
    normalize_yaw,
    points_in_box,
)

CLUSTER_COST_FRACTION = 0.14  # labeling one cluster costs 14% of one box

# Default z-band for click-protocol clusters, relative to the sensor.
DEFAULT_Z_BOUNDS = (-3.0, 5.0)


class EmptyClusterError(ValueError):
    pass


class CollinearClicksError(ValueError):
    pass


@dataclass(frozen=True)
class ClusterLabel:
    """Coarse semantic label: point set + class + per-scene instance ID."""

    points: PointIndexSet
    class_id: int
    instance_id: int

    def __post_init__(self):
        if len(self.points) == 0:
            raise EmptyClusterError("cluster label must contain at least one point")


@dataclass
class LabelSet:
    """Mixed-grained labels for one scene.

    ``boxes`` pairs each accurate box with its enclosed cluster; cluster and
    box instance IDs never collide.
    """

    scene_id: str
    clusters: list[ClusterLabel] = field(default_factory=list)
    boxes: list[tuple[Box3D, ClusterLabel]] = field(default_factory=list)

    def all_instance_ids(self) -> list[int]:
        return [c.instance_id for c in self.clusters] + [
            c.instance_id for _, c in self.boxes
        ]

    def validate(self, cloud: PointCloud):
        ids = self.all_instance_ids()
        if len(ids) != len(set(ids)):
            raise ValueError(f"duplicate instance_id in scene {self.scene_id}")
        for box, cluster in self.boxes:
            enclosed = points_in_box(cloud, box)
            if not np.array_equal(enclosed.indices, cluster.points.indices):
                raise ValueError(
                    f"box {cluster.instance_id}: enclosed cluster does not match "
                    "points_in_box"
                )


@dataclass(frozen=True)
class NoiseModel:
    """Box perturbation for mimicking coarse-label noise.

    shift_range: uniform BEV center shift per axis, +-meters
    expand_range: uniform dimension growth, fraction in [0, expand_range]
    rotate_range: uniform yaw perturbation, +-radians
    """

    shift_range: float = 0.0
    expand_range: float = 0.0
    rotate_range: float = 0.0

    def __post_init__(self):
        if self.shift_range < 0 or self.expand_range < 0 or self.rotate_range < 0:
            raise ValueError("noise ranges must be nonnegative")

    def perturb(self, box: Box3D, rng: np.random.Generator) -> Box3D:
        sx, sy = rng.uniform(-self.shift_range, self.shift_range, size=2)
        ex, ey, ez = rng.uniform(0.0, self.expand_range, size=3)
        dyaw = rng.uniform(-self.rotate_range, self.rotate_range)
        return replace(
            box,
            center=(box.center[0] + sx, box.center[1] + sy, box.center[2]),
            dims=(
                box.dims[0] * (1.0 + ex),
                box.dims[1] * (1.0 + ey),
                box.dims[2] * (1.0 + ez),
            ),
            yaw=normalize_yaw(box.yaw + dyaw),
        )


# Named presets for the standard coarse-label noise studies.
NOISE_PRESETS = {
    "noise0": NoiseModel(expand_range=0.10),
    "noise1": NoiseModel(shift_range=0.1, expand_range=0.50),
    "noise2": NoiseModel(
        shift_range=0.2, expand_range=0.20, rotate_range=math.radians(15.0)
    ),
}


@dataclass(frozen=True)
class CostReport:
    """Annotation cost: (n_box + 0.14 * n_cluster) / n_total."""

    n_box: int
    n_cluster: int
    n_total: int
    cost: float


def cluster_center(label: ClusterLabel, cloud: PointCloud) -> tuple[float, float, float]:
    """Per-axis midpoint of the cluster's coordinate extents."""
    pts = cloud.xyz[label.points.indices]
    if len(pts) == 0:
        raise EmptyClusterError("cannot compute center of empty cluster")
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    mid = (lo + hi) / 2.0
    return (float(mid[0]), float(mid[1]), float(mid[2]))


def clusters_from_boxes(
    cloud: PointCloud,
    gt_boxes: list[Box3D],
    noise: NoiseModel,
    seed: int,
    instance_ids: list[int] | None = None,
) -> tuple[list[ClusterLabel], list[int]]:
    """Crop noisy-box interiors into cluster labels.

    Each GT box is perturbed by the noise model, then its interior points
    become a cluster carrying the box's class. Boxes whose noisy interior is
    empty are dropped; their positions in ``gt_boxes`` are returned so the
    caller can report them. ``instance_ids`` overrides the default
    sequential numbering (useful to inherit the GT box IDs).
    """
    rng = np.random.default_rng(seed)
    clusters: list[ClusterLabel] = []
    dropped: list[int] = []
    for i, box in enumerate(gt_boxes):
        noisy = noise.perturb(box, rng)
        inside = points_in_box(cloud, noisy)
        if len(inside) == 0:
            dropped.append(i)
            continue
        instance = instance_ids[i] if instance_ids is not None else len(clusters)
        clusters.append(ClusterLabel(inside, box.class_id, instance))
    return clusters, dropped


def parallelogram_from_clicks(clicks: np.ndarray) -> np.ndarray:
    """Complete 3 BEV clicks (corner A first) into a parallelogram.

    Fourth vertex is B + C - A; vertex order A, B, D, C traces the boundary.
    """
    a, b, c = np.asarray(clicks, dtype=np.float64)
    cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    if cross == 0.0:
        raise CollinearClicksError("the three clicks are collinear")
    d = b + c - a
    return np.array([a, b, d, c])


def cluster_from_clicks(
    cloud: PointCloud,
    clicks: np.ndarray,
    class_id: int,
    instance_id: int = 0,
    z_bounds: tuple[float, float] = DEFAULT_Z_BOUNDS,
) -> ClusterLabel:
    """Cluster from the 3-click BEV parallelogram protocol.

    The click protocol gives no height, so membership is decided in BEV with
    z restricted to the configured scene band.
    """
    poly = parallelogram_from_clicks(clicks)
    inside = bev_polygon_contains_many(poly, cloud.xyz[:, :2])
    inside &= (cloud.xyz[:, 2] >= z_bounds[0]) & (cloud.xyz[:, 2] <= z_bounds[1])
    indices = np.flatnonzero(inside)
    if len(indices) == 0:
        raise EmptyClusterError("no points inside the clicked parallelogram")
    return ClusterLabel(PointIndexSet(indices), class_id, instance_id)


def select_budget(
    n_boxes: int,
    ratio: float,
    seed: int,
    class_ids: list[int] | None = None,
    class_weights: dict[int, float] | None = None,
) -> tuple[list[int], list[int]]:
    """Pick the accurate-box budget by weighted sampling without replacement.

    Selects round(ratio * n_boxes) box indices (at least 1 when any box
    exists); the remainder become cluster-only labels. Rare classes can be
    oversampled via ``class_weights``. Deterministic given the seed.
    """
    if not 0 < ratio <= 1:
        raise ValueError("ratio must be in (0, 1]")
    if n_boxes == 0:
        return [], []
    k = int(round(ratio * n_boxes))
    k = min(max(k, 1), n_boxes)

    weights = np.ones(n_boxes, dtype=np.float64)
    if class_weights:
        if class_ids is None:
            raise ValueError("class_weights given without class_ids")
        for i, cid in enumerate(class_ids):
            weights[i] = class_weights.get(cid, 1.0)

    rng = np.random.default_rng(seed)
    remaining = list(range(n_boxes))
    selected: list[int] = []
    for _ in range(k):
        w = weights[remaining]
        probs = w / w.sum()
        pick = int(rng.choice(len(remaining), p=probs))
        selected.append(remaining.pop(pick))
    selected.sort()
    remainder = sorted(set(range(n_boxes)) - set(selected))
    return selected, remainder


def annotation_cost(n_box: int, n_cluster: int, n_total: int) -> CostReport:
    """Unified annotation cost with the 0.14 cluster coefficient."""
    if n_total == 0:
        raise ValueError("n_total must be positive")
    if n_total < n_box + n_cluster:
        raise ValueError("n_total smaller than counted labels")
    cost = (n_box + CLUSTER_COST_FRACTION * n_cluster) / n_total
    return CostReport(n_box=n_box, n_cluster=n_cluster, n_total=n_total, cost=cost)


@dataclass(frozen=True)
class CropRegion:
    """One noisy crop: interior points in the perturbed box frame."""

    points_local: np.ndarray
    source_index: int
    perturbed_box: Box3D
    empty: bool


def pilot_crop_regions(
    cloud: PointCloud, proposals: list[Box3D], seed: int
) -> list[CropRegion]:
    """Noisy region crops around proposals.

    Each proposal grows by 2 m in every dimension, shifts 0.2-0.5 m in a
    uniformly random BEV direction, and gets +-45 deg of yaw noise; interior
    points are re-expressed in the perturbed box frame. Empty regions are
    kept and flagged.
    """
    from .geometry import box_frame_coords

    rng = np.random.default_rng(seed)
    regions: list[CropRegion] = []
    for i, box in enumerate(proposals):
        mag = rng.uniform(0.2, 0.5)
        ang = rng.uniform(0.0, 2.0 * math.pi)
        dyaw = rng.uniform(-math.pi / 4.0, math.pi / 4.0)
        perturbed = replace(
            box,
            center=(
                box.center[0] + mag * math.cos(ang),
                box.center[1] + mag * math.sin(ang),
                box.center[2],
            ),
            dims=(box.dims[0] + 2.0, box.dims[1] + 2.0, box.dims[2] + 2.0),
            yaw=normalize_yaw(box.yaw + dyaw),
        )
        inside = points_in_box(cloud, perturbed)
        local = box_frame_coords(cloud, perturbed)[inside.indices]
        regions.append(
            CropRegion(
                points_local=local,
                source_index=i,
                perturbed_box=perturbed,
                empty=len(inside) == 0,
            )
        )
    return regions


AUGMENT_LEVELS = ("none", "center", "center+shape", "center+shape+heading")


@dataclass(frozen=True)
class AugmentedCluster:
    """Cluster plus optional geometric fields borrowed from its GT box."""

    cluster: ClusterLabel
    center: tuple[float, float, float] | None = None
    dims: tuple[float, float, float] | None = None
    yaw: float | None = None


def augment_cluster(label: ClusterLabel, gt: Box3D, level: str) -> AugmentedCluster:
    """Attach GT geometry to a cluster for supervision-roadmap experiments."""
    if level not in AUGMENT_LEVELS:
        raise ValueError(f"unknown augmentation level {level!r}")
    if level == "none":
        return AugmentedCluster(cluster=label)
    center = gt.center
    dims = gt.dims if "shape" in level else None
    yaw = gt.yaw if "heading" in level else None
    return AugmentedCluster(cluster=label, center=center, dims=dims, yaw=yaw)
