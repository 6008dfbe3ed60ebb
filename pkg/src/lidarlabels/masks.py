"""Lifting 2D instance masks onto LiDAR points and refining them with the
spatial separability of point clouds.

The front half (2D segmentation) is upstream; this module consumes per-pixel
instance/class maps, projects points into them, votes a semantic class per
mask by pixel count, and then runs separability-aware refinement: masks
spanning several spatial components are split (keeping the component where
the mask has the most points), and masks sharing a component are merged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .clusters import ClusterLabel
from .geometry import PointCloud, PointIndexSet, connected_components

BACKGROUND = 0

# Per-class clustering radii (meters); keys are class IDs, DEFAULT_RADIUS
# covers anything unlisted. Overridable from config.
DEFAULT_RADII = {1: 0.6, 2: 0.2, 3: 0.4}
DEFAULT_RADIUS = 0.5


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera: intrinsics, sensor-to-camera extrinsics, image size."""

    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray  # (3, 3), sensor -> camera
    translation: np.ndarray  # (3,)
    width: int
    height: int
    name: str = ""

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64))
        object.__setattr__(
            self, "translation", np.asarray(self.translation, dtype=np.float64)
        )


@dataclass(frozen=True)
class InstanceMasks2D:
    """Per-pixel instance IDs (0 = no mask) and semantic class IDs."""

    instance_map: np.ndarray  # (H, W) uint32
    class_map: np.ndarray  # (H, W) uint16

    def __post_init__(self):
        if self.instance_map.shape != self.class_map.shape:
            raise ValueError("instance and class maps must share dimensions")


@dataclass
class PointLabeling:
    """Per-point mask assignment: mask_id (-1 = none) and class (0 = background)."""

    mask_ids: np.ndarray  # (N,) int64, -1 where unassigned
    class_ids: np.ndarray  # (N,) int64, 0 where background

    def foreground(self) -> np.ndarray:
        return np.flatnonzero((self.mask_ids >= 0) & (self.class_ids != BACKGROUND))

    def copy(self) -> "PointLabeling":
        return PointLabeling(self.mask_ids.copy(), self.class_ids.copy())


def project_points(
    cloud: PointCloud, camera: CameraModel
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pinhole projection of all points into a camera image.

    Returns (in_view mask, (N, 2) pixel coordinates (u, v), (N,) depths).
    Points behind the camera or outside the image are out of view; pixel
    coordinates of out-of-view points are undefined.
    """
    cam = cloud.xyz @ camera.rotation.T + camera.translation
    z = cam[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = camera.fx * cam[:, 0] / z + camera.cx
        v = camera.fy * cam[:, 1] / z + camera.cy
    in_view = (z > 0) & (u >= 0) & (u < camera.width) & (v >= 0) & (v < camera.height)
    return in_view, np.stack([u, v], axis=1), z


def mask_semantic_classes(masks: InstanceMasks2D) -> dict[int, int]:
    """Semantic class per mask: the class with the highest pixel count."""
    inst = masks.instance_map.ravel()
    cls = masks.class_map.ravel()
    nonzero = inst != 0
    classes: dict[int, int] = {}
    for mask_id in np.unique(inst[nonzero]):
        votes = cls[nonzero & (inst == mask_id)]
        values, counts = np.unique(votes, return_counts=True)
        order = np.lexsort((values, -counts))  # majority, tie -> smaller class
        classes[int(mask_id)] = int(values[order[0]])
    return classes


def lift_masks(
    cloud: PointCloud,
    cameras: list[CameraModel],
    masks: list[InstanceMasks2D],
) -> PointLabeling:
    """Transfer 2D instance masks onto the points that project into them.

    A point visible in several cameras takes the labeling from the camera
    where its depth is smallest. Mask IDs from different cameras are kept
    distinct by offsetting with the camera index.
    """
    if len(cameras) != len(masks):
        raise ValueError("one mask set per camera required")
    n = len(cloud)
    mask_ids = np.full(n, -1, dtype=np.int64)
    class_ids = np.zeros(n, dtype=np.int64)
    best_depth = np.full(n, np.inf)

    for cam_index, (camera, m) in enumerate(zip(cameras, masks)):
        if m.instance_map.shape != (camera.height, camera.width):
            raise ValueError(
                f"mask dimensions {m.instance_map.shape} do not match camera "
                f"{camera.name or cam_index} image size {(camera.height, camera.width)}"
            )
        semantics = mask_semantic_classes(m)
        in_view, pix, depth = project_points(cloud, camera)
        idx = np.flatnonzero(in_view & (depth < best_depth))
        cols = np.floor(pix[idx, 0]).astype(np.int64)
        rows = np.floor(pix[idx, 1]).astype(np.int64)
        raw = m.instance_map[rows, cols].astype(np.int64)
        hit = raw != 0
        hit_idx = idx[hit]
        best_depth[idx] = depth[idx]  # nearest camera claims the point
        mask_ids[idx] = -1
        class_ids[idx] = BACKGROUND
        mask_ids[hit_idx] = raw[hit] + (cam_index << 32)
        class_ids[hit_idx] = [semantics[int(r)] for r in raw[hit]]
    return PointLabeling(mask_ids, class_ids)


def sar_refine(
    cloud: PointCloud,
    labeling: PointLabeling,
    radii: dict[int, float] | None = None,
    default_radius: float = DEFAULT_RADIUS,
) -> tuple[PointLabeling, dict]:
    """Separability-aware refinement of a point labeling.

    1. Connected components over the foreground, per class (points of
       different classes never connect), with per-class radii.
    2. Split: a mask spanning several components keeps its points only in
       the component where it has the most of them (tie: smaller component
       ID); its other points become background.
    3. Components are recomputed over the retained points so the final
       instances coincide exactly with spatial components, then all masks
       within a component merge into one instance whose class is the
       point-count majority (tie: smaller class ID).

    Instance IDs are reassigned by ascending smallest member point index.
    Returns the refined labeling and a diff report.
    """
    radii = dict(DEFAULT_RADII if radii is None else radii)

    def components_of(fg_indices: np.ndarray) -> dict[int, int]:
        comp: dict[int, int] = {}
        pieces = []
        for cls in np.unique(labeling.class_ids[fg_indices]):
            cls_idx = fg_indices[labeling.class_ids[fg_indices] == cls]
            radius = radii.get(int(cls), default_radius)
            pieces.append(connected_components(cloud, PointIndexSet(cls_idx), radius))
        # Renumber globally by smallest member index.
        firsts = []
        for piece in pieces:
            by_comp: dict[int, int] = {}
            for pt, cid in piece.items():
                by_comp[cid] = min(by_comp.get(cid, pt), pt)
            firsts.extend((first, piece, cid) for cid, first in by_comp.items())
        firsts.sort()
        for new_id, (_, piece, cid) in enumerate(firsts):
            for pt, c in piece.items():
                if c == cid:
                    comp[pt] = new_id
        return comp

    out = labeling.copy()
    fg = out.foreground()
    report = {"splits": 0, "merges": 0, "background_points": 0}
    if len(fg) == 0:
        return out, report

    comp = components_of(fg)

    # Split: keep each mask only in its strongest component.
    by_mask: dict[int, dict[int, list[int]]] = {}
    for pt in fg:
        by_mask.setdefault(int(out.mask_ids[pt]), {}).setdefault(comp[int(pt)], []).append(
            int(pt)
        )
    for mask_id, comps in by_mask.items():
        if len(comps) <= 1:
            continue
        report["splits"] += 1
        keep = max(comps, key=lambda cid: (len(comps[cid]), -cid))
        for cid, pts in comps.items():
            if cid == keep:
                continue
            for pt in pts:
                out.mask_ids[pt] = -1
                out.class_ids[pt] = BACKGROUND
                report["background_points"] += 1

    # Merge: recompute components on retained points; one instance each.
    fg = out.foreground()
    if len(fg) == 0:
        return out, report
    comp = components_of(fg)
    members: dict[int, list[int]] = {}
    for pt in fg:
        members.setdefault(comp[int(pt)], []).append(int(pt))

    new_mask_ids = np.full_like(out.mask_ids, -1)
    new_class_ids = np.zeros_like(out.class_ids)
    for cid in sorted(members, key=lambda c: min(members[c])):
        pts = members[cid]
        if len({int(out.mask_ids[p]) for p in pts}) > 1:
            report["merges"] += 1
        classes = np.array([out.class_ids[p] for p in pts])
        values, counts = np.unique(classes, return_counts=True)
        order = np.lexsort((values, -counts))
        cls = int(values[order[0]])
        instance = len(np.unique(new_mask_ids[new_mask_ids >= 0]))
        for pt in pts:
            new_mask_ids[pt] = instance
            new_class_ids[pt] = cls
    return PointLabeling(new_mask_ids, new_class_ids), report


def perturb_calibration(
    cameras: list[CameraModel], noise_cm: float, seed: int
) -> list[CameraModel]:
    """Translate each camera by independent uniform per-axis noise (+-cm)."""
    rng = np.random.default_rng(seed)
    amplitude = noise_cm / 100.0
    perturbed = []
    for camera in cameras:
        offset = rng.uniform(-amplitude, amplitude, size=3)
        perturbed.append(replace(camera, translation=camera.translation + offset))
    return perturbed


def labeling_to_clusters(labeling: PointLabeling) -> list[ClusterLabel]:
    """Turn refined instances into cluster labels; background is discarded.

    Instance IDs are assigned 0, 1, ... by ascending smallest point index.
    """
    fg = labeling.foreground()
    members: dict[int, list[int]] = {}
    for pt in fg:
        members.setdefault(int(labeling.mask_ids[pt]), []).append(int(pt))
    clusters = []
    for new_id, mask_id in enumerate(sorted(members, key=lambda m: min(members[m]))):
        pts = members[mask_id]
        clusters.append(
            ClusterLabel(
                points=PointIndexSet(np.array(pts, dtype=np.int64)),
                class_id=int(labeling.class_ids[pts[0]]),
                instance_id=new_id,
            )
        )
    return clusters
