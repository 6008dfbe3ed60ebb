"""Upgrading coarse clusters to boxes: L-shape pseudo-box fitting and the
self-training replacement rule (high-score pseudo boxes replace matching
cluster-only labels).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .assignment import box_cluster_iou
from .clusters import ClusterLabel, LabelSet
from .geometry import Box3D, PointCloud, points_in_box

MIN_EDGE_DISTANCE = 0.01  # meters; clamp before inverting in the closeness score
MIN_DIM = 0.01  # degenerate (collinear) clusters still need positive dims
FIT_MARGIN = 1e-9  # keeps boundary points inside after the rotation round-trip

SELFTRAIN_SCORE_THRESH = 0.7
SELFTRAIN_MATCH_IOU = 0.25


@dataclass(frozen=True)
class PseudoBox:
    """Box fitted from a cluster; shape and heading are unreliable by
    construction (theta vs theta+pi and length vs width are indistinguishable)."""

    box: Box3D
    shape_reliable: bool = False
    heading_reliable: bool = False


def _closeness_score(c1: np.ndarray, c2: np.ndarray) -> float:
    """Sum of inverse distances to the nearer rectangle edge."""
    d1 = np.minimum(c1 - c1.min(), c1.max() - c1)
    d2 = np.minimum(c2 - c2.min(), c2.max() - c2)
    d = np.maximum(np.minimum(d1, d2), MIN_EDGE_DISTANCE)
    return float(np.sum(1.0 / d))


def fit_lshape(
    cloud: PointCloud, label: ClusterLabel, angle_step_deg: float = 1.0
) -> PseudoBox:
    """Fit an oriented BEV rectangle to a cluster by heading search.

    Headings in [0, 90) degrees are scanned at ``angle_step_deg``; each
    candidate projects the BEV points onto its axis pair and is scored by
    the closeness criterion. The best heading's bounding rectangle plus the
    cluster z-extent gives the box.
    """
    if len(label.points) < 3:
        raise ValueError("L-shape fitting needs at least 3 points")
    pts = cloud.xyz[label.points.indices]
    bev = pts[:, :2]

    best_score, best_theta = -math.inf, 0.0
    theta = 0.0
    step = math.radians(angle_step_deg)
    while theta < math.pi / 2.0:
        e1 = np.array([math.cos(theta), math.sin(theta)])
        e2 = np.array([-math.sin(theta), math.cos(theta)])
        score = _closeness_score(bev @ e1, bev @ e2)
        if score > best_score:
            best_score, best_theta = score, theta
        theta += step

    e1 = np.array([math.cos(best_theta), math.sin(best_theta)])
    e2 = np.array([-math.sin(best_theta), math.cos(best_theta)])
    c1, c2 = bev @ e1, bev @ e2
    mid1 = (c1.min() + c1.max()) / 2.0
    mid2 = (c2.min() + c2.max()) / 2.0
    center_bev = mid1 * e1 + mid2 * e2
    z_lo, z_hi = pts[:, 2].min(), pts[:, 2].max()
    box = Box3D(
        center=(float(center_bev[0]), float(center_bev[1]), float((z_lo + z_hi) / 2.0)),
        dims=(
            max(float(c1.max() - c1.min()) + FIT_MARGIN, MIN_DIM),
            max(float(c2.max() - c2.min()) + FIT_MARGIN, MIN_DIM),
            max(float(z_hi - z_lo) + FIT_MARGIN, MIN_DIM),
        ),
        yaw=best_theta,
        class_id=label.class_id,
    )
    return PseudoBox(box=box, shape_reliable=False, heading_reliable=False)


@dataclass
class MergeDiff:
    replaced: int = 0
    discarded: int = 0
    below_threshold: int = 0
    replaced_instances: list[int] = field(default_factory=list)


def selftrain_merge(
    labelset: LabelSet,
    pseudo: list[Box3D],
    cloud: PointCloud,
    score_thresh: float = SELFTRAIN_SCORE_THRESH,
    match_iou: float = SELFTRAIN_MATCH_IOU,
) -> tuple[LabelSet, MergeDiff]:
    """One self-training round: promote matching clusters to pseudo boxes.

    Pseudo boxes with score > score_thresh are taken in descending score
    order and greedily matched to cluster-only labels by box-cluster IoU;
    a matched cluster is replaced by the pseudo box (which keeps the
    cluster's instance ID and encloses its own interior points). Unmatched
    or point-free pseudo boxes are discarded; accurate boxes are never
    touched.
    """
    if not (0 <= score_thresh <= 1 and 0 <= match_iou <= 1):
        raise ValueError("thresholds must lie in [0, 1]")
    diff = MergeDiff()
    eligible = []
    for i, box in enumerate(pseudo):
        if box.score is None:
            raise ValueError(f"pseudo box {i} has no score")
        if box.score > score_thresh:
            eligible.append((i, box))
        else:
            diff.below_threshold += 1
    eligible.sort(key=lambda e: (-e[1].score, e[0]))

    clusters = sorted(labelset.clusters, key=lambda c: c.instance_id)
    boxes = list(labelset.boxes)
    for _, box in eligible:
        best_iou, best = 0.0, None
        for cl in clusters:
            iou = box_cluster_iou(cloud, box, cl)
            if iou > best_iou:
                best_iou, best = iou, cl
        enclosed = points_in_box(cloud, box)
        if best is None or best_iou < match_iou or len(enclosed) == 0:
            diff.discarded += 1
            continue
        clusters.remove(best)
        boxes.append(
            (box, ClusterLabel(enclosed, box.class_id, best.instance_id))
        )
        diff.replaced += 1
        diff.replaced_instances.append(best.instance_id)

    merged = LabelSet(scene_id=labelset.scene_id, clusters=clusters, boxes=boxes)
    return merged, diff
