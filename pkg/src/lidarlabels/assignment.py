"""Label assignment for mixed-grained supervision.

Center-based assignment places every label (accurate box or coarse cluster)
at the BEV cell of its cluster center, which removes the inconsistency
between box centers and cluster centers. Box-based assignment matches
candidate boxes to labels by point-level box-cluster IoU. The sample
partition S_a / S_c / S_n feeds the loss combination: every sample
contributes classification, only S_a contributes regression.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .clusters import ClusterLabel, LabelSet, cluster_center
from .geometry import Box3D, PointCloud, point_set_iou, points_in_box


@dataclass(frozen=True)
class BevGrid:
    """Uniform BEV grid used as the candidate set for center assignment."""

    x_range: tuple[float, float]
    y_range: tuple[float, float]
    cell_size: float

    def __post_init__(self):
        if self.cell_size <= 0:
            raise ValueError("cell_size must be positive")

    @property
    def nx(self) -> int:
        return int(math.ceil((self.x_range[1] - self.x_range[0]) / self.cell_size))

    @property
    def ny(self) -> int:
        return int(math.ceil((self.y_range[1] - self.y_range[0]) / self.cell_size))

    def cell_of(self, x: float, y: float) -> tuple[int, int] | None:
        ix = int(math.floor((x - self.x_range[0]) / self.cell_size))
        iy = int(math.floor((y - self.y_range[0]) / self.cell_size))
        if 0 <= ix < self.nx and 0 <= iy < self.ny:
            return ix, iy
        return None

    def cell_to_sample_id(self, ix: int, iy: int) -> int:
        return ix * self.ny + iy


@dataclass(frozen=True)
class Sample:
    sample_id: int
    matched_instance: int | None
    class_target: int
    regression_target: Box3D | None = None


@dataclass
class AssignmentPartition:
    """Disjoint sample sets: accurate, coarse, negative.

    ``ignored`` holds box-assignment candidates in the IoU band between the
    negative and positive thresholds; they belong to no set and are excluded
    from the loss. ``out_of_range`` reports labels whose center misses the
    grid; ``collisions`` reports labels displaced from an occupied cell.
    """

    s_a: list[Sample] = field(default_factory=list)
    s_c: list[Sample] = field(default_factory=list)
    s_n: list[Sample] = field(default_factory=list)

    ignored: list[Sample] = field(default_factory=list)
    out_of_range: list[int] = field(default_factory=list)
    collisions: list[int] = field(default_factory=list)

    def check_disjoint_cover(self, candidate_ids: set[int]):
        ids_a = {s.sample_id for s in self.s_a}
        ids_c = {s.sample_id for s in self.s_c}
        ids_n = {s.sample_id for s in self.s_n}
        ids_i = {s.sample_id for s in self.ignored}
        if ids_a & ids_c or ids_a & ids_n or ids_c & ids_n:
            raise ValueError("sample sets are not disjoint")
        if ids_a | ids_c | ids_n | ids_i != candidate_ids:
            raise ValueError("sample sets do not cover the candidates")

    def all_samples(self) -> list[Sample]:
        return self.s_a + self.s_c + self.s_n


def center_assign(
    labelset: LabelSet, cloud: PointCloud, grid: BevGrid
) -> AssignmentPartition:
    """Assign every label to the BEV cell of its cluster center.

    Box labels use the center of their *enclosed cluster*, not the geometric
    box center, so coarse and accurate labels share one target definition;
    the box itself becomes the regression target. All unclaimed cells are
    negatives. When two labels land in the same cell the box label wins,
    then the smaller instance_id; displaced labels are reported.
    """
    # (is_cluster_only, instance_id) sorts boxes first, then by id.
    entries: list[tuple[bool, int, ClusterLabel, Box3D | None]] = []
    for box, enclosed in labelset.boxes:
        entries.append((False, enclosed.instance_id, enclosed, box))
    for cl in labelset.clusters:
        entries.append((True, cl.instance_id, cl, None))
    entries.sort(key=lambda e: (e[0], e[1]))

    part = AssignmentPartition()
    claimed: dict[int, Sample] = {}
    for is_cluster_only, instance_id, cl, box in entries:
        cx, cy, _ = cluster_center(cl, cloud)
        cell = grid.cell_of(cx, cy)
        if cell is None:
            part.out_of_range.append(instance_id)
            continue
        sid = grid.cell_to_sample_id(*cell)
        if sid in claimed:
            part.collisions.append(instance_id)
            continue
        sample = Sample(
            sample_id=sid,
            matched_instance=instance_id,
            class_target=cl.class_id,
            regression_target=box,
        )
        claimed[sid] = sample
        (part.s_c if is_cluster_only else part.s_a).append(sample)

    for ix in range(grid.nx):
        for iy in range(grid.ny):
            sid = grid.cell_to_sample_id(ix, iy)
            if sid not in claimed:
                part.s_n.append(Sample(sample_id=sid, matched_instance=None, class_target=0))

    part.s_a.sort(key=lambda s: s.sample_id)
    part.s_c.sort(key=lambda s: s.sample_id)
    part.s_n.sort(key=lambda s: s.sample_id)
    return part


def box_cluster_iou(cloud: PointCloud, candidate: Box3D, label: ClusterLabel) -> float:
    """Point-level IoU between the candidate's interior points and a cluster."""
    return point_set_iou(points_in_box(cloud, candidate), label.points)


def box_assign(
    cloud: PointCloud,
    candidates: list[Box3D],
    labelset: LabelSet,
    pos_thresh: float = 0.55,
    neg_thresh: float = 0.45,
) -> AssignmentPartition:
    """Match candidates to labels by maximal box-cluster IoU.

    IoU >= pos_thresh puts the candidate in S_a (matched label is a box) or
    S_c (cluster-only); IoU < neg_thresh puts it in S_n; the band in between
    is reported as ignored. Ties break toward the smaller instance_id.
    """
    if not 0 <= neg_thresh <= pos_thresh <= 1:
        raise ValueError("thresholds must satisfy 0 <= neg <= pos <= 1")

    labels: list[tuple[int, ClusterLabel, Box3D | None]] = []
    for box, enclosed in labelset.boxes:
        labels.append((enclosed.instance_id, enclosed, box))
    for cl in labelset.clusters:
        labels.append((cl.instance_id, cl, None))
    labels.sort(key=lambda e: e[0])

    part = AssignmentPartition()
    for i, cand in enumerate(candidates):
        cand_points = points_in_box(cloud, cand)
        best_iou, best = 0.0, None
        for instance_id, cl, box in labels:
            iou = point_set_iou(cand_points, cl.points)
            if iou > best_iou:  # labels sorted by id, so first max wins ties
                best_iou, best = iou, (instance_id, cl, box)
        if best is not None and best_iou >= pos_thresh:
            instance_id, cl, box = best
            sample = Sample(
                sample_id=i,
                matched_instance=instance_id,
                class_target=cl.class_id,
                regression_target=box,
            )
            (part.s_a if box is not None else part.s_c).append(sample)
        elif best_iou < neg_thresh:
            part.s_n.append(Sample(sample_id=i, matched_instance=None, class_target=0))
        elif best is None:
            part.ignored.append(Sample(sample_id=i, matched_instance=None, class_target=0))
        else:
            instance_id, cl, _ = best
            part.ignored.append(
                Sample(sample_id=i, matched_instance=instance_id, class_target=cl.class_id)
            )
    return part


def combine_loss(
    partition: AssignmentPartition,
    cls_losses: dict[int, float],
    reg_losses: dict[int, float],
) -> float:
    """Total loss: mean classification over S_a u S_c u S_n plus mean
    regression over S_a (zero when S_a is empty)."""
    samples = partition.all_samples()
    try:
        cls_total = sum(cls_losses[s.sample_id] for s in samples)
    except KeyError as exc:
        raise KeyError(f"missing classification loss for sample {exc.args[0]}")
    total = cls_total / len(samples) if samples else 0.0
    if partition.s_a:
        try:
            reg_total = sum(reg_losses[s.sample_id] for s in partition.s_a)
        except KeyError as exc:
            raise KeyError(f"missing regression loss for sample {exc.args[0]}")
        total += reg_total / len(partition.s_a)
    return total


@dataclass(frozen=True)
class PerturbationOutcome:
    membership_changed: bool
    iou_before: float
    iou_after: float

    @property
    def iou_changed(self) -> bool:
        return self.iou_before != self.iou_after


def iou_ambiguity_probe(
    cloud: PointCloud,
    candidate: Box3D,
    label: ClusterLabel,
    perturbations: list[tuple[tuple[float, float, float], tuple[float, float, float], float]],
) -> list[PerturbationOutcome]:
    """Certify, per perturbation, whether box-cluster IoU is insensitive.

    Each perturbation is (center delta, dims delta, yaw delta). IoU can only
    change when the in-box point set changes, so perturbations preserving
    membership must report a delta of exactly zero.
    """
    from dataclasses import replace

    base_points = points_in_box(cloud, candidate)
    base_iou = point_set_iou(base_points, label.points)
    outcomes = []
    for dc, dd, dyaw in perturbations:
        moved = replace(
            candidate,
            center=tuple(c + d for c, d in zip(candidate.center, dc)),
            dims=tuple(s + d for s, d in zip(candidate.dims, dd)),
            yaw=candidate.yaw + dyaw,
        )
        moved_points = points_in_box(cloud, moved)
        changed = not (
            len(moved_points) == len(base_points)
            and (moved_points.indices == base_points.indices).all()
        )
        outcomes.append(
            PerturbationOutcome(
                membership_changed=changed,
                iou_before=base_iou,
                iou_after=point_set_iou(moved_points, label.points),
            )
        )
    return outcomes
