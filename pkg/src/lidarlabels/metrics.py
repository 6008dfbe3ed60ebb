"""Panoptic quality over instance clusters and point-level segmentation mIoU."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .clusters import ClusterLabel
from .geometry import point_set_iou


@dataclass
class ClassPanopticStat:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    iou_sum: float = 0.0

    @property
    def sq(self) -> float:
        return self.iou_sum / self.tp if self.tp > 0 else 0.0

    @property
    def rq(self) -> float:
        denom = self.tp + self.fp / 2.0 + self.fn / 2.0
        return self.tp / denom if denom > 0 else 0.0

    @property
    def pq(self) -> float:
        return self.sq * self.rq

    def merge(self, other: "ClassPanopticStat"):
        self.tp += other.tp
        self.fp += other.fp
        self.fn += other.fn
        self.iou_sum += other.iou_sum


@dataclass
class PanopticReport:
    """Per-class and mean PQ/SQ/RQ for thing classes.

    The mean is taken over classes present in the ground truth; classes
    present only in predictions still surface in ``per_class`` with their
    false positives.
    """

    per_class: dict[int, ClassPanopticStat] = field(default_factory=dict)
    gt_classes: set[int] = field(default_factory=set)

    def stat(self, class_id: int) -> ClassPanopticStat:
        return self.per_class.setdefault(class_id, ClassPanopticStat())

    def merge(self, other: "PanopticReport"):
        for cid, stat in other.per_class.items():
            self.stat(cid).merge(stat)
        self.gt_classes |= other.gt_classes

    def _mean(self, attr: str) -> float:
        classes = sorted(self.gt_classes)
        if not classes:
            return 0.0
        return sum(getattr(self.stat(c), attr) for c in classes) / len(classes)

    @property
    def pq(self) -> float:
        return self._mean("pq")

    @property
    def sq(self) -> float:
        return self._mean("sq")

    @property
    def rq(self) -> float:
        return self._mean("rq")

    def to_dict(self) -> dict:
        return {
            "mean": {"PQ": self.pq, "SQ": self.sq, "RQ": self.rq},
            "per_class": {
                str(cid): {
                    "PQ": stat.pq,
                    "SQ": stat.sq,
                    "RQ": stat.rq,
                    "TP": stat.tp,
                    "FP": stat.fp,
                    "FN": stat.fn,
                }
                for cid, stat in sorted(self.per_class.items())
            },
        }


def panoptic_eval(
    pred: list[ClusterLabel],
    gt: list[ClusterLabel],
    iou_match: float = 0.5,
) -> PanopticReport:
    """Match predicted and GT instances of the same class at IoU > iou_match.

    With a threshold of at least 0.5 the matching is unique, so a greedy
    scan suffices. SQ is the mean matched IoU, RQ = TP/(TP + FP/2 + FN/2),
    and PQ = SQ * RQ per class; means are over GT-present classes.
    """
    report = PanopticReport()
    report.gt_classes = {g.class_id for g in gt}
    classes = report.gt_classes | {p.class_id for p in pred}
    for cid in sorted(classes):
        stat = report.stat(cid)
        preds = [p for p in pred if p.class_id == cid]
        gts = [g for g in gt if g.class_id == cid]
        matched_pred: set[int] = set()
        for g in gts:
            best_iou, best_j = 0.0, None
            for j, p in enumerate(preds):
                if j in matched_pred:
                    continue
                iou = point_set_iou(p.points, g.points)
                if iou > best_iou:
                    best_iou, best_j = iou, j
            if best_j is not None and best_iou > iou_match:
                matched_pred.add(best_j)
                stat.tp += 1
                stat.iou_sum += best_iou
            else:
                stat.fn += 1
        stat.fp += len(preds) - len(matched_pred)
    return report


def labels_to_point_classes(labels: list[ClusterLabel], n_points: int) -> np.ndarray:
    """Dense per-point class array (0 = background) from cluster labels."""
    classes = np.zeros(n_points, dtype=np.int64)
    for label in labels:
        classes[label.points.indices] = label.class_id
    return classes


def segmentation_miou(
    pred_classes: np.ndarray, gt_classes: np.ndarray
) -> tuple[dict[int, float], float]:
    """Per-class point-level IoU and its mean over foreground classes
    present in either labeling."""
    if pred_classes.shape != gt_classes.shape:
        raise ValueError("labelings must cover the same points")
    classes = sorted(
        set(np.unique(pred_classes)) | set(np.unique(gt_classes)) - {0}
    )
    classes = [int(c) for c in classes if c != 0]
    per_class: dict[int, float] = {}
    for cid in classes:
        p = pred_classes == cid
        g = gt_classes == cid
        union = int(np.sum(p | g))
        inter = int(np.sum(p & g))
        per_class[cid] = inter / union if union > 0 else 0.0
    mean = sum(per_class.values()) / len(per_class) if per_class else 0.0
    return per_class, mean
