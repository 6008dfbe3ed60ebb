"""Array-oriented in-process access to the lidarlabels pipeline.

Everything here is a thin adapter: scenes become opaque handles, partition
and labeling results become plain numpy arrays that training scripts can
feed to a model without touching the library's dataclasses. No algorithm is
reimplemented; every call delegates to the core package, so outputs are
bit-identical to what the CLI produces on the same inputs.

All bound operations are pure functions. Concurrent calls on distinct
BoundScene handles are safe; a single handle must not be mutated while a
call is in flight.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from lidarlabels.assignment import (
    AssignmentPartition,
    BevGrid,
    box_assign,
    center_assign,
    combine_loss,
)
from lidarlabels.clusters import (
    ClusterLabel,
    LabelSet,
    annotation_cost,
    clusters_from_boxes,
    select_budget,
)
from lidarlabels.geometry import Box3D, PointCloud
from lidarlabels.io import (
    derive_scene_seed,
    load_cloud,
    load_labels,
    load_manifest,
    resolve_noise,
)
from lidarlabels.masks import PointLabeling, sar_refine
from lidarlabels.metrics import panoptic_eval

__all__ = [
    "SET_ACCURATE",
    "SET_COARSE",
    "SET_NEGATIVE",
    "SET_IGNORED",
    "BoundScene",
    "load_manifest",
    "gen_labels",
    "assign",
    "bind_assign",
    "bind_sar",
    "combine_loss",
    "sar_refine",
    "panoptic_eval",
]

SET_ACCURATE = 0
SET_COARSE = 1
SET_NEGATIVE = 2
SET_IGNORED = 3


@dataclass
class BoundScene:
    """Handle to one loaded scene: a point cloud plus optional labels.

    The ``points`` view aliases the cloud's storage (no copy); the handle
    must stay alive as long as any derived view is in use.
    """

    cloud: PointCloud
    labels: LabelSet | None = None

    @classmethod
    def from_files(cls, cloud_path, labels_path=None, scene_id: str = "") -> "BoundScene":
        cloud = load_cloud(cloud_path, scene_id=scene_id)
        labels = load_labels(labels_path, cloud) if labels_path else None
        return cls(cloud=cloud, labels=labels)

    @classmethod
    def from_arrays(cls, xyz: np.ndarray, scene_id: str = "scene",
                    labels: LabelSet | None = None) -> "BoundScene":
        return cls(cloud=PointCloud(np.asarray(xyz, dtype=np.float64),
                                    scene_id=scene_id), labels=labels)

    @classmethod
    def from_manifest_entry(cls, entry) -> "BoundScene":
        cloud = entry.load_cloud()
        return cls(cloud=cloud, labels=entry.load_labels(cloud))

    @property
    def scene_id(self) -> str:
        return self.cloud.scene_id

    @property
    def points(self) -> np.ndarray:
        return self.cloud.xyz

    def checksum(self) -> str:
        """SHA-256 of the raw coordinate buffer, for round-trip checks."""
        return hashlib.sha256(
            np.ascontiguousarray(self.cloud.xyz).tobytes()
        ).hexdigest()


def gen_labels(manifest, ratio: float, noise: str = "noise0",
               seed: int | None = None, class_weights: dict | None = None):
    """Mixed label generation over a whole manifest, in memory.

    Mirrors the CLI: one global accurate-box budget over every GT box in
    the dataset, per-scene seeds derived from the global seed. Returns
    (dict scene_id -> LabelSet, CostReport).
    """
    if isinstance(manifest, (str, Path)):
        manifest = load_manifest(manifest)
    if seed is None:
        seed = manifest.seed
    noise_model = resolve_noise(noise)

    all_boxes: list[tuple[str, int, int]] = []
    scenes = {}
    for entry in manifest.scenes:
        cloud = entry.load_cloud()
        gt = entry.load_labels(cloud)
        if gt is None or not gt.boxes:
            raise ValueError(f"scene {entry.scene_id} has no GT boxes")
        scenes[entry.scene_id] = (cloud, gt)
        for _, cl in gt.boxes:
            all_boxes.append((entry.scene_id, cl.instance_id, cl.class_id))

    selected_idx, _ = select_budget(
        len(all_boxes), ratio, seed,
        class_ids=[c for _, _, c in all_boxes],
        class_weights=class_weights,
    )
    selected_by_scene: dict[str, set[int]] = {}
    for i in selected_idx:
        scene_id, instance_id, _ = all_boxes[i]
        selected_by_scene.setdefault(scene_id, set()).add(instance_id)

    out: dict[str, LabelSet] = {}
    n_box = n_cluster = 0
    for scene_id, (cloud, gt) in scenes.items():
        keep = selected_by_scene.get(scene_id, set())
        selected = [(b, c) for b, c in gt.boxes if c.instance_id in keep]
        remainder = [(b, c) for b, c in gt.boxes if c.instance_id not in keep]
        cluster_labels, _ = clusters_from_boxes(
            cloud,
            [b for b, _ in remainder],
            noise_model,
            derive_scene_seed(seed, scene_id),
            instance_ids=[c.instance_id for _, c in remainder],
        )
        out[scene_id] = LabelSet(scene_id=scene_id, clusters=cluster_labels,
                                 boxes=selected)
        n_box += len(selected)
        n_cluster += len(cluster_labels)
    return out, annotation_cost(n_box, n_cluster, len(all_boxes))


def _candidates_from_config(config) -> list[Box3D]:
    cands = config["candidates"]
    if len(cands) and isinstance(cands[0], Box3D):
        return list(cands)
    arr = np.asarray(cands, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 8:
        raise ValueError("candidates array must have shape (M, 8): "
                         "cx, cy, cz, dx, dy, dz, yaw, class_id")
    return [
        Box3D(center=(r[0], r[1], r[2]), dims=(r[3], r[4], r[5]),
              yaw=float(r[6]), class_id=int(r[7]))
        for r in arr
    ]


def assign(scene: BoundScene, mode: str, config: dict) -> AssignmentPartition:
    """Run label assignment on a bound scene; same semantics as the CLI.

    ``mode`` is "center" (config: x_range, y_range, cell_size) or "box"
    (config: pos_thresh, neg_thresh, candidates). A missing config field
    raises ValueError naming it.
    """
    if scene.labels is None:
        raise ValueError("scene has no labels to assign")
    if mode == "center":
        for key in ("x_range", "y_range", "cell_size"):
            if key not in config:
                raise ValueError(f"center mode config missing {key!r}")
        grid = BevGrid(
            x_range=tuple(config["x_range"]),
            y_range=tuple(config["y_range"]),
            cell_size=float(config["cell_size"]),
        )
        return center_assign(scene.labels, scene.cloud, grid)
    if mode == "box":
        for key in ("pos_thresh", "neg_thresh", "candidates"):
            if key not in config:
                raise ValueError(f"box mode config missing {key!r}")
        return box_assign(
            scene.cloud,
            _candidates_from_config(config),
            scene.labels,
            pos_thresh=float(config["pos_thresh"]),
            neg_thresh=float(config["neg_thresh"]),
        )
    raise ValueError(f"unknown assignment mode {mode!r}")


def bind_assign(scene: BoundScene, mode: str, config: dict) -> dict[str, np.ndarray]:
    """Assignment as plain arrays, ordered by sample id.

    Returns sample_ids (int64), set_codes (int8, SET_* constants),
    matched_instance (int64, -1 when none), class_targets (int64), and
    regression_targets (float64 (N, 7) rows cx, cy, cz, dx, dy, dz, yaw,
    NaN where the sample has no box target).
    """
    part = assign(scene, mode, config)
    rows = (
        [(s, SET_ACCURATE) for s in part.s_a]
        + [(s, SET_COARSE) for s in part.s_c]
        + [(s, SET_NEGATIVE) for s in part.s_n]
        + [(s, SET_IGNORED) for s in part.ignored]
    )
    rows.sort(key=lambda r: r[0].sample_id)
    n = len(rows)
    out = {
        "sample_ids": np.empty(n, dtype=np.int64),
        "set_codes": np.empty(n, dtype=np.int8),
        "matched_instance": np.full(n, -1, dtype=np.int64),
        "class_targets": np.empty(n, dtype=np.int64),
        "regression_targets": np.full((n, 7), np.nan, dtype=np.float64),
    }
    for i, (sample, code) in enumerate(rows):
        out["sample_ids"][i] = sample.sample_id
        out["set_codes"][i] = code
        if sample.matched_instance is not None:
            out["matched_instance"][i] = sample.matched_instance
        out["class_targets"][i] = sample.class_target
        box = sample.regression_target
        if box is not None:
            out["regression_targets"][i] = (*box.center, *box.dims, box.yaw)
    return out


def bind_sar(points: np.ndarray, mask_ids: np.ndarray, class_ids: np.ndarray,
             radii: dict[int, float] | None = None,
             default_radius: float = 0.5):
    """Separability refinement over raw arrays.

    Returns (mask_ids, class_ids, report) with fresh int64 arrays; inputs
    are never modified. Raises ValueError on shape mismatch.
    """
    points = np.asarray(points, dtype=np.float64)
    mask_ids = np.asarray(mask_ids, dtype=np.int64)
    class_ids = np.asarray(class_ids, dtype=np.int64)
    if points.ndim != 2 or points.shape[1] < 3:
        raise ValueError("points must have shape (N, 3)")
    if mask_ids.shape != (len(points),) or class_ids.shape != (len(points),):
        raise ValueError("labeling arrays must match the point count")
    cloud = PointCloud(points[:, :3])
    refined, report = sar_refine(
        cloud, PointLabeling(mask_ids.copy(), class_ids.copy()),
        radii=radii, default_radius=default_radius,
    )
    return refined.mask_ids, refined.class_ids, report
