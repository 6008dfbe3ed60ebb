"""File formats: binary point clouds, JSON scene manifests, label files,
and raw 2D mask grids.

Point cloud files are little-endian float32 records (x, y, z, intensity),
16 bytes per point; the point count is inferred from the file length. Mask
grids are raw row-major arrays (uint32 instance IDs, uint16 class IDs) with
a JSON sidecar giving dimensions.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .clusters import ClusterLabel, LabelSet, NOISE_PRESETS, NoiseModel
from .geometry import Box3D, PointCloud, PointIndexSet
from .masks import CameraModel, InstanceMasks2D

MANIFEST_SCHEMA_VERSION = 1


class ManifestError(ValueError):
    pass


def derive_scene_seed(global_seed: int, scene_id: str) -> int:
    """Stable per-scene seed so parallel and serial runs agree."""
    digest = hashlib.sha256(f"{global_seed}:{scene_id}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def load_cloud(path: str | Path, scene_id: str = "") -> PointCloud:
    raw = np.fromfile(str(path), dtype="<f4")
    if len(raw) % 4 != 0:
        raise ValueError(f"{path}: length is not a multiple of 16 bytes")
    records = raw.reshape(-1, 4).astype(np.float64)
    return PointCloud(xyz=records[:, :3], intensity=records[:, 3], scene_id=scene_id)


def save_cloud(cloud: PointCloud, path: str | Path):
    intensity = (
        cloud.intensity if cloud.intensity is not None else np.zeros(len(cloud))
    )
    records = np.column_stack([cloud.xyz, intensity]).astype("<f4")
    records.tofile(str(path))


def box_to_dict(box: Box3D) -> dict:
    out = {
        "center": list(box.center),
        "dims": list(box.dims),
        "yaw": box.yaw,
        "class_id": box.class_id,
    }
    if box.score is not None:
        out["score"] = box.score
    return out


def box_from_dict(d: dict) -> Box3D:
    return Box3D(
        center=tuple(d["center"]),
        dims=tuple(d["dims"]),
        yaw=d["yaw"],
        class_id=d["class_id"],
        score=d.get("score"),
    )


def save_labels(labelset: LabelSet, path: str | Path):
    payload = {
        "scene_id": labelset.scene_id,
        "clusters": [
            {
                "indices": [int(i) for i in c.points.indices],
                "class_id": c.class_id,
                "instance_id": c.instance_id,
            }
            for c in labelset.clusters
        ],
        "boxes": [
            dict(box_to_dict(box), instance_id=cl.instance_id)
            for box, cl in labelset.boxes
        ],
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")


def load_labels(path: str | Path, cloud: PointCloud) -> LabelSet:
    """Load a label file; box-enclosed clusters are recomputed from the cloud."""
    from .geometry import points_in_box

    d = json.loads(Path(path).read_text())
    clusters = [
        ClusterLabel(
            points=PointIndexSet(np.array(c["indices"], dtype=np.int64)),
            class_id=c["class_id"],
            instance_id=c["instance_id"],
        )
        for c in d["clusters"]
    ]
    boxes = []
    for b in d["boxes"]:
        box = box_from_dict(b)
        enclosed = points_in_box(cloud, box)
        boxes.append(
            (box, ClusterLabel(enclosed, box.class_id, b["instance_id"]))
        )
    return LabelSet(scene_id=d["scene_id"], clusters=clusters, boxes=boxes)


def load_boxes(path: str | Path) -> list[Box3D]:
    d = json.loads(Path(path).read_text())
    items = d["boxes"] if isinstance(d, dict) else d
    return [box_from_dict(b) for b in items]


def save_masks(masks: InstanceMasks2D, stem: str | Path):
    """Write <stem>.inst, <stem>.cls, and the <stem>.json sidecar."""
    stem = Path(stem)
    masks.instance_map.astype("<u4").tofile(str(stem) + ".inst")
    masks.class_map.astype("<u2").tofile(str(stem) + ".cls")
    h, w = masks.instance_map.shape
    Path(str(stem) + ".json").write_text(
        json.dumps({"height": h, "width": w}, sort_keys=True)
    )


def load_masks(stem: str | Path) -> InstanceMasks2D:
    meta = json.loads(Path(str(stem) + ".json").read_text())
    h, w = meta["height"], meta["width"]
    inst = np.fromfile(str(stem) + ".inst", dtype="<u4").reshape(h, w)
    cls = np.fromfile(str(stem) + ".cls", dtype="<u2").reshape(h, w)
    return InstanceMasks2D(instance_map=inst, class_map=cls)


def camera_from_dict(d: dict) -> CameraModel:
    return CameraModel(
        fx=d["fx"],
        fy=d["fy"],
        cx=d["cx"],
        cy=d["cy"],
        rotation=np.array(d["rotation"], dtype=np.float64),
        translation=np.array(d["translation"], dtype=np.float64),
        width=d["width"],
        height=d["height"],
        name=d.get("name", ""),
    )


def camera_to_dict(camera: CameraModel) -> dict:
    return {
        "name": camera.name,
        "fx": camera.fx,
        "fy": camera.fy,
        "cx": camera.cx,
        "cy": camera.cy,
        "rotation": camera.rotation.tolist(),
        "translation": camera.translation.tolist(),
        "width": camera.width,
        "height": camera.height,
    }


@dataclass
class SceneEntry:
    scene_id: str
    cloud_path: Path
    label_path: Path | None = None
    cameras: list[dict] = field(default_factory=list)

    def load_cloud(self) -> PointCloud:
        return load_cloud(self.cloud_path, scene_id=self.scene_id)

    def load_labels(self, cloud: PointCloud) -> LabelSet:
        if self.label_path is None:
            raise ManifestError(f"scene {self.scene_id} has no label file")
        return load_labels(self.label_path, cloud)

    def load_cameras(self) -> tuple[list[CameraModel], list[InstanceMasks2D]]:
        cams, masks = [], []
        for cam in self.cameras:
            cams.append(camera_from_dict(cam))
            masks.append(load_masks(cam["mask_stem"]))
        return cams, masks


@dataclass
class Manifest:
    scenes: list[SceneEntry]
    classes: dict[int, str]
    seed: int
    root: Path

    def scene_ids(self) -> list[str]:
        return [s.scene_id for s in self.scenes]


def load_manifest(path: str | Path) -> Manifest:
    path = Path(path)
    d = json.loads(path.read_text())
    version = d.get("schema_version")
    if version != MANIFEST_SCHEMA_VERSION:
        raise ManifestError(f"unsupported manifest schema_version {version}")
    root = path.parent
    scenes = []
    seen: set[str] = set()
    for s in d["scenes"]:
        scene_id = s["scene_id"]
        if scene_id in seen:
            raise ManifestError(f"duplicate scene_id {scene_id}")
        seen.add(scene_id)
        cloud_path = root / s["cloud"]
        if not cloud_path.exists():
            raise ManifestError(f"scene {scene_id}: missing cloud file {cloud_path}")
        label_path = None
        if s.get("labels"):
            label_path = root / s["labels"]
            if not label_path.exists():
                raise ManifestError(
                    f"scene {scene_id}: missing label file {label_path}"
                )
        cameras = []
        for cam in s.get("cameras", []):
            cam = dict(cam)
            cam["mask_stem"] = str(root / cam["mask_stem"])
            for suffix in (".inst", ".cls", ".json"):
                if not Path(cam["mask_stem"] + suffix).exists():
                    raise ManifestError(
                        f"scene {scene_id}: missing mask file "
                        f"{cam['mask_stem'] + suffix}"
                    )
            cameras.append(cam)
        scenes.append(
            SceneEntry(
                scene_id=scene_id,
                cloud_path=cloud_path,
                label_path=label_path,
                cameras=cameras,
            )
        )
    classes = {int(k): v for k, v in d.get("classes", {}).items()}
    return Manifest(scenes=scenes, classes=classes, seed=d.get("seed", 0), root=root)


def resolve_noise(preset_or_path: str) -> NoiseModel:
    """Named preset (noise0/noise1/noise2) or a JSON config file."""
    if preset_or_path in NOISE_PRESETS:
        return NOISE_PRESETS[preset_or_path]
    p = Path(preset_or_path)
    if p.exists():
        d = json.loads(p.read_text())
        return NoiseModel(
            shift_range=d.get("shift_range", 0.0),
            expand_range=d.get("expand_range", 0.0),
            rotate_range=d.get("rotate_range", 0.0),
        )
    raise ValueError(f"unknown noise preset or missing config file: {preset_or_path}")
