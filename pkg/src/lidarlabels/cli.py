"""Command-line pipeline over scene manifests.

All randomness flows from one global seed through per-scene hashes, so
output files are byte-identical regardless of --jobs.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import assignment, clusters, fitting, masks, metrics
from .io import (
    Manifest,
    box_from_dict,
    derive_scene_seed,
    load_labels,
    load_manifest,
    resolve_noise,
    save_labels,
)
from .report import (
    panoptic_table,
    partition_to_dict,
    render_panoptic_figure,
    write_json,
    write_panoptic_csv,
)


class SceneFailure(Exception):
    def __init__(self, scene_id: str, message: str):
        super().__init__(f"{scene_id}: {message}")
        self.scene_id = scene_id


def _run_scenes(tasks, worker, jobs: int):
    """Map worker over per-scene tasks, serially or in a process pool."""
    if jobs <= 1:
        results = [worker(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(worker, tasks))
    failures = [r for r in results if isinstance(r, tuple) and r[0] == "error"]
    ok = [r for r in results if not (isinstance(r, tuple) and r[0] == "error")]
    return ok, failures


# ---------------------------------------------------------------- gen-labels


def _gen_labels_scene(task):
    (entry, selected_ids, noise, seed, out_dir) = task
    try:
        cloud = entry.load_cloud()
        gt = entry.load_labels(cloud)
        selected = [(b, c) for b, c in gt.boxes if c.instance_id in selected_ids]
        remainder = [(b, c) for b, c in gt.boxes if c.instance_id not in selected_ids]
        cluster_labels, dropped = clusters.clusters_from_boxes(
            cloud,
            [b for b, _ in remainder],
            noise,
            seed,
            instance_ids=[c.instance_id for _, c in remainder],
        )
        out = clusters.LabelSet(
            scene_id=entry.scene_id, clusters=cluster_labels, boxes=selected
        )
        save_labels(out, Path(out_dir) / f"{entry.scene_id}.json")
        return {
            "scene_id": entry.scene_id,
            "n_box": len(selected),
            "n_cluster": len(cluster_labels),
            "n_dropped": len(dropped),
        }
    except Exception as exc:  # propagated as a per-scene failure
        return ("error", entry.scene_id, str(exc))


def cmd_gen_labels(args) -> int:
    manifest = load_manifest(args.manifest)
    seed = args.seed if args.seed is not None else manifest.seed
    noise = resolve_noise(args.noise)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    # Global budget over every GT box in the dataset.
    all_boxes: list[tuple[str, int, int]] = []  # (scene_id, instance_id, class_id)
    for entry in manifest.scenes:
        if entry.label_path is None:
            print(f"error: scene {entry.scene_id} has no GT labels", file=sys.stderr)
            return 1
        d = json.loads(entry.label_path.read_text())
        if not d["boxes"]:
            print(f"error: scene {entry.scene_id} has no GT boxes", file=sys.stderr)
            return 1
        for b in d["boxes"]:
            all_boxes.append((entry.scene_id, b["instance_id"], b["class_id"]))

    class_weights = json.loads(args.class_weights) if args.class_weights else None
    selected_idx, _ = clusters.select_budget(
        len(all_boxes),
        args.ratio,
        seed,
        class_ids=[c for _, _, c in all_boxes],
        class_weights={int(k): v for k, v in class_weights.items()}
        if class_weights
        else None,
    )
    selected_by_scene: dict[str, set[int]] = {}
    for i in selected_idx:
        scene_id, instance_id, _ = all_boxes[i]
        selected_by_scene.setdefault(scene_id, set()).add(instance_id)

    tasks = [
        (
            entry,
            selected_by_scene.get(entry.scene_id, set()),
            noise,
            derive_scene_seed(seed, entry.scene_id),
            str(out_dir),
        )
        for entry in manifest.scenes
    ]
    results, failures = _run_scenes(tasks, _gen_labels_scene, args.jobs)
    if failures:
        for _, scene_id, msg in failures:
            print(f"scene {scene_id} failed: {msg}", file=sys.stderr)
        return 1

    n_box = sum(r["n_box"] for r in results)
    n_cluster = sum(r["n_cluster"] for r in results)
    report = clusters.annotation_cost(n_box, n_cluster, len(all_boxes))
    summary = {
        "scenes": sorted(results, key=lambda r: r["scene_id"]),
        "cost": {
            "n_box": report.n_box,
            "n_cluster": report.n_cluster,
            "n_total": report.n_total,
            "cost": report.cost,
        },
    }
    write_json(summary, out_dir / "index.json")
    print(f"annotation cost: {report.cost:.6f} "
          f"(boxes {report.n_box}, clusters {report.n_cluster}, total {report.n_total})")
    return 0


# ---------------------------------------------------------------------- cost


def cmd_cost(args) -> int:
    manifest = load_manifest(args.manifest)
    labels_dir = Path(args.labels_dir)
    n_box = n_cluster = 0
    for entry in manifest.scenes:
        d = json.loads((labels_dir / f"{entry.scene_id}.json").read_text())
        n_box += len(d["boxes"])
        n_cluster += len(d["clusters"])
    n_total = args.n_total if args.n_total else n_box + n_cluster
    report = clusters.annotation_cost(n_box, n_cluster, n_total)
    print(f"annotation cost: {report.cost:.6f} "
          f"(boxes {report.n_box}, clusters {report.n_cluster}, total {report.n_total})")
    return 0


# -------------------------------------------------------------------- assign


def _assign_scene(task):
    (entry, labels_dir, mode, config, out_dir) = task
    try:
        cloud = entry.load_cloud()
        label_path = (
            Path(labels_dir) / f"{entry.scene_id}.json" if labels_dir else entry.label_path
        )
        labelset = load_labels(label_path, cloud)
        if mode == "center":
            grid = assignment.BevGrid(
                x_range=tuple(config["x_range"]),
                y_range=tuple(config["y_range"]),
                cell_size=config["cell_size"],
            )
            part = assignment.center_assign(labelset, cloud, grid)
        else:
            candidates = [
                box_from_dict(b)
                for b in json.loads(
                    (Path(config["candidates_dir"]) / f"{entry.scene_id}.json").read_text()
                )["boxes"]
            ]
            part = assignment.box_assign(
                cloud,
                candidates,
                labelset,
                pos_thresh=config["pos_thresh"],
                neg_thresh=config["neg_thresh"],
            )
        write_json(partition_to_dict(part), Path(out_dir) / f"{entry.scene_id}.json")
        return {
            "scene_id": entry.scene_id,
            "s_a": len(part.s_a),
            "s_c": len(part.s_c),
            "s_n": len(part.s_n),
            "ignored": len(part.ignored),
        }
    except Exception as exc:
        return ("error", entry.scene_id, str(exc))


def cmd_assign(args) -> int:
    manifest = load_manifest(args.manifest)
    config = json.loads(Path(args.config).read_text())
    if args.mode == "box":
        for key in ("pos_thresh", "neg_thresh", "candidates_dir"):
            if key not in config:
                print(f"error: box mode config missing {key!r}", file=sys.stderr)
                return 1
    else:
        for key in ("x_range", "y_range", "cell_size"):
            if key not in config:
                print(f"error: center mode config missing {key!r}", file=sys.stderr)
                return 1
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks = [
        (entry, args.labels_dir, args.mode, config, str(out_dir))
        for entry in manifest.scenes
    ]
    results, failures = _run_scenes(tasks, _assign_scene, args.jobs)
    if failures:
        for _, scene_id, msg in failures:
            print(f"scene {scene_id} failed: {msg}", file=sys.stderr)
        return 1
    results.sort(key=lambda r: r["scene_id"])
    totals = {k: sum(r[k] for r in results) for k in ("s_a", "s_c", "s_n", "ignored")}
    write_json({"scenes": results, "totals": totals}, out_dir / "index.json")
    print(f"|S_a|={totals['s_a']} |S_c|={totals['s_c']} |S_n|={totals['s_n']} "
          f"ignored={totals['ignored']}")
    return 0


# ------------------------------------------------------------------ pointsam


def _pointsam_scene(task):
    (entry, radii, default_radius, noise_cm, seed, out_dir) = task
    try:
        cloud = entry.load_cloud()
        if not entry.cameras:
            raise ValueError("scene has no cameras/masks")
        cameras, mask_list = entry.load_cameras()
        if noise_cm > 0:
            cameras = masks.perturb_calibration(cameras, noise_cm, seed)
        labeling = masks.lift_masks(cloud, cameras, mask_list)
        refined, diff = masks.sar_refine(
            cloud, labeling, radii=radii, default_radius=default_radius
        )
        cluster_labels = masks.labeling_to_clusters(refined)
        out = clusters.LabelSet(scene_id=entry.scene_id, clusters=cluster_labels)
        save_labels(out, Path(out_dir) / f"{entry.scene_id}.json")
        return {"scene_id": entry.scene_id, "n_clusters": len(cluster_labels), **diff}
    except Exception as exc:
        return ("error", entry.scene_id, str(exc))


def cmd_pointsam(args) -> int:
    manifest = load_manifest(args.manifest)
    seed = args.seed if args.seed is not None else manifest.seed
    radii = None
    default_radius = masks.DEFAULT_RADIUS
    if args.radii_config:
        d = json.loads(Path(args.radii_config).read_text())
        default_radius = d.pop("default", default_radius)
        radii = {int(k): v for k, v in d.items()}
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks = [
        (
            entry,
            radii,
            default_radius,
            args.calib_noise_cm,
            derive_scene_seed(seed, entry.scene_id),
            str(out_dir),
        )
        for entry in manifest.scenes
    ]
    results, failures = _run_scenes(tasks, _pointsam_scene, args.jobs)
    if failures:
        for _, scene_id, msg in failures:
            print(f"scene {scene_id} failed: {msg}", file=sys.stderr)
        return 1
    results.sort(key=lambda r: r["scene_id"])
    write_json({"scenes": results}, out_dir / "index.json")
    total = sum(r["n_clusters"] for r in results)
    print(f"wrote {total} clusters over {len(results)} scenes")
    return 0


# ---------------------------------------------------------------------- eval


def cmd_eval(args) -> int:
    manifest = load_manifest(args.manifest)
    pred_dir, gt_dir = Path(args.pred_dir), Path(args.gt_dir)
    missing = [
        e.scene_id
        for e in manifest.scenes
        if not (pred_dir / f"{e.scene_id}.json").exists()
        or not (gt_dir / f"{e.scene_id}.json").exists()
    ]
    if missing:
        print(f"error: missing label files for scenes: {', '.join(missing)}",
              file=sys.stderr)
        return 1

    report = metrics.PanopticReport()
    iou_accum: dict[int, list[float]] = {}
    miou_values = []
    for entry in manifest.scenes:
        cloud = entry.load_cloud()
        pred = load_labels(pred_dir / f"{entry.scene_id}.json", cloud)
        gt = load_labels(gt_dir / f"{entry.scene_id}.json", cloud)
        pred_clusters = pred.clusters + [c for _, c in pred.boxes]
        gt_clusters = gt.clusters + [c for _, c in gt.boxes]
        report.merge(metrics.panoptic_eval(pred_clusters, gt_clusters, args.iou_match))
        pc = metrics.labels_to_point_classes(pred_clusters, len(cloud))
        gc = metrics.labels_to_point_classes(gt_clusters, len(cloud))
        per_class, _ = metrics.segmentation_miou(pc, gc)
        for cid, iou in per_class.items():
            iou_accum.setdefault(cid, []).append(iou)
    per_class_miou = {cid: sum(v) / len(v) for cid, v in sorted(iou_accum.items())}
    miou = (
        sum(per_class_miou.values()) / len(per_class_miou) if per_class_miou else 0.0
    )

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = report.to_dict()
    payload["mIoU"] = {"mean": miou, "per_class": {str(k): v for k, v in per_class_miou.items()}}
    write_json(payload, out_dir / "report.json")
    write_panoptic_csv(report, out_dir / "report.csv", manifest.classes)
    table = panoptic_table(report, manifest.classes)
    (out_dir / "report.txt").write_text(table + f"\nmIoU: {miou:.4f}\n")
    render_panoptic_figure(report, out_dir / "report.png", manifest.classes)
    print(table)
    print(f"mIoU: {miou:.4f}")
    return 0


# ----------------------------------------------------------------- selftrain


def _selftrain_scene(task):
    (entry, labels_dir, pseudo_dir, score_thresh, match_iou, out_dir) = task
    try:
        cloud = entry.load_cloud()
        label_path = (
            Path(labels_dir) / f"{entry.scene_id}.json" if labels_dir else entry.label_path
        )
        labelset = load_labels(label_path, cloud)
        pseudo_path = Path(pseudo_dir) / f"{entry.scene_id}.json"
        try:
            pseudo = [
                box_from_dict(b)
                for b in json.loads(pseudo_path.read_text())["boxes"]
            ]
        except (KeyError, ValueError, TypeError) as exc:
            raise ValueError(f"malformed pseudo box file {pseudo_path}: {exc}")
        merged, diff = fitting.selftrain_merge(
            labelset, pseudo, cloud, score_thresh=score_thresh, match_iou=match_iou
        )
        save_labels(merged, Path(out_dir) / f"{entry.scene_id}.json")
        return {
            "scene_id": entry.scene_id,
            "replaced": diff.replaced,
            "discarded": diff.discarded,
            "below_threshold": diff.below_threshold,
        }
    except Exception as exc:
        return ("error", entry.scene_id, str(exc))


def cmd_selftrain(args) -> int:
    manifest = load_manifest(args.manifest)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks = [
        (entry, args.labels_dir, args.pseudo_dir, args.score_thresh, args.match_iou,
         str(out_dir))
        for entry in manifest.scenes
    ]
    results, failures = _run_scenes(tasks, _selftrain_scene, args.jobs)
    if failures:
        for _, scene_id, msg in failures:
            print(f"scene {scene_id} failed: {msg}", file=sys.stderr)
        return 1
    results.sort(key=lambda r: r["scene_id"])
    write_json({"scenes": results}, out_dir / "index.json")
    replaced = sum(r["replaced"] for r in results)
    discarded = sum(r["discarded"] for r in results)
    print(f"replaced {replaced} clusters, discarded {discarded} pseudo boxes")
    return 0


# ---------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lidarlabels",
        description="Mixed-grained LiDAR label engineering pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--manifest", required=True)
        p.add_argument("--seed", type=int, default=None,
                       help="global seed; defaults to the manifest seed")
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--out-dir", required=True)

    p = sub.add_parser("gen-labels", help="generate mixed box+cluster labels from GT")
    common(p)
    p.add_argument("--noise", default="noise0",
                   help="noise preset (noise0/noise1/noise2) or config file")
    p.add_argument("--ratio", type=float, required=True,
                   help="fraction of GT boxes kept as accurate labels")
    p.add_argument("--class-weights", default=None,
                   help='JSON object {class_id: weight} for budget oversampling')
    p.set_defaults(func=cmd_gen_labels)

    p = sub.add_parser("cost", help="annotation cost of a label directory")
    p.add_argument("--manifest", required=True)
    p.add_argument("--labels-dir", required=True)
    p.add_argument("--n-total", type=int, default=None)
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("assign", help="run label assignment per scene")
    common(p)
    p.add_argument("--mode", choices=["center", "box"], required=True)
    p.add_argument("--config", required=True, help="detector config JSON")
    p.add_argument("--labels-dir", default=None,
                   help="label files to assign (defaults to manifest labels)")
    p.set_defaults(func=cmd_assign)

    p = sub.add_parser("pointsam", help="lift 2D masks to clusters with SAR")
    common(p)
    p.add_argument("--radii-config", default=None,
                   help='JSON {class_id: radius, "default": radius}')
    p.add_argument("--calib-noise-cm", type=float, default=0.0)
    p.set_defaults(func=cmd_pointsam)

    p = sub.add_parser("eval", help="panoptic + mIoU evaluation")
    common(p)
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--iou-match", type=float, default=0.5)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("selftrain", help="one self-training replacement round")
    common(p)
    p.add_argument("--labels-dir", default=None)
    p.add_argument("--pseudo-dir", required=True)
    p.add_argument("--score-thresh", type=float, default=fitting.SELFTRAIN_SCORE_THRESH)
    p.add_argument("--match-iou", type=float, default=fitting.SELFTRAIN_MATCH_IOU)
    p.set_defaults(func=cmd_selftrain)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
