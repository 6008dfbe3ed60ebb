"""Report rendering: aligned text tables, delimited files, and figures."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .assignment import AssignmentPartition, Sample
from .io import box_to_dict, box_from_dict
from .metrics import PanopticReport


def panoptic_table(
    report: PanopticReport, class_names: dict[int, str] | None = None
) -> str:
    """Aligned-column table of per-class and mean PQ/SQ/RQ."""
    names = class_names or {}
    rows = [("class", "PQ", "SQ", "RQ", "TP", "FP", "FN")]
    for cid, stat in sorted(report.per_class.items()):
        rows.append(
            (
                names.get(cid, str(cid)),
                f"{stat.pq:.4f}",
                f"{stat.sq:.4f}",
                f"{stat.rq:.4f}",
                str(stat.tp),
                str(stat.fp),
                str(stat.fn),
            )
        )
    rows.append(
        ("mean", f"{report.pq:.4f}", f"{report.sq:.4f}", f"{report.rq:.4f}", "", "", "")
    )
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = []
    for r in rows:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip())
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def write_panoptic_csv(
    report: PanopticReport, path: str | Path, class_names: dict[int, str] | None = None
):
    names = class_names or {}
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class", "PQ", "SQ", "RQ", "TP", "FP", "FN"])
        for cid, stat in sorted(report.per_class.items()):
            writer.writerow(
                [
                    names.get(cid, str(cid)),
                    f"{stat.pq:.6f}",
                    f"{stat.sq:.6f}",
                    f"{stat.rq:.6f}",
                    stat.tp,
                    stat.fp,
                    stat.fn,
                ]
            )
        writer.writerow(
            ["mean", f"{report.pq:.6f}", f"{report.sq:.6f}", f"{report.rq:.6f}", "", "", ""]
        )


def render_panoptic_figure(
    report: PanopticReport,
    path: str | Path,
    class_names: dict[int, str] | None = None,
):
    """Grouped bar chart of per-class PQ/SQ/RQ, written as an image file."""
    names = class_names or {}
    cids = sorted(report.per_class)
    labels = [names.get(c, str(c)) for c in cids]
    pq = [report.per_class[c].pq for c in cids]
    sq = [report.per_class[c].sq for c in cids]
    rq = [report.per_class[c].rq for c in cids]

    fig, ax = plt.subplots(figsize=(max(4.0, 1.2 * len(cids) + 2), 3.5))
    x = range(len(cids))
    width = 0.27
    ax.bar([i - width for i in x], pq, width, label="PQ")
    ax.bar(list(x), sq, width, label="SQ")
    ax.bar([i + width for i in x], rq, width, label="RQ")
    ax.set_xticks(list(x))
    ax.set_xticklabels(labels, rotation=30, ha="right")
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("quality")
    ax.axhline(report.pq, color="gray", lw=0.8, ls="--", label="mean PQ")
    ax.legend(fontsize=8)
    fig.tight_layout()
    # Strip the software tag so repeated runs are byte-identical.
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)


def sample_to_dict(sample: Sample, set_code: str) -> dict:
    out = {
        "sample_id": sample.sample_id,
        "set": set_code,
        "matched_instance": sample.matched_instance,
        "class_target": sample.class_target,
    }
    if sample.regression_target is not None:
        out["regression_target"] = box_to_dict(sample.regression_target)
    return out


def partition_to_dict(partition: AssignmentPartition) -> dict:
    samples = (
        [sample_to_dict(s, "a") for s in partition.s_a]
        + [sample_to_dict(s, "c") for s in partition.s_c]
        + [sample_to_dict(s, "n") for s in partition.s_n]
        + [sample_to_dict(s, "ignored") for s in partition.ignored]
    )
    samples.sort(key=lambda s: s["sample_id"])
    return {
        "samples": samples,
        "out_of_range": partition.out_of_range,
        "collisions": partition.collisions,
        "counts": {
            "s_a": len(partition.s_a),
            "s_c": len(partition.s_c),
            "s_n": len(partition.s_n),
            "ignored": len(partition.ignored),
        },
    }


def partition_from_dict(d: dict) -> AssignmentPartition:
    part = AssignmentPartition(
        out_of_range=list(d.get("out_of_range", [])),
        collisions=list(d.get("collisions", [])),
    )
    buckets = {"a": part.s_a, "c": part.s_c, "n": part.s_n, "ignored": part.ignored}
    for s in d["samples"]:
        reg = s.get("regression_target")
        buckets[s["set"]].append(
            Sample(
                sample_id=s["sample_id"],
                matched_instance=s["matched_instance"],
                class_target=s["class_target"],
                regression_target=box_from_dict(reg) if reg else None,
            )
        )
    return part


def write_json(payload: dict, path: str | Path):
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")
