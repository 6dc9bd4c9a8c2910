"""Plot-ready CSV output and the text comparison table."""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .catalog import TASKS
from .evalharness import CLASSIFIERS, SOURCE_ORDER, TaskResult, sort_results
from .iconometry import COMPONENTS, CanonBaseline, DistributionSummary, ProportionVector, compare_to_canon
from .errors import ParseError

RESULTS_HEADER = ("task", "source", "classifier", "fold", "precision_w", "recall_w", "f1_w")
SUMMARY_HEADER = (
    "task",
    "source",
    "classifier",
    "eligible",
    "sample_count",
    "folds_used",
    "skipped_folds",
    "precision_mean",
    "precision_std",
    "recall_mean",
    "recall_std",
    "f1_mean",
    "f1_std",
)
STATS = ("mean", "std", "q1", "median", "q3", "min", "max")
DASH = "—"


def _fmt(v: float) -> str:
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.6f}"


def write_results_csv(results: Iterable[TaskResult], path: str | Path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULTS_HEADER)
        for r in sort_results(list(results)):
            for f in r.folds:
                w.writerow([r.task_id, r.source, r.classifier, f.fold,
                            _fmt(f.precision_w), _fmt(f.recall_w), _fmt(f.f1_w)])


def summary_rows(results: Iterable[TaskResult]) -> list[dict]:
    rows = []
    for r in sort_results(list(results)):
        mean, std = r.mean, r.std
        rows.append(
            {
                "task": r.task_id,
                "source": r.source,
                "classifier": r.classifier,
                "eligible": int(r.eligible),
                "sample_count": r.sample_count,
                "folds_used": len(r.folds),
                "skipped_folds": "|".join(str(i) for i in r.skipped_folds),
                "precision_mean": _fmt(mean["precision_w"]),
                "precision_std": _fmt(std["precision_w"]),
                "recall_mean": _fmt(mean["recall_w"]),
                "recall_std": _fmt(std["recall_w"]),
                "f1_mean": _fmt(mean["f1_w"]),
                "f1_std": _fmt(std["f1_w"]),
            }
        )
    return rows


def write_summary_csv(results: Iterable[TaskResult], path: str | Path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_HEADER, lineterminator="\n")
        w.writeheader()
        w.writerows(summary_rows(results))


def read_summary_csv(path: str | Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != SUMMARY_HEADER:
            raise ParseError("not a summary CSV", line=1)
        return list(reader)


def render_table(rows: Sequence[Mapping]) -> str:
    """Sources down, tasks across with one SVM and one NN column each.

    Cells hold the mean weighted F1 with its fold standard deviation; a dash
    marks a graph source that may not serve the task.
    """
    if not rows:
        return "(no results)\n"
    tasks = [t for t in TASKS if any(r["task"] == t for r in rows)]
    sources = sorted({r["source"] for r in rows},
                     key=lambda s: (SOURCE_ORDER.index(s) if s in SOURCE_ORDER else 99, s))
    classifiers = [c for c in CLASSIFIERS if any(r["classifier"] == c for r in rows)]
    cell = {(r["task"], r["source"], r["classifier"]): r for r in rows}

    def text(r):
        if r is None:
            return ""
        if str(r["eligible"]) in ("0", "False"):
            return DASH
        if not r["f1_mean"]:
            return "n/a"
        return f"{float(r['f1_mean']):.2f}±{float(r['f1_std']):.2f}"

    header1 = ["method"] + [t for t in tasks for _ in classifiers]
    header2 = [""] + [c.upper() for _ in tasks for c in classifiers]
    body = [
        [s] + [text(cell.get((t, s, c))) for t in tasks for c in classifiers] for s in sources
    ]
    table = [header1, header2, *body]
    widths = [max(len(row[i]) for row in table) for i in range(len(header1))]
    lines = ["  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip() for row in table]
    lines.insert(2, "-" * len(lines[0]))
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------------ iconometry


def distribution_rows(
    summaries: Mapping[str, DistributionSummary], baselines: Mapping[str, CanonBaseline]
) -> list[dict]:
    rows = []
    for style, s in summaries.items():
        row = {"group": style, "kind": "style", "count": s.count}
        for stat, values in zip(STATS, (s.mean, s.std, s.q1, s.median, s.q3, s.minimum, s.maximum)):
            for c, v in zip(COMPONENTS, values):
                row[f"{c}_{stat}"] = f"{v:.6f}"
        rows.append(row)
    for name, base in baselines.items():
        row = {"group": name, "kind": "canon", "count": 1}
        for c in COMPONENTS:
            v = getattr(base.vector, c)
            for stat in STATS:
                row[f"{c}_{stat}"] = f"{0.0 if stat == 'std' else v:.6f}"
        rows.append(row)
    return rows


def distribution_header() -> list[str]:
    return ["group", "kind", "count", *(f"{c}_{s}" for s in STATS for c in COMPONENTS)]


def delta_rows(
    summaries: Mapping[str, DistributionSummary], baselines: Mapping[str, CanonBaseline]
) -> list[dict]:
    """Style mean minus each canon baseline."""
    rows = []
    for style, s in summaries.items():
        mean_vec = ProportionVector(style, *(float(v) for v in s.mean))
        for name, base in baselines.items():
            dev = compare_to_canon(mean_vec, base)
            rows.append(
                {"group": style, "baseline": name,
                 **{f"d_{c}": f"{dev.deltas[c]:.6f}" for c in COMPONENTS},
                 "l1": f"{dev.l1_distance:.6f}"}
            )
    return rows


def write_dicts(rows: Sequence[Mapping], header: Sequence[str], path: str | Path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(header), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def read_proportions_csv(path: str | Path) -> list[ProportionVector]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        need = ["image_id", *COMPONENTS]
        if [f for f in need if f not in (reader.fieldnames or [])]:
            raise ParseError(f"proportion CSV needs columns {need}", line=1)
        out = []
        for lineno, row in enumerate(reader, start=2):
            try:
                out.append(ProportionVector(row["image_id"], *(float(row[c]) for c in COMPONENTS)))
            except ValueError:
                raise ParseError("non-numeric proportion", line=lineno) from None
        return out


def write_proportions_csv(vectors: Iterable[ProportionVector], path: str | Path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["image_id", *COMPONENTS])
        for v in sorted(vectors, key=lambda v: v.image_id):
            w.writerow([v.image_id, *(f"{getattr(v, c):.6f}" for c in COMPONENTS)])


def mean_component(summaries: Mapping[str, DistributionSummary], style: str, component: str) -> float:
    return float(np.asarray(summaries[style].mean)[COMPONENTS.index(component)])
