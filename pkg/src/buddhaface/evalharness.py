"""Stratified k-fold evaluation of classifiers over tasks and feature sources."""

from __future__ import annotations

import logging
import math
import warnings
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Hashable, Mapping, Sequence

import numpy as np

from .catalog import TASKS, TASK_FAMILY, TaskLabeling
from .errors import EmptyIntersectionError, TrainingError, ValidationError
from .features import FeatureMatrix, common_universe
from .kgraph import KG_FAMILIES, KG_TIME_FAMILIES
from .learn import TrainConfig, predict, train_nn, train_svm

log = logging.getLogger(__name__)

CLASSIFIERS = ("svm", "nn")
SOURCE_ORDER = (
    "iconometry",
    "image_embedding_full",
    "image_embedding_cropped",
    "image_embedding_face",
    "graph_kg",
    "graph_kg_time",
)
GRAPH_FAMILIES = {"graph_kg": KG_FAMILIES, "graph_kg_time": KG_TIME_FAMILIES}

DECISIONS = {
    "dimension_buckets": "[0,100) [100,250) [250,inf) cm",
    "median_year": "lower midpoint",
    "century": "ceil(year/100)",
    "samples": "images; labels inherited from statue",
    "pose_alignment": "similarity Procrustes, no reflection",
    "standardization": "per-dimension z-score, training fold statistics",
    "multilabel_svm": "independent one-vs-rest binary SVMs",
    "multilabel_threshold": 0.5,
    "argmax_ties": "lowest class index",
    "zero_division": 0.0,
    "reported_score": "mean and std over folds",
}


@dataclass
class FoldPlan:
    k: int
    assignments: dict[str, int]
    seed: int
    grouped: bool = False
    warnings: list[str] = field(default_factory=list)

    def folds(self) -> list[list[str]]:
        out: list[list[str]] = [[] for _ in range(self.k)]
        for sid in sorted(self.assignments):
            out[self.assignments[sid]].append(sid)
        return out


def _strat_key(labels) -> Hashable:
    if isinstance(labels, (set, frozenset)):
        return tuple(sorted(labels, key=str))
    return labels


def stratified_kfold(
    labels: Mapping[str, Hashable],
    k: int = 5,
    seed: int = 42,
    groups: Mapping[str, str] | None = None,
) -> FoldPlan:
    """Deterministic stratified assignment of samples to ``k`` folds.

    Units (samples, or groups when ``groups`` maps sample -> group) are
    shuffled within each stratum, strata are laid end to end, and unit ``j``
    of that sequence goes to fold ``j mod k``. Per-stratum unit counts then
    differ by at most one across folds, and so do total unit counts.
    Multi-label samples are stratified on their whole label set.
    """
    if groups is None:
        units = {sid: [sid] for sid in labels}
    else:
        units = defaultdict(list)
        for sid in labels:
            units[groups[sid]].append(sid)
    if len(units) < k:
        raise ValidationError(f"{len(units)} unit(s) cannot fill {k} folds")

    strata: dict[Hashable, list[str]] = defaultdict(list)
    for unit, members in units.items():
        keys = {_strat_key(labels[m]) for m in members}
        if len(keys) > 1:
            raise ValidationError(f"group {unit!r} mixes labels {sorted(keys, key=str)}")
        strata[keys.pop()].append(unit)

    rng = np.random.default_rng(seed)
    plan_warnings = []
    sequence = []
    for key in sorted(strata, key=str):
        members = sorted(strata[key])
        if len(members) < k:
            plan_warnings.append(f"class {key!r} has {len(members)} unit(s) for {k} folds")
        sequence.extend(members[i] for i in rng.permutation(len(members)))
    assignments = {}
    for j, unit in enumerate(sequence):
        for sid in units[unit]:
            assignments[sid] = j % k
    for msg in plan_warnings:
        log.warning(msg)
    return FoldPlan(k, assignments, seed, groups is not None, plan_warnings)


# ------------------------------------------------------------------ metrics


def _prf(tp, fp, fn):
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def per_class_prf(y_true, y_pred, mode: str = "single_label"):
    """(labels, precision, recall, f1, support) arrays."""
    if mode == "single_label":
        y_true = np.asarray(y_true)
        y_pred = np.asarray(y_pred)
        if y_true.shape != y_pred.shape or y_true.ndim != 1:
            raise ValueError("y_true and y_pred must be equal-length vectors")
        labels = np.unique(np.concatenate([y_true, y_pred]))
        t = y_true[:, None] == labels[None, :]
        p = y_pred[:, None] == labels[None, :]
    elif mode == "multi_label":
        t = np.asarray(y_true).astype(bool)
        p = np.asarray(y_pred).astype(bool)
        if t.shape != p.shape or t.ndim != 2:
            raise ValueError("y_true and y_pred must be equal-shape indicator matrices")
        labels = np.arange(t.shape[1])
    else:
        raise ValueError(f"unknown mode {mode!r}")
    tp = (t & p).sum(axis=0)
    fp = (~t & p).sum(axis=0)
    fn = (t & ~p).sum(axis=0)
    stats = np.array([_prf(*c) for c in zip(tp, fp, fn)]).reshape(-1, 3)
    return labels, stats[:, 0], stats[:, 1], stats[:, 2], t.sum(axis=0)


def weighted_prf(y_true, y_pred, mode: str = "single_label") -> dict[str, float]:
    """Support-weighted precision, recall and F1.

    Zero-division cells count as 0; labels with no true sample carry zero
    weight.
    """
    if len(y_true) == 0:
        raise ValueError("empty input")
    _, p, r, f, support = per_class_prf(y_true, y_pred, mode)
    total = support.sum()
    if total == 0:
        return {"precision_w": 0.0, "recall_w": 0.0, "f1_w": 0.0}
    w = support / total
    return {
        "precision_w": float(p @ w),
        "recall_w": float(r @ w),
        "f1_w": float(f @ w),
    }


# ------------------------------------------------------------------ tasks


@dataclass
class FoldScore:
    fold: int
    precision_w: float
    recall_w: float
    f1_w: float


@dataclass
class TaskResult:
    task_id: str
    source: str
    classifier: str
    folds: list[FoldScore]
    sample_count: int
    class_support: dict
    skipped_folds: list[int] = field(default_factory=list)
    eligible: bool = True
    metadata: dict = field(default_factory=dict)

    def _stat(self, name, fn):
        vals = [getattr(f, name) for f in self.folds]
        return fn(vals) if vals else math.nan

    @property
    def mean(self) -> dict[str, float]:
        return {m: self._stat(m, np.mean) for m in ("precision_w", "recall_w", "f1_w")}

    @property
    def std(self) -> dict[str, float]:
        return {m: self._stat(m, np.std) for m in ("precision_w", "recall_w", "f1_w")}


def run_task(
    task: TaskLabeling,
    matrix: FeatureMatrix,
    classifier: str,
    cfg: TrainConfig = TrainConfig(),
    groups: Mapping[str, str] | None = None,
    k: int = 5,
    fold_seed: int = 42,
) -> TaskResult:
    """k-fold cross-validated scores of one classifier on one task/source.

    Folds whose training split lacks a class are skipped and reported.
    """
    if classifier not in CLASSIFIERS:
        raise ValueError(f"unknown classifier {classifier!r}")
    data = common_universe([matrix], task)
    x = data.matrices[0]
    y = data.y
    ids = data.sample_ids
    labels = {sid: task.labels[sid] if task.mode == "multi_label" else next(iter(task.labels[sid]))
              for sid in ids}
    sub_groups = None if groups is None else {sid: groups[sid] for sid in ids}
    plan = stratified_kfold(labels, k=k, seed=fold_seed, groups=sub_groups)
    fold_of = np.array([plan.assignments[s] for s in ids])

    if task.mode == "single_label":
        support = {str(c): int((y == i).sum()) for i, c in enumerate(data.classes)}
    else:
        support = {str(c): int(y[:, i].sum()) for i, c in enumerate(data.classes)}
    scores, skipped = [], []
    for fold in range(k):
        train, test = fold_of != fold, fold_of == fold
        if not test.any():
            skipped.append(fold)
            continue
        if task.mode == "single_label" and len(np.unique(y[train])) < len(data.classes):
            log.warning("%s/%s/%s fold %d: training split lacks a class, skipped",
                        task.task_id, matrix.source, classifier, fold)
            skipped.append(fold)
            continue
        try:
            if classifier == "svm":
                model = train_svm(x[train], y[train], cfg, mode=task.mode)
            else:
                nn_mode = "softmax_categorical" if task.mode == "single_label" else "sigmoid_binary"
                model = train_nn(x[train], y[train], nn_mode, cfg, n_classes=len(data.classes))
        except TrainingError as exc:
            log.warning("fold %d skipped: %s", fold, exc)
            skipped.append(fold)
            continue
        pred = predict(model, x[test])
        m = weighted_prf(y[test], pred, task.mode)
        scores.append(FoldScore(fold, m["precision_w"], m["recall_w"], m["f1_w"]))
    meta = {
        "decisions": dict(DECISIONS),
        "fold_seed": fold_seed,
        "k": k,
        "grouped_folds": groups is not None,
        "train_seed": cfg.seed,
        "plan_warnings": plan.warnings,
    }
    return TaskResult(task.task_id, matrix.source, classifier, scores, len(ids), support,
                      skipped, True, meta)


def graph_eligible(source: str, task_id: str, families: Mapping[str, Sequence[str]] | None = None) -> bool:
    """A graph embedding may not serve a task whose labels are graph attributes."""
    families = GRAPH_FAMILIES if families is None else families
    if source not in families:
        return True
    return TASK_FAMILY[task_id] not in set(families[source])


def run_suite(
    tasks: Sequence[TaskLabeling],
    matrices: Sequence[FeatureMatrix],
    classifiers: Sequence[str] = CLASSIFIERS,
    cfg: TrainConfig = TrainConfig(),
    groups: Mapping[str, str] | None = None,
    k: int = 5,
    fold_seed: int = 42,
    jobs: int = 1,
    graph_families: Mapping[str, Sequence[str]] | None = None,
) -> list[TaskResult]:
    """Every (task, source, classifier) cell, sorted in table order.

    Ineligible graph cells come back with ``eligible=False`` and no folds.
    A cell whose samples cannot be split (no shared ids, too few statues for
    ``k`` folds) comes back with no folds and the reason in its metadata.
    """
    cells = [(t, m, c) for t in tasks for m in matrices for c in classifiers]
    if not cells:
        warnings.warn("empty evaluation grid")
        return []

    def work(cell):
        t, m, c = cell
        if not graph_eligible(m.source, t.task_id, graph_families):
            return TaskResult(t.task_id, m.source, c, [], 0, {}, eligible=False)
        try:
            return run_task(t, m, c, cfg, groups, k, fold_seed)
        except (EmptyIntersectionError, ValidationError) as exc:
            log.warning("%s/%s/%s not evaluated: %s", t.task_id, m.source, c, exc)
            return TaskResult(t.task_id, m.source, c, [], 0, {}, metadata={"error": str(exc)})

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(work, cells))
    else:
        results = [work(c) for c in cells]
    return sort_results(results)


def sort_results(results: Sequence[TaskResult]) -> list[TaskResult]:
    def key(r):
        src = SOURCE_ORDER.index(r.source) if r.source in SOURCE_ORDER else len(SOURCE_ORDER)
        return (src, r.source, TASKS.index(r.task_id), CLASSIFIERS.index(r.classifier))

    return sorted(results, key=key)


def shuffled(task: TaskLabeling, seed: int = 0, groups: Mapping[str, str] | None = None) -> TaskLabeling:
    """The same task with labels permuted across samples (a null control).

    With ``groups`` the permutation is over groups, so every group keeps a
    single label set.
    """
    ids = sorted(task.labels)
    if groups is None:
        perm = np.random.default_rng(seed).permutation(len(ids))
        return replace(task, labels={ids[i]: task.labels[ids[j]] for i, j in enumerate(perm)})
    members = defaultdict(list)
    for sid in ids:
        members[groups[sid]].append(sid)
    names = sorted(members)
    perm = np.random.default_rng(seed).permutation(len(names))
    labels = {}
    for i, j in enumerate(perm):
        donor = task.labels[members[names[j]][0]]
        for sid in members[names[i]]:
            labels[sid] = donor
    return replace(task, labels=labels)
