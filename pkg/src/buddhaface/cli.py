"""Command-line entry point.

    buddhaface measure LANDMARKS --out proportions.csv
    buddhaface analyze proportions.csv CATALOG --out distribution.csv
    buddhaface kg CATALOG --out-graph graph --out-emb kg.csv
    buddhaface embed-ingest vectors.csv --source image_embedding_face --catalog CATALOG --out face.csv
    buddhaface classify --catalog CATALOG --features iconometry=proportions.csv --out-dir run/
    buddhaface report run/summary.csv

Every command accepts ``--config FILE`` holding ``key = value`` lines named
after the long flags (repeatable flags take ``;``-separated values); flags
given on the command line win. Each output is
accompanied by a JSON run manifest. Exit status is 0 on success, 1 when the
input is invalid and 2 on an internal error.
"""

from __future__ import annotations

import argparse
import datetime as dt
import hashlib
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__, bundled_path
from .catalog import TASK_FAMILY, TASKS, build_labelings, image_groups, ingest_catalog
from .errors import BuddhaFaceError, ParseError, ValidationError
from .evalharness import CLASSIFIERS, DECISIONS, GRAPH_FAMILIES, run_suite
from .features import SOURCES, FeatureMatrix, common_universe, ingest_embeddings, write_embeddings
from .iconometry import aggregate_by_style, load_baselines, proportions_from_landmarks
from .kgraph import Node2VecConfig, build_kg, node2vec, write_graph
from .landmarks import LandmarkSet, load_landmarks, normalize_pose
from .learn import AdamConfig, TrainConfig
from . import report

log = logging.getLogger("buddhaface")


class UsageError(BuddhaFaceError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ------------------------------------------------------------------ manifest


def sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    command: str
    config: dict
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    seed: int | None = None
    version: str = __version__
    started: str = field(default_factory=_now)
    finished: str = ""
    notes: dict = field(default_factory=dict)

    def add_input(self, path):
        self.inputs[str(path)] = sha256(path)

    def add_output(self, path):
        self.outputs[str(path)] = sha256(path)

    def write(self, path: str | Path):
        self.finished = _now()
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n",
                              encoding="utf-8")


def manifest_path(out: str | Path) -> Path:
    out = Path(out)
    return out.with_name(out.name + ".manifest.json")


def _snapshot(args) -> dict:
    skip = {"func", "config"}
    out = {}
    for k, v in sorted(vars(args).items()):
        if k in skip:
            continue
        out[k] = str(v) if isinstance(v, Path) else v
    return out


# ------------------------------------------------------------------ commands


def cmd_measure(args) -> int:
    path = Path(args.landmarks)
    template_path = Path(args.template) if args.template else bundled_path("template_landmarks.json")
    man = RunManifest("measure", _snapshot(args))
    man.add_input(path)
    man.add_input(template_path)

    templates, bad = load_landmarks(template_path)
    if len(templates) != 1 or bad:
        raise ValidationError(f"{template_path}: template file must hold exactly one valid entry")
    template = templates[0]

    if path.read_text(encoding="utf-8").strip() in ("", "[]"):
        log.warning("%s holds no landmark sets", path)
        sets, failures = [], []
    else:
        sets, failures = load_landmarks(path)
    vectors, guides = [], {}
    failures = [list(f) for f in failures]
    for lm in sets:
        try:
            g, vec = proportions_from_landmarks(normalize_pose(lm, template))
        except BuddhaFaceError as exc:
            log.warning("%s: %s", lm.image_id, exc)
            failures.append([lm.image_id, str(exc)])
            continue
        vectors.append(vec)
        guides[lm.image_id] = g.to_dict()

    out = Path(args.out)
    report.write_proportions_csv(vectors, out)
    guide_path = Path(args.guidelines) if args.guidelines else out.with_suffix(".guidelines.json")
    guide_path.write_text(json.dumps({k: guides[k] for k in sorted(guides)}, indent=1) + "\n",
                          encoding="utf-8")
    man.add_output(out)
    man.add_output(guide_path)
    man.notes = {"measured": len(vectors), "failures": sorted(failures)}
    man.write(manifest_path(out))
    log.info("measured %d image(s), %d failure(s)", len(vectors), len(failures))
    return 0


def _read_catalog(path):
    records, rejections = ingest_catalog(path)
    for r in rejections:
        log.warning("catalog row %s rejected (%s): %s", r.row, r.field, r.reason)
    return records, rejections


def cmd_analyze(args) -> int:
    man = RunManifest("analyze", _snapshot(args))
    man.add_input(args.proportions)
    man.add_input(args.catalog)
    vectors = report.read_proportions_csv(args.proportions)
    records, _ = _read_catalog(args.catalog)
    style_of = {img: rec.style for rec in records for img in rec.image_ids}
    joined = [v for v in vectors if v.image_id in style_of]
    if len(joined) < len(vectors):
        log.warning("%d proportion row(s) have no catalog entry", len(vectors) - len(joined))
    if not joined:
        raise ValidationError("no proportion row joins the catalog")
    summaries = aggregate_by_style((style_of[v.image_id], v) for v in joined)
    baselines = load_baselines()

    out = Path(args.out)
    report.write_dicts(report.distribution_rows(summaries, baselines),
                       report.distribution_header(), out)
    deltas = Path(args.deltas) if args.deltas else out.with_suffix(".deltas.csv")
    report.write_dicts(report.delta_rows(summaries, baselines),
                       ["group", "baseline", *(f"d_{c}" for c in report.COMPONENTS), "l1"], deltas)
    man.add_output(out)
    man.add_output(deltas)
    man.write(manifest_path(out))
    return 0


def _node2vec_config(args) -> Node2VecConfig:
    return Node2VecConfig(
        walk_length=args.walk_length,
        walks_per_node=args.walks_per_node,
        return_p=args.p,
        inout_q=args.q,
        window=args.window,
        negatives=args.negatives,
        epochs=args.n2v_epochs,
        learning_rate=args.n2v_lr,
        seed=args.seed,
        workers=args.workers,
    )


def cmd_kg(args) -> int:
    man = RunManifest("kg", _snapshot(args), seed=args.seed)
    man.add_input(args.catalog)
    records, _ = _read_catalog(args.catalog)
    if not records:
        raise ValidationError("catalog holds no valid statue")
    kg = build_kg(records, include_time=args.time)
    prefix = Path(args.out_graph)
    edges = prefix.with_name(prefix.name + ".edges.tsv")
    nodes = prefix.with_name(prefix.name + ".nodes.csv")
    write_graph(kg, edges, nodes)

    emb = node2vec(kg, _node2vec_config(args))
    images = sorted(n for n, node in kg.nodes.items() if node.kind == "statue_image")
    out = Path(args.out_emb)
    write_embeddings(images, emb.matrix[[emb.ids.index(i) for i in images]], out, args.binary)
    for p in (edges, nodes, out):
        man.add_output(p)
    man.notes = {
        "source": "graph_kg_time" if args.time else "graph_kg",
        "nodes": len(kg.nodes),
        "edges": len(kg.edges),
        "families": list(kg.families),
    }
    man.write(manifest_path(out))
    return 0


def cmd_embed_ingest(args) -> int:
    man = RunManifest("embed-ingest", _snapshot(args))
    man.add_input(args.embeddings)
    known = None
    if args.catalog:
        man.add_input(args.catalog)
        records, _ = _read_catalog(args.catalog)
        known = set(image_groups(records))
    fm = ingest_embeddings(args.embeddings, args.source, known)
    out = Path(args.out)
    write_embeddings(list(fm.sample_ids), fm.matrix, out, args.binary)
    man.add_output(out)
    man.notes = {"source": fm.source, "rows": len(fm.sample_ids), "excluded": list(fm.excluded)}
    man.write(manifest_path(out))
    return 0


def _parse_features(specs) -> list[tuple[str, Path]]:
    out = []
    for spec in specs or []:
        source, sep, path = spec.partition("=")
        if not sep or source not in SOURCES:
            raise UsageError(f"--features expects SOURCE=PATH with SOURCE in {', '.join(SOURCES)}")
        out.append((source, Path(path)))
    if not out:
        raise UsageError("at least one --features SOURCE=PATH is required")
    if len({s for s, _ in out}) != len(out):
        raise UsageError("each feature source may be given once")
    return out


def _split_list(value, allowed, name) -> list[str]:
    items = [v.strip() for v in value.split(",") if v.strip()]
    unknown = [v for v in items if v not in allowed]
    if unknown:
        raise UsageError(f"unknown {name}: {', '.join(unknown)}")
    return items


def _graph_tasks(specs) -> dict[str, tuple[str, ...]] | None:
    """``SOURCE=T1_style,T3_century`` -> families that source may not serve."""
    if not specs:
        return None
    families = {src: tuple(fams) for src, fams in GRAPH_FAMILIES.items()}
    for spec in specs:
        source, sep, value = spec.partition("=")
        if not sep or source not in GRAPH_FAMILIES:
            raise UsageError(f"--graph-tasks expects SOURCE=TASKS with SOURCE in "
                             f"{', '.join(GRAPH_FAMILIES)}")
        allowed = {TASK_FAMILY[t] for t in _split_list(value, TASKS, "task")}
        families[source] = tuple(sorted({TASK_FAMILY[t] for t in TASKS} - allowed))
    return families


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        adam=AdamConfig(lr=args.lr),
        svm_epochs=args.svm_epochs,
        svm_tol=args.svm_tol,
        penalty_c=args.penalty_c,
        class_weighting=not args.no_class_weights,
        seed=args.seed,
    )


def _restrict(m: FeatureMatrix, ids: list[str]) -> FeatureMatrix:
    return FeatureMatrix(m.source, tuple(ids), m.rows(ids), m.excluded)


def cmd_classify(args) -> int:
    feats = _parse_features(args.features)
    tasks = _split_list(args.tasks, TASKS, "task")
    classifiers = _split_list(args.classifiers, CLASSIFIERS, "classifier")
    cfg = _train_config(args)
    man = RunManifest("classify", _snapshot(args), seed=args.seed)
    man.add_input(args.catalog)
    records, _ = _read_catalog(args.catalog)
    known = set(image_groups(records))
    matrices = []
    for source, path in feats:
        man.add_input(path)
        matrices.append(ingest_embeddings(path, source, known))

    # every source is evaluated on the same images
    labelings = {t.task_id: t for t in build_labelings(records)}
    everything = type(labelings[TASKS[0]])("all", "single_label", {i: frozenset(["_"]) for i in known})
    universe = list(common_universe(matrices, everything).sample_ids)
    matrices = [_restrict(m, universe) for m in matrices]
    groups = None if args.per_image_folds else image_groups(records)

    results = run_suite([labelings[t] for t in tasks], matrices, classifiers, cfg, groups,
                        k=args.folds, fold_seed=args.seed, jobs=args.jobs,
                        graph_families=_graph_tasks(args.graph_tasks))
    if results and not any(r.eligible for r in results):
        log.warning("no eligible task/source cell; the table is empty")

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report.write_results_csv(results, out / "results.csv")
    report.write_summary_csv(results, out / "summary.csv")
    table = report.render_table(report.summary_rows(results))
    (out / "table.txt").write_text(table, encoding="utf-8")
    for name in ("results.csv", "summary.csv", "table.txt"):
        man.add_output(out / name)
    man.notes = {
        "universe_size": len(universe),
        "grouped_folds": groups is not None,
        "folds": args.folds,
        "decisions": DECISIONS,
        "score": "mean and population std of weighted F1 over folds",
        "cells": {f"{r.task_id}/{r.source}/{r.classifier}": {
            "samples": r.sample_count, "skipped_folds": r.skipped_folds,
            "support": r.class_support, **({"error": r.metadata["error"]}
                                           if "error" in r.metadata else {})}
            for r in results},
    }
    man.write(out / "manifest.json")
    sys.stdout.write(table)
    return 0


def cmd_report(args) -> int:
    rows = report.read_summary_csv(args.summary)
    table = report.render_table(rows)
    if args.out:
        Path(args.out).write_text(table, encoding="utf-8")
        man = RunManifest("report", _snapshot(args))
        man.add_input(args.summary)
        man.add_output(args.out)
        man.write(manifest_path(args.out))
    else:
        sys.stdout.write(table)
    return 0


# ------------------------------------------------------------------ parser


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    top = _Parser(prog="buddhaface", description=__doc__.splitlines()[0])
    top.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    top.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = top.add_subparsers(dest="command", required=True, parser_class=_Parser)
    subs = {}

    def command(name, func, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", type=Path, help="key = value file mirroring the long flags")
        p.set_defaults(func=func)
        subs[name] = p
        return p

    p = command("measure", cmd_measure, "3D landmarks to six face proportions per image")
    p.add_argument("landmarks", help="JSON array of {image_id, points}")
    p.add_argument("--template", help="frontal template landmarks; default: the bundled "
                   "synthetic canon face (D-LM-1, D-LM-2)")
    p.add_argument("--out", required=True, help="proportion CSV")
    p.add_argument("--guidelines", help="guideline JSON (default: OUT with .guidelines.json)")

    p = command("analyze", cmd_analyze, "per-style proportion distributions and canon deltas")
    p.add_argument("proportions")
    p.add_argument("catalog")
    p.add_argument("--out", required=True, help="distribution CSV")
    p.add_argument("--deltas", help="delta CSV (default: OUT with .deltas.csv)")

    p = command("kg", cmd_kg, "artistic knowledge graph and node2vec image embeddings")
    p.add_argument("catalog")
    p.add_argument("--time", action="store_true", help="add century nodes (KG_time)")
    p.add_argument("--out-graph", required=True, help="prefix for .edges.tsv and .nodes.csv")
    p.add_argument("--out-emb", required=True, help="image embedding file")
    p.add_argument("--binary", action="store_true", help="write ICOEMB1 instead of CSV")
    d = Node2VecConfig()
    p.add_argument("--walk-length", type=int, default=d.walk_length, help="(D-KG-2)")
    p.add_argument("--walks-per-node", type=int, default=d.walks_per_node, help="(D-KG-2)")
    p.add_argument("--p", type=float, default=d.return_p, help="return parameter (D-KG-2)")
    p.add_argument("--q", type=float, default=d.inout_q, help="in-out parameter (D-KG-2)")
    p.add_argument("--window", type=int, default=d.window, help="(D-KG-2)")
    p.add_argument("--negatives", type=int, default=d.negatives,
                   help="negatives per pair, unigram^0.75 (D-KG-2, D-KG-3)")
    p.add_argument("--n2v-epochs", type=int, default=d.epochs, help="(D-KG-2)")
    p.add_argument("--n2v-lr", type=float, default=d.learning_rate, help="(D-KG-2)")
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--workers", type=int, default=d.workers,
                   help="training threads; only 1 is bit-reproducible (D-KG-4)")

    p = command("embed-ingest", cmd_embed_ingest, "validate a precomputed embedding file")
    p.add_argument("embeddings", help="CSV or ICOEMB1 file (D-FEA-2)")
    p.add_argument("--source", required=True, choices=SOURCES)
    p.add_argument("--catalog", help="drop ids that are not catalog images")
    p.add_argument("--out", required=True)
    p.add_argument("--binary", action="store_true", help="write ICOEMB1 instead of CSV")

    p = command("classify", cmd_classify, "cross-validated SVM/NN scores per task and source")
    p.add_argument("--catalog", required=True)
    p.add_argument("--features", action="append", metavar="SOURCE=PATH",
                   help="repeatable; all sources share one image set (D-FEA-1)")
    p.add_argument("--tasks", default=",".join(TASKS), help="comma list (default: all)")
    p.add_argument("--classifiers", default=",".join(CLASSIFIERS), help="comma list")
    p.add_argument("--graph-tasks", action="append", metavar="SOURCE=TASK,...",
                   help="tasks a graph source may serve (default: those whose labels "
                        "are not graph attributes)")
    p.add_argument("--per-image-folds", action="store_true",
                   help="split a statue's images across folds (D-EVAL-2)")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int, default=42, help="fold and training seed (D-EVAL-1)")
    p.add_argument("--jobs", type=int, default=1, help="parallel cells")
    t = TrainConfig()
    p.add_argument("--epochs", type=int, default=t.epochs, help="NN epochs (D-LRN-2)")
    p.add_argument("--batch-size", type=int, default=t.batch_size, help="(D-LRN-2)")
    p.add_argument("--lr", type=float, default=t.adam.lr, help="Adam step size (D-LRN-2)")
    p.add_argument("--svm-epochs", type=int, default=t.svm_epochs,
                   help="dual coordinate descent epoch cap")
    p.add_argument("--svm-tol", type=float, default=t.svm_tol)
    p.add_argument("--penalty-c", type=float, default=t.penalty_c, help="(D-LRN-1)")
    p.add_argument("--no-class-weights", action="store_true", help="disable N/(k n_m) weights")
    p.add_argument("--out-dir", required=True)

    p = command("report", cmd_report, "render the comparison table from a summary CSV")
    p.add_argument("summary")
    p.add_argument("--out", help="write the table here instead of stdout")
    return top, subs


def read_config(path: str | Path) -> dict[str, str]:
    values = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ParseError("expected key = value", line=lineno)
        values[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return values


def _config_defaults(parser: argparse.ArgumentParser, values: dict[str, str]) -> dict:
    actions = {a.dest: a for a in parser._actions}
    out = {}
    for key, value in values.items():
        action = actions.get(key)
        if action is None or key in ("help", "config"):
            raise UsageError(f"unknown config key {key!r}")
        if isinstance(action, argparse._StoreTrueAction):
            out[key] = value.lower() in ("1", "true", "yes", "on")
        elif isinstance(action, argparse._AppendAction):
            out[key] = [v.strip() for v in value.split(";") if v.strip()]
        else:
            out[key] = action.type(value) if action.type else value
    return out


def _config_path(argv: list[str]) -> str | None:
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def parse_args(argv=None) -> argparse.Namespace:
    argv = list(sys.argv[1:] if argv is None else argv)
    top, subs = build_parser()
    config = _config_path(argv)
    command = next((tok for tok in argv if tok in subs), None)
    if config and command:
        sub = subs[command]
        defaults = _config_defaults(sub, read_config(config))
        for a in sub._actions:
            if a.dest in defaults:
                a.required = False
        sub.set_defaults(**defaults)
    return top.parse_args(argv)


def main(argv=None) -> int:
    logging.basicConfig(format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        args = parse_args(argv)
        logging.getLogger().setLevel(logging.INFO if args.verbose else logging.WARNING)
        return args.func(args)
    except (BuddhaFaceError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
