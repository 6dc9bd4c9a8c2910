from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import numpy as np
import pytest

from buddhaface import bundled_path
from buddhaface.catalog import TASKS, ingest_catalog, write_catalog
from buddhaface.cli import main, read_config
from buddhaface.features import ingest_embeddings, write_embeddings
from buddhaface.iconometry import COMPONENTS, THEORETICAL_CANON
from buddhaface.landmarks import LandmarkSet, write_landmarks
from buddhaface.synthetic import canonical_face, make_cohort

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "scripts"))
import build_data  # noqa: E402

CATALOG = bundled_path("synthetic/catalog.csv")
LANDMARKS = bundled_path("synthetic/landmarks.json")
QUICK_KG = ["--walk-length", "10", "--walks-per-node", "2", "--n2v-epochs", "1"]
QUICK_NN = ["--epochs", "20", "--lr", "0.05"]


def rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def cohort_files(tmp_path, **kw):
    c = make_cohort(**kw)
    write_catalog(c.records, tmp_path / "cat.csv", "csv")
    write_landmarks([LandmarkSet(k, v) for k, v in sorted(c.landmarks.items())],
                    tmp_path / "lm.json")
    return tmp_path / "cat.csv", tmp_path / "lm.json"


# ---------------------------------------------------------------- measure


def test_measure_template_gives_canon(tmp_path):
    out = tmp_path / "p.csv"
    assert main(["measure", str(bundled_path("template_landmarks.json")), "--out", str(out)]) == 0
    (row,) = rows(out)
    np.testing.assert_allclose([float(row[c]) for c in COMPONENTS], THEORETICAL_CANON, atol=1e-6)
    guides = json.loads(out.with_suffix(".guidelines.json").read_text())
    assert set(guides) == {row["image_id"]}
    man = json.loads((tmp_path / "p.csv.manifest.json").read_text())
    assert man["command"] == "measure" and man["notes"]["failures"] == []
    assert len(man["inputs"]) == 1 and all(len(v) == 64 for v in man["inputs"].values())


@pytest.mark.parametrize("content", ["", "[]"])
def test_measure_empty_input(tmp_path, content, caplog):
    src = tmp_path / "lm.json"
    src.write_text(content)
    assert main(["measure", str(src), "--out", str(tmp_path / "p.csv")]) == 0
    assert (tmp_path / "p.csv").read_text().strip() == ",".join(["image_id", *COMPONENTS])
    assert "no landmark sets" in caplog.text


def test_measure_continues_past_bad_entry(tmp_path):
    face = canonical_face()
    entries = [
        {"image_id": "a", "points": face.tolist()},
        {"image_id": "b", "points": face[:60].tolist()},
        {"image_id": "c", "points": (face * 2).tolist()},
    ]
    src = tmp_path / "lm.json"
    src.write_text(json.dumps(entries))
    assert main(["measure", str(src), "--out", str(tmp_path / "p.csv")]) == 0
    assert [r["image_id"] for r in rows(tmp_path / "p.csv")] == ["a", "c"]
    man = json.loads((tmp_path / "p.csv.manifest.json").read_text())
    assert [f[0] for f in man["notes"]["failures"]] == ["b"]


# ---------------------------------------------------------------- analyze


def test_analyze_bundled(tmp_path):
    props = tmp_path / "p.csv"
    assert main(["measure", str(LANDMARKS), "--out", str(props)]) == 0
    assert len(rows(props)) == 108
    assert main(["analyze", str(props), str(CATALOG), "--out", str(tmp_path / "d.csv")]) == 0
    dist = rows(tmp_path / "d.csv")
    assert [r["kind"] for r in dist].count("canon") == 2
    assert {r["group"]: int(r["count"]) for r in dist if r["kind"] == "style"} == {
        "China": 36, "Heian": 36, "Kamakura": 36}
    deltas = rows(tmp_path / "d.deltas.csv")
    assert len(deltas) == 6
    d_n = {r["group"]: float(r["d_n"]) for r in deltas if r["baseline"] == "theoretical_tibetan"}
    assert d_n["China"] - d_n["Heian"] == pytest.approx(0.05, abs=0.01)


def test_analyze_without_join_fails(tmp_path, capsys):
    props = tmp_path / "p.csv"
    props.write_text("image_id,lh,rh,el,e,n,lf\nghost,0.5,0.5,0.1,0.1,0.2,0.3\n")
    assert main(["analyze", str(props), str(CATALOG), "--out", str(tmp_path / "d.csv")]) == 1
    assert "no proportion row" in capsys.readouterr().err


# ---------------------------------------------------------------- kg


def test_kg_counts_and_determinism(tmp_path):
    cat, _ = cohort_files(tmp_path, statues_per_style=2, images_per_statue=2, seed=1)
    args = ["kg", str(cat), "--out-graph", str(tmp_path / "g"), *QUICK_KG]
    assert main([*args, "--out-emb", str(tmp_path / "e1.csv")]) == 0
    assert main([*args, "--out-emb", str(tmp_path / "e2.csv")]) == 0
    assert (tmp_path / "e1.csv").read_bytes() == (tmp_path / "e2.csv").read_bytes()
    fm = ingest_embeddings(tmp_path / "e1.csv", "graph_kg")
    assert len(fm.sample_ids) == 12 and fm.dim == 128
    nodes = rows(tmp_path / "g.nodes.csv")
    assert sum(1 for n in nodes if n["kind"] == "statue_image") == 12
    man = json.loads((tmp_path / "e1.csv.manifest.json").read_text())
    assert man["notes"]["source"] == "graph_kg"
    assert man["notes"]["edges"] == len((tmp_path / "g.edges.tsv").read_text().splitlines())


def test_kg_time_adds_century_nodes(tmp_path):
    cat, _ = cohort_files(tmp_path, statues_per_style=2, images_per_statue=2, seed=1)
    records, _ = ingest_catalog(cat)
    for flag, name in (([], "plain"), (["--time"], "time")):
        assert main(["kg", str(cat), *flag, "--out-graph", str(tmp_path / name),
                     "--out-emb", str(tmp_path / f"{name}.csv"), *QUICK_KG]) == 0
    plain = len(rows(tmp_path / "plain.nodes.csv"))
    timed = len(rows(tmp_path / "time.nodes.csv"))
    centuries = set().union(*(rec.attribute_values("century") for rec in records))
    assert timed - plain == len(centuries)


# ---------------------------------------------------------------- embed-ingest


def test_embed_ingest_drops_unknown_and_converts(tmp_path):
    ids = ["ch000_0", "ch000_1", "stray"]
    write_embeddings(ids, np.arange(3 * 2048, dtype=float).reshape(3, 2048), tmp_path / "e.csv")
    assert main(["embed-ingest", str(tmp_path / "e.csv"), "--source", "image_embedding_face",
                 "--catalog", str(CATALOG), "--out", str(tmp_path / "e.bin"), "--binary"]) == 0
    fm = ingest_embeddings(tmp_path / "e.bin", "image_embedding_face")
    assert fm.sample_ids == ("ch000_0", "ch000_1")
    man = json.loads((tmp_path / "e.bin.manifest.json").read_text())
    assert man["notes"]["excluded"] == ["stray"]


def test_embed_ingest_wrong_dimension(tmp_path):
    write_embeddings(["a"], np.zeros((1, 5)), tmp_path / "e.csv")
    assert main(["embed-ingest", str(tmp_path / "e.csv"), "--source", "graph_kg",
                 "--out", str(tmp_path / "o.csv")]) == 1


# ---------------------------------------------------------------- classify


@pytest.fixture(scope="module")
def bundled_features(tmp_path_factory):
    d = tmp_path_factory.mktemp("feat")
    assert main(["measure", str(LANDMARKS), "--out", str(d / "icon.csv")]) == 0
    assert main(["kg", str(CATALOG), "--out-graph", str(d / "g"), "--out-emb",
                 str(d / "kg.csv"), *QUICK_KG]) == 0
    return d


def classify(features_dir, out, *extra):
    icon = features_dir / "icon_feat.csv"
    if not icon.exists():
        data = rows(features_dir / "icon.csv")
        write_embeddings([r["image_id"] for r in data],
                         np.array([[float(r[c]) for c in COMPONENTS] for r in data]), icon)
    return main(["classify", "--catalog", str(CATALOG),
                 "--features", f"iconometry={icon}",
                 "--features", f"graph_kg={features_dir / 'kg.csv'}",
                 "--out-dir", str(out), *QUICK_NN, *extra])


def test_classify_grid(bundled_features, tmp_path, capsys):
    out = tmp_path / "run"
    assert classify(bundled_features, out, "--tasks", "T1_style,T2_dimensions") == 0
    summary = rows(out / "summary.csv")
    assert len(summary) == 2 * 2 * 2
    ineligible = {(r["task"], r["source"]) for r in summary if r["eligible"] == "0"}
    assert ineligible == {("T2_dimensions", "graph_kg")}
    table = (out / "table.txt").read_text()
    assert table == capsys.readouterr().out
    assert table.count("—") == 2
    man = json.loads((out / "manifest.json").read_text())
    assert man["notes"]["universe_size"] == 108 and man["notes"]["grouped_folds"]
    assert set(man["outputs"]) >= {str(out / "results.csv")}
    results = rows(out / "results.csv")
    assert {r["fold"] for r in results} <= {"0", "1", "2", "3", "4"}
    style_svm = [r for r in summary if r["task"] == "T1_style" and r["source"] == "iconometry"
                 and r["classifier"] == "svm"][0]
    assert float(style_svm["f1_mean"]) > 0.5


def test_classify_deterministic_across_jobs(bundled_features, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert classify(bundled_features, a, "--tasks", "T1_style") == 0
    assert classify(bundled_features, b, "--tasks", "T1_style", "--jobs", "3") == 0
    assert (a / "results.csv").read_bytes() == (b / "results.csv").read_bytes()


def test_classify_graph_tasks_override(bundled_features, tmp_path):
    out = tmp_path / "r"
    assert classify(bundled_features, out, "--tasks", "T1_style,T2_dimensions",
                    "--classifiers", "svm", "--graph-tasks", "graph_kg=T1_style") == 0
    eligible = {(r["task"], r["source"]): r["eligible"] for r in rows(out / "summary.csv")}
    assert eligible[("T1_style", "graph_kg")] == "1"
    assert eligible[("T2_dimensions", "graph_kg")] == "0"
    assert classify(bundled_features, tmp_path / "r2", "--tasks", "T2_dimensions",
                    "--classifiers", "svm", "--graph-tasks", "graph_kg=T2_dimensions") == 0
    (graph,) = [r for r in rows(tmp_path / "r2" / "summary.csv") if r["source"] == "graph_kg"]
    assert graph["eligible"] == "1" and graph["folds_used"] == "5"
    assert classify(bundled_features, tmp_path / "r3", "--graph-tasks", "iconometry=T1") == 1


def test_classify_per_image_folds(bundled_features, tmp_path):
    out = tmp_path / "r"
    assert classify(bundled_features, out, "--tasks", "T1_style", "--classifiers", "svm",
                    "--per-image-folds") == 0
    assert not json.loads((out / "manifest.json").read_text())["notes"]["grouped_folds"]


def test_classify_empty_universe(tmp_path, capsys):
    write_embeddings(["nobody"], np.zeros((1, 6)), tmp_path / "f.csv")
    code = main(["classify", "--catalog", str(CATALOG), "--features",
                 f"iconometry={tmp_path / 'f.csv'}", "--out-dir", str(tmp_path / "o")])
    assert code == 1
    assert "no shared samples" in capsys.readouterr().err


@pytest.mark.parametrize("bad", [["--features", "bogus=x.csv"], ["--tasks", "T9"], []])
def test_classify_usage_errors(tmp_path, bad):
    assert main(["classify", "--catalog", str(CATALOG), *bad,
                 "--out-dir", str(tmp_path)]) == 1


# ---------------------------------------------------------------- report, config, misc


def test_report_round_trip(bundled_features, tmp_path, capsys):
    out = tmp_path / "run"
    assert classify(bundled_features, out, "--tasks", "T1_style", "--classifiers", "svm") == 0
    capsys.readouterr()
    assert main(["report", str(out / "summary.csv")]) == 0
    assert capsys.readouterr().out == (out / "table.txt").read_text()
    assert main(["report", str(out / "summary.csv"), "--out", str(tmp_path / "t.txt")]) == 0
    assert (tmp_path / "t.txt").read_text() == (out / "table.txt").read_text()
    assert main(["report", str(out / "results.csv")]) == 1


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"# measure settings\nout = {tmp_path / 'from_cfg.csv'}\n")
    assert read_config(cfg) == {"out": str(tmp_path / "from_cfg.csv")}
    tmpl = str(bundled_path("template_landmarks.json"))
    assert main(["measure", tmpl, "--config", str(cfg)]) == 0
    assert (tmp_path / "from_cfg.csv").exists()
    assert main(["measure", tmpl, "--config", str(cfg), "--out", str(tmp_path / "flag.csv")]) == 0
    assert (tmp_path / "flag.csv").exists()


def test_config_repeatable_flag(bundled_features, tmp_path):
    icon = bundled_features / "icon_feat.csv"
    if not icon.exists():
        classify(bundled_features, tmp_path / "warm", "--tasks", "T1_style", "--classifiers", "svm")
    cfg = tmp_path / "c.cfg"
    cfg.write_text(f"features = iconometry={icon}; graph_kg={bundled_features / 'kg.csv'}\n"
                   "tasks = T1_style\nclassifiers = svm\nper-image-folds = true\n")
    assert main(["classify", "--config", str(cfg), "--catalog", str(CATALOG),
                 "--out-dir", str(tmp_path / "o")]) == 0
    summary = rows(tmp_path / "o" / "summary.csv")
    assert {r["source"] for r in summary} == {"iconometry", "graph_kg"}
    assert not json.loads((tmp_path / "o" / "manifest.json").read_text())["notes"]["grouped_folds"]


def test_help_and_exit_codes(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["classify", "--help"])
    assert exc.value.code == 0
    assert "D-EVAL-2" in capsys.readouterr().out
    assert main(["nonsense"]) == 1
    assert main(["measure", "/does/not/exist.json", "--out", "/tmp/x.csv"]) == 1


def test_bundled_data_matches_regeneration(tmp_path):
    build_data.main(["--out", str(tmp_path)])
    for name in ("template_landmarks.json", "canon_baselines.json",
                 "synthetic/catalog.csv", "synthetic/landmarks.json"):
        assert (tmp_path / name).read_bytes() == bundled_path(name).read_bytes(), name


def test_bundled_catalog_is_clean():
    records, rejections = ingest_catalog(CATALOG)
    assert len(records) == 36 and not rejections
    assert set(TASKS) >= {"T1_style"}
