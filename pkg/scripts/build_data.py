"""Regenerate the data files bundled with the package.

    python scripts/build_data.py

Writes the canonical frontal template, the two canon baselines and the small
synthetic dataset under src/buddhaface/data/.
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

from buddhaface.catalog import write_catalog
from buddhaface.iconometry import COMPONENTS, THEORETICAL_CANON, proportions_from_landmarks
from buddhaface.landmarks import LandmarkSet, normalize_pose, write_landmarks
from buddhaface.synthetic import BUNDLED_SEED, TEMPLATE_ID, canonical_face, make_cohort

DATA = Path(__file__).resolve().parents[1] / "src" / "buddhaface" / "data"


def baselines(template: LandmarkSet) -> dict:
    _, measured = proportions_from_landmarks(normalize_pose(template, template))
    theoretical = dict(zip(COMPONENTS, THEORETICAL_CANON))
    return {
        "baselines": [
            {"name": "theoretical_tibetan", **theoretical},
            {"name": "measured_tibetan_model",
             **{c: getattr(measured, c) for c in COMPONENTS}},
        ]
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=DATA)
    args = ap.parse_args(argv)
    out = args.out
    (out / "synthetic").mkdir(parents=True, exist_ok=True)

    template = LandmarkSet(TEMPLATE_ID, canonical_face())
    write_landmarks([template], out / "template_landmarks.json")
    text = json.dumps(baselines(template), indent=2) + "\n"
    (out / "canon_baselines.json").write_text(text, encoding="utf-8")

    cohort = make_cohort(seed=BUNDLED_SEED)
    write_catalog(cohort.records, out / "synthetic" / "catalog.csv", "csv")
    sets = [LandmarkSet(k, v) for k, v in sorted(cohort.landmarks.items())]
    write_landmarks(sets, out / "synthetic" / "landmarks.json")
    print(f"wrote bundled data to {out}")


if __name__ == "__main__":
    main()
