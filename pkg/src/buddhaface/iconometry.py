"""Canon guidelines and the six facial proportions.

Horizontal guidelines run from the image-left to the image-right side of
the face (endpoint ``a`` then ``b``); the centre line runs top to bottom.
Proportions are lengths between guideline endpoints on the right side,
divided by the forehead width LH + RH.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateFaceError
from .landmarks import FrontalLandmarks, pt

COMPONENTS = ("lh", "rh", "el", "e", "n", "lf")

LINE_NAMES = {
    "L1": "eyebrow",
    "L2": "top_eye",
    "L3": "bottom_eye",
    "L4": "nose_sides",
    "L5": "jaw",
    "L6": "center_nose",
    "L7": "left_face",
    "L8": "right_face",
}
HORIZONTAL = ("L1", "L2", "L3", "L4", "L5")
VERTICAL = ("L6", "L7", "L8")

THEORETICAL_CANON = (0.5, 0.5, 1 / 12, 1 / 12, 2 / 12, 4 / 12)


@dataclass(frozen=True)
class Segment:
    a: tuple[float, float]
    b: tuple[float, float]

    @property
    def slope(self) -> float:
        dx = self.b[0] - self.a[0]
        dy = self.b[1] - self.a[1]
        return np.inf if dx == 0 else dy / dx

    def to_dict(self) -> dict:
        return {"a": list(self.a), "b": list(self.b)}


@dataclass(frozen=True)
class GuidelineSet:
    image_id: str
    lines: dict[str, Segment]

    def __getitem__(self, name: str) -> Segment:
        return self.lines[name]

    def to_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "lines": {
                k: {"name": LINE_NAMES[k], **seg.to_dict()} for k, seg in self.lines.items()
            },
        }


@dataclass(frozen=True)
class ProportionVector:
    image_id: str
    lh: float
    rh: float
    el: float
    e: float
    n: float
    lf: float

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, c) for c in COMPONENTS])


@dataclass(frozen=True)
class CanonBaseline:
    name: str
    vector: ProportionVector


@dataclass(frozen=True)
class DeviationReport:
    deltas: dict[str, float]
    l1_distance: float


@dataclass(frozen=True)
class DistributionSummary:
    style: str
    count: int
    mean: np.ndarray
    std: np.ndarray
    q1: np.ndarray
    median: np.ndarray
    q3: np.ndarray
    minimum: np.ndarray
    maximum: np.ndarray


def _mean(points, numbers) -> np.ndarray:
    return points[[pt(k) for k in numbers]].mean(axis=0)


def _project_on_line(p, a, b) -> np.ndarray:
    d = b - a
    denom = d @ d
    if denom == 0.0:
        return a.copy()
    return a + ((p - a) @ d) / denom * d


def _seg(a, b) -> Segment:
    return Segment((float(a[0]), float(a[1])), (float(b[0]), float(b[1])))


def build_guidelines(fl: FrontalLandmarks) -> GuidelineSet:
    """Eight construction lines from frontal landmarks.

    L7 and L8 run from the foot of the perpendicular dropped from landmark 2
    (resp. 16) onto L1 to its foot on L5.
    """
    p = fl.points2d
    l1 = (_mean(p, (19, 21)), _mean(p, (24, 26)))
    l5 = (p[pt(7)], p[pt(11)])
    raw = {
        "L1": l1,
        "L2": (_mean(p, (38, 39)), _mean(p, (44, 45))),
        "L3": (_mean(p, (41, 42)), _mean(p, (47, 48))),
        "L4": (p[pt(32)], p[pt(36)]),
        "L5": l5,
        "L6": (_mean(p, (22, 23)), _mean(p, (28, 29, 30, 31))),
    }
    for name, anchor in (("L7", p[pt(2)]), ("L8", p[pt(16)])):
        raw[name] = (_project_on_line(anchor, *l1), _project_on_line(anchor, *l5))
    lines = {k: _seg(*v) for k, v in raw.items()}
    for name in HORIZONTAL:
        if not abs(lines[name].slope) < 1.0:
            raise DegenerateFaceError(
                f"{fl.image_id}: {name} is not horizontal after frontalization"
            )
    return GuidelineSet(fl.image_id, lines)


def _dist(u, v) -> float:
    return float(np.hypot(u[0] - v[0], u[1] - v[1]))


def raw_lengths(g: GuidelineSet) -> np.ndarray:
    """Unnormalized LH, RH, EL, E, N, LF."""
    l1, l2, l3, l4, l5, l6 = (g[k] for k in ("L1", "L2", "L3", "L4", "L5", "L6"))
    return np.array(
        [
            _dist(l1.a, l6.a),
            _dist(l6.a, l1.b),
            _dist(l1.b, l2.b),
            _dist(l2.b, l3.b),
            _dist(l3.b, l4.b),
            _dist(l4.b, l5.b),
        ]
    )


def measure_proportions(g: GuidelineSet) -> ProportionVector:
    lengths = raw_lengths(g)
    width = lengths[0] + lengths[1]
    ends = np.array([xy for seg in g.lines.values() for xy in (seg.a, seg.b)])
    diag = float(np.hypot(*np.ptp(ends, axis=0)))
    if not width > 1e-9 * diag or not np.isfinite(width):
        raise DegenerateFaceError(f"{g.image_id}: face width collapsed")
    lh, rh = lengths[0] / width, lengths[1] / width
    # the larger share is in [0.5, 1], so 1 - larger is exact and the pair sums to 1
    if lh >= rh:
        rh = 1.0 - lh
    else:
        lh = 1.0 - rh
    rest = lengths[2:] / width
    return ProportionVector(g.image_id, float(lh), float(rh), *(float(v) for v in rest))


def compare_to_canon(p: ProportionVector, base: CanonBaseline) -> DeviationReport:
    deltas = {c: getattr(p, c) - getattr(base.vector, c) for c in COMPONENTS}
    return DeviationReport(deltas, float(sum(abs(v) for v in deltas.values())))


def aggregate_by_style(
    vectors: Iterable[tuple[str, ProportionVector]],
) -> dict[str, DistributionSummary]:
    """Per-style summary statistics of each component.

    Rows are folded in image_id order so the result does not depend on input
    order. Styles with no vectors are absent.
    """
    groups: dict[str, list[ProportionVector]] = {}
    for style, vec in vectors:
        groups.setdefault(style, []).append(vec)
    out = {}
    for style in sorted(groups):
        rows = sorted(groups[style], key=lambda v: v.image_id)
        m = np.array([v.as_array() for v in rows])
        q1, med, q3 = np.percentile(m, [25, 50, 75], axis=0)
        out[style] = DistributionSummary(
            style=style,
            count=len(rows),
            mean=m.mean(axis=0),
            std=m.std(axis=0),
            q1=q1,
            median=med,
            q3=q3,
            minimum=m.min(axis=0),
            maximum=m.max(axis=0),
        )
    return out


def theoretical_baseline() -> CanonBaseline:
    return CanonBaseline(
        "theoretical_tibetan", ProportionVector("theoretical_tibetan", *THEORETICAL_CANON)
    )


def load_baselines() -> dict[str, CanonBaseline]:
    """Both canon baselines from the bundled data file."""
    text = resources.files("buddhaface").joinpath("data/canon_baselines.json").read_text()
    out = {}
    for entry in json.loads(text)["baselines"]:
        vec = ProportionVector(entry["name"], *(entry[c] for c in COMPONENTS))
        out[entry["name"]] = CanonBaseline(entry["name"], vec)
    return out


def proportions_from_landmarks(fl: FrontalLandmarks) -> tuple[GuidelineSet, ProportionVector]:
    g = build_guidelines(fl)
    return g, measure_proportions(g)


def format_row(vec: ProportionVector) -> list[str]:
    return [vec.image_id, *(f"{getattr(vec, c):.6f}" for c in COMPONENTS)]


def vectors_to_matrix(vectors: Sequence[ProportionVector]) -> np.ndarray:
    return np.array([v.as_array() for v in vectors]).reshape(len(vectors), len(COMPONENTS))
