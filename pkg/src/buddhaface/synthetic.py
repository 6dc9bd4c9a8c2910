"""Synthetic faces and cohorts.

``canonical_face`` builds a bilaterally symmetric 68-point 3D face whose
guideline endpoints sit exactly at the requested region lengths. With the
default lengths (forehead 6+6, eyelid 1, eye 1, nose 2, lower face 4) it is
the bundled canon template. ``make_cohort`` perturbs those lengths per style
and poses every face randomly in 3D, giving a small dataset that exercises
the whole pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .catalog import DateEvidence, StatueRecord

# 0-based index pairs mirrored across the vertical face axis
MIRROR_PAIRS = (
    [(i, 16 - i) for i in range(8)]
    + [(17 + i, 26 - i) for i in range(5)]
    + [(31, 35), (32, 34)]
    + [(36, 45), (37, 44), (38, 43), (39, 42), (40, 47), (41, 46)]
    + [(48, 54), (49, 53), (50, 52), (55, 59), (56, 58), (60, 64), (61, 63), (65, 67)]
)
MIRROR_PERMUTATION = np.arange(68)
for _a, _b in MIRROR_PAIRS:
    MIRROR_PERMUTATION[_a], MIRROR_PERMUTATION[_b] = _b, _a


def canonical_face(
    forehead: float = 6.0,
    eyelid: float = 1.0,
    eye: float = 1.0,
    nose: float = 2.0,
    lower_face: float = 4.0,
) -> np.ndarray:
    """68x3 landmarks, x to the image right, y down, z towards the viewer."""
    h = forehead
    yb = 0.0
    yt = yb + eyelid
    ye = yt + eye
    yn = ye + nose
    yj = yn + lower_face
    ym = yn + 0.4 * (yj - yn)
    mid_eye = 0.5 * (yt + ye)

    left = {}
    # jaw 1..7 down the left cheek, 8 and 9 towards the chin
    for k in range(7):
        t = k / 6.0
        left[k + 1] = (-(h + 1.0 * (1.0 - t)), (yb + 0.8) + t * (yj - yb - 0.8))
    left[8] = (-0.55 * h, yj + 0.2 * lower_face)
    left[9] = (0.0, yj + 0.3 * lower_face)
    # left brow, outer (18) to inner (22)
    left[18] = (-h - 2.2, yb + 0.6)
    left[19] = (-h - 1.2, yb + 0.1)
    left[20] = (-h, yb - 0.3)
    left[21] = (-h + 1.2, yb - 0.1)
    left[22] = (-1.0, yb)
    # nose bridge and base
    for k in range(4):
        left[28 + k] = (0.0, yb + (yn - yb) * 0.2 * (k + 1))
    left[32] = (-h, yn)
    left[33] = (-1.0, yn + 0.1)
    left[34] = (0.0, yn + 0.2)
    # left eye
    left[37] = (-h - 2.0, mid_eye)
    left[38] = (-h - 1.0, yt)
    left[39] = (-h + 1.0, yt)
    left[40] = (-h + 2.0, mid_eye)
    left[41] = (-h + 1.0, ye)
    left[42] = (-h - 1.0, ye)
    # mouth, left half and centre
    left[49] = (-2.2, ym)
    left[50] = (-1.4, ym - 0.35)
    left[51] = (-0.5, ym - 0.45)
    left[52] = (0.0, ym - 0.4)
    left[58] = (0.0, ym + 0.6)
    left[59] = (-0.5, ym + 0.55)
    left[60] = (-1.4, ym + 0.4)
    left[61] = (-1.9, ym)
    left[62] = (-0.6, ym - 0.15)
    left[63] = (0.0, ym - 0.15)
    left[67] = (0.0, ym + 0.15)
    left[68] = (-0.6, ym + 0.15)

    pts = np.full((68, 2), np.nan)
    for num, xy in left.items():
        pts[num - 1] = xy
    for a, b in MIRROR_PAIRS:
        if np.isnan(pts[b, 0]):
            pts[b] = (-pts[a, 0], pts[a, 1])
        elif np.isnan(pts[a, 0]):
            pts[a] = (-pts[b, 0], pts[b, 1])
    assert not np.isnan(pts).any()

    x, y = pts[:, 0], pts[:, 1]
    z = 4.0 - 0.08 * x**2 - 0.02 * (y - 4.0) ** 2
    bump = {28: 0.5, 29: 1.0, 30: 1.5, 31: 2.0, 32: 0.4, 33: 1.2, 34: 1.6, 35: 1.2, 36: 0.4}
    for num, dz in bump.items():
        z[num - 1] += dz
    return np.column_stack([x, y, z])


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform random proper rotation."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def rotation_about(axis: str, degrees: float) -> np.ndarray:
    t = np.deg2rad(degrees)
    c, s = np.cos(t), np.sin(t)
    if axis == "x":
        return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])
    if axis == "y":
        return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])
    if axis == "z":
        return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
    raise ValueError(axis)


def random_pose(points: np.ndarray, rng: np.random.Generator, max_angle: float = 35.0):
    """Apply a moderate head rotation, random scale and translation."""
    r = (
        rotation_about("y", rng.uniform(-max_angle, max_angle))
        @ rotation_about("x", rng.uniform(-max_angle / 2, max_angle / 2))
        @ rotation_about("z", rng.uniform(-max_angle / 2, max_angle / 2))
    )
    s = rng.uniform(5.0, 20.0)
    t = rng.uniform(-100.0, 100.0, size=3)
    return s * points @ r.T + t


TEMPLATE_ID = "tibetan_canon_template"
BUNDLED_SEED = 2024

# region-length offsets per style, in canon units (face width 12)
STYLE_OFFSETS = {
    "China": {"nose": 0.6, "eyelid": -0.1},
    "Heian": {"eyelid": 0.1},
    "Kamakura": {"nose": 0.2},
}


@dataclass
class Cohort:
    records: list[StatueRecord]
    landmarks: dict[str, np.ndarray]


_CENTURY_SPAN = {"China": (5, 13), "Heian": (9, 12), "Kamakura": (12, 14)}
_HEIGHTS = {"China": (40.0, 400.0), "Heian": (60.0, 320.0), "Kamakura": (50.0, 280.0)}


def make_cohort(
    statues_per_style: int = 12,
    images_per_statue: int = 3,
    seed: int = 0,
    offsets: dict[str, dict[str, float]] | None = None,
    length_noise: float = 0.15,
    point_noise: float = 0.02,
) -> Cohort:
    """Deterministic synthetic catalog plus posed 3D landmarks per image.

    ``offsets`` shifts region lengths (canon units, face width 12) per style;
    ``length_noise`` is the per-statue spread of every length and
    ``point_noise`` the per-image landmark jitter.
    """
    offsets = STYLE_OFFSETS if offsets is None else offsets
    rng = np.random.default_rng(seed)
    records = []
    landmarks = {}
    for style in ("China", "Heian", "Kamakura"):
        shift = offsets.get(style, {})
        for s in range(statues_per_style):
            sid = f"{style[:2].lower()}{s:03d}"
            lengths = {
                "forehead": 6.0,
                "eyelid": 1.0,
                "eye": 1.0,
                "nose": 2.0,
                "lower_face": 4.0,
            }
            for key in ("eyelid", "eye", "nose", "lower_face"):
                lengths[key] += shift.get(key, 0.0) + rng.normal(0.0, length_noise)
                lengths[key] = max(lengths[key], 0.2)
            face = canonical_face(**lengths)
            image_ids = tuple(f"{sid}_{i}" for i in range(images_per_statue))
            for img in image_ids:
                jitter = rng.normal(0.0, point_noise, size=face.shape)
                landmarks[img] = random_pose(face + jitter, rng)
            records.append(_random_record(rng, sid, style, image_ids))
    return Cohort(records=records, landmarks=landmarks)


def _random_record(rng, sid, style, image_ids) -> StatueRecord:
    lo, hi = _CENTURY_SPAN[style]
    century = int(rng.integers(lo, hi))
    start = (century - 1) * 100 + 1
    dates = [DateEvidence("century", start, start + 99)]
    if rng.random() < 0.5:
        a = int(rng.integers(start, start + 60))
        dates.append(DateEvidence("year_range", a, a + 40))
    hmin, hmax = _HEIGHTS[style]
    wood = style != "China" or rng.random() < 0.3
    return StatueRecord(
        statue_id=sid,
        style=style,
        image_ids=image_ids,
        height_cm=float(round(rng.uniform(hmin, hmax), 1)),
        statue_type=("Buddha", "Bodhisattva")[int(rng.integers(2))],
        date_evidence=tuple(dates),
        base_material=frozenset(["wood"] if wood else ["iron"])
        | (frozenset(["wood_lacquer"]) if wood and rng.random() < 0.3 else frozenset()),
        color_texture=frozenset(
            rng.choice(["pigment", "gold_leaves", "lacquer", "plating"], size=2, replace=False)
        ),
        stone_type=None if wood else frozenset(["limestone"]),
        wood_type=frozenset(["japanese_cypress" if style != "China" else "camphor_tree"])
        if wood
        else None,
        construction_method=("separate_pieces", "one_piece_cut", "one_piece")[
            int(rng.integers(3))
        ],
    )
