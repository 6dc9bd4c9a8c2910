"""68-point 3D facial landmarks: ingestion and pose normalization.

Point numbering follows the common 68-landmark annotation (1-based in the
docs, 0-based in arrays): jaw 1-17, brows 18-27, nose 28-36, eyes 37-48,
mouth 49-68. Image-left comes first in every bilateral group.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import AlignmentError, ParseError, ValidationError

log = logging.getLogger(__name__)

N_POINTS = 68


def pt(number: int) -> int:
    """Array index of a 1-based landmark number."""
    if not 1 <= number <= N_POINTS:
        raise ValueError(f"landmark numbers run 1..{N_POINTS}, got {number}")
    return number - 1


@dataclass(frozen=True, eq=False)
class LandmarkSet:
    image_id: str
    points: np.ndarray  # (68, 3)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValidationError(f"{self.image_id}: points must be (x, y, z) triples")
        if pts.shape[0] != N_POINTS:
            raise ValidationError(
                f"{self.image_id}: expected {N_POINTS}, got {pts.shape[0]}"
            )
        if not np.isfinite(pts).all():
            raise ValidationError(f"{self.image_id}: non-finite coordinate")
        if np.ptp(pts, axis=0).max() == 0.0:
            raise ValidationError(f"{self.image_id}: all points coincide")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)


@dataclass(frozen=True, eq=False)
class FrontalLandmarks:
    image_id: str
    points2d: np.ndarray  # (68, 2)
    scale_ref: float


@dataclass(frozen=True)
class Similarity:
    """x -> scale * R @ x + translation."""

    rotation: np.ndarray
    scale: float
    translation: np.ndarray

    def apply(self, points: np.ndarray) -> np.ndarray:
        return self.scale * points @ self.rotation.T + self.translation


def fit_similarity(source: np.ndarray, target: np.ndarray, image_id: str = "?") -> Similarity:
    """Least-squares similarity transform mapping ``source`` onto ``target``.

    Umeyama's closed form with the reflection removed, so the rotation always
    has determinant +1.
    """
    mu_s = source.mean(axis=0)
    mu_t = target.mean(axis=0)
    xs = source - mu_s
    xt = target - mu_t
    var_s = (xs**2).sum() / len(source)
    cov = xt.T @ xs / len(source)
    u, sv, vt = np.linalg.svd(cov)
    if var_s == 0.0 or sv[0] == 0.0 or sv[1] <= 1e-12 * sv[0]:
        raise AlignmentError(f"{image_id}: degenerate landmark configuration")
    d = np.ones(len(sv))
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        d[-1] = -1.0
    rot = (u * d) @ vt
    scale = float((sv * d).sum() / var_s)
    trans = mu_t - scale * rot @ mu_s
    return Similarity(rotation=rot, scale=scale, translation=trans)


def face_width(points2d: np.ndarray) -> float:
    """Brow-line width: left brow centre -> glabella -> right brow centre."""
    left = points2d[[pt(19), pt(21)]].mean(axis=0)
    right = points2d[[pt(24), pt(26)]].mean(axis=0)
    top = points2d[[pt(22), pt(23)]].mean(axis=0)
    return float(np.linalg.norm(top - left) + np.linalg.norm(right - top))


def normalize_pose(lm: LandmarkSet, template: LandmarkSet) -> FrontalLandmarks:
    """Align ``lm`` onto the frontal template and project orthographically."""
    sim = fit_similarity(lm.points, template.points, lm.image_id)
    aligned = sim.apply(lm.points)
    points2d = np.ascontiguousarray(aligned[:, :2])
    return FrontalLandmarks(lm.image_id, points2d, face_width(points2d))


def load_template() -> LandmarkSet:
    """The bundled canonical frontal template."""
    text = resources.files("buddhaface").joinpath("data/template_landmarks.json").read_text()
    entry = json.loads(text)[0]
    return LandmarkSet(entry["image_id"], np.array(entry["points"], dtype=np.float64))


def parse_landmarks(data) -> tuple[list[LandmarkSet], list[tuple[str, str]]]:
    if not isinstance(data, list):
        raise ParseError("landmark file must hold a JSON array")
    accepted = []
    rejected = []
    seen = set()
    for idx, entry in enumerate(data):
        image_id = str(entry.get("image_id", f"#{idx}")) if isinstance(entry, dict) else f"#{idx}"
        if not isinstance(entry, dict) or "points" not in entry or not entry.get("image_id"):
            rejected.append((image_id, "entry needs image_id and points"))
            continue
        if image_id in seen:
            rejected.append((image_id, "duplicate image_id"))
            continue
        raw = entry["points"]
        try:
            if not isinstance(raw, list) or any(
                not isinstance(p, list) or len(p) != 3 for p in raw
            ):
                raise ValidationError("points must be a list of [x, y, z]")
            if len(raw) != N_POINTS:
                raise ValidationError(f"expected {N_POINTS}, got {len(raw)}")
            pts = np.array(raw, dtype=np.float64)
            lm = LandmarkSet(image_id, pts)
        except (ValidationError, TypeError, ValueError) as exc:
            reason = str(exc).removeprefix(f"{image_id}: ")
            rejected.append((image_id, reason))
            log.warning("rejected landmarks for %s: %s", image_id, reason)
            continue
        seen.add(image_id)
        accepted.append(lm)
    return accepted, rejected


def load_landmarks(path: str | Path) -> tuple[list[LandmarkSet], list[tuple[str, str]]]:
    """Read a landmark JSON file.

    Returns accepted sets and ``(image_id, reason)`` for every rejected entry.
    """
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    return parse_landmarks(data)


def dump_landmarks(sets: Iterable[LandmarkSet]) -> list[dict]:
    return [{"image_id": s.image_id, "points": s.points.tolist()} for s in sets]


def write_landmarks(sets: Iterable[LandmarkSet], path: str | Path):
    Path(path).write_text(json.dumps(dump_landmarks(sets)) + "\n", encoding="utf-8")
