"""Statue metadata: records, ingestion, temporal alignment and task labels.

A catalog is a list of :class:`StatueRecord`. Each record describes one
statue and the images taken of it; classification samples are the images,
and every image inherits the labels of its statue.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import DomainError, ParseError, ValidationError

STYLES = ("China", "Heian", "Kamakura")
STATUE_TYPES = ("Bodhisattva", "Buddha")
DATE_KINDS = ("exact_year", "year_range", "century", "era")
DIMENSION_BUCKETS = ("small", "medium", "big")

MATERIAL_FAMILIES: dict[str, tuple[str, ...]] = {
    "base_material": ("wood", "wood_lacquer", "iron", "brick"),
    "color_texture": (
        "pigment",
        "lacquered_foil",
        "gold_leaves",
        "gold_paint",
        "plating",
        "dry_lacquer_finish",
        "lacquer",
    ),
    "stone_type": ("limestone", "sand_stone", "white_marble", "marble"),
    "wood_type": (
        "japanese_cypress",
        "katsura",
        "japanese_torreya",
        "cherry_wood",
        "coniferous",
        "camphor_tree",
    ),
}
CONSTRUCTION_METHODS = ("separate_pieces", "one_piece_cut", "one_piece")

CSV_HEADER = (
    "statue_id",
    "style",
    "height_cm",
    "statue_type",
    "date_kind",
    "date_start",
    "date_end",
    "base_material",
    "color_texture",
    "stone_type",
    "wood_type",
    "construction_method",
    "image_ids",
)
_DATE_FIELDS = ("date_kind", "date_start", "date_end")

TASKS = (
    "T1_style",
    "T2_dimensions",
    "T3_century",
    "T4_statue_type",
    "T5_1_base_material",
    "T5_2_color_texture",
    "T5_3_stone_type",
    "T5_4_wood_type",
    "T5_5_construction",
)
MULTI_LABEL_TASKS = frozenset(TASKS[4:8])

# task -> record attribute family it is labelled from
TASK_FAMILY = {
    "T1_style": "style",
    "T2_dimensions": "dimensions",
    "T3_century": "century",
    "T4_statue_type": "statue_type",
    "T5_1_base_material": "base_material",
    "T5_2_color_texture": "color_texture",
    "T5_3_stone_type": "stone_type",
    "T5_4_wood_type": "wood_type",
    "T5_5_construction": "construction_method",
}


@dataclass(frozen=True)
class DateEvidence:
    kind: str
    start_year: int
    end_year: int

    def __post_init__(self):
        if self.kind not in DATE_KINDS:
            raise ValidationError(f"unknown date kind {self.kind!r}")
        if self.end_year < self.start_year:
            raise ValidationError(
                f"date end {self.end_year} precedes start {self.start_year}"
            )
        if self.kind == "exact_year" and self.start_year != self.end_year:
            raise ValidationError("exact_year evidence needs start_year == end_year")


@dataclass(frozen=True)
class AlignedDate:
    year: int
    century: int


@dataclass(frozen=True)
class StatueRecord:
    statue_id: str
    style: str
    image_ids: tuple[str, ...]
    height_cm: float | None = None
    statue_type: str | None = None
    date_evidence: tuple[DateEvidence, ...] = ()
    base_material: frozenset[str] | None = None
    color_texture: frozenset[str] | None = None
    stone_type: frozenset[str] | None = None
    wood_type: frozenset[str] | None = None
    construction_method: str | None = None

    def __post_init__(self):
        if not self.statue_id:
            raise ValidationError("empty statue_id")
        if self.style not in STYLES:
            raise ValidationError(f"{self.statue_id}: unknown style {self.style!r}")
        if not self.image_ids:
            raise ValidationError(f"{self.statue_id}: statue has no image_ids")
        if len(set(self.image_ids)) != len(self.image_ids):
            raise ValidationError(f"{self.statue_id}: repeated image_id")
        if self.height_cm is not None and not (
            math.isfinite(self.height_cm) and self.height_cm > 0
        ):
            raise ValidationError(f"{self.statue_id}: height_cm must be positive")
        if self.statue_type is not None and self.statue_type not in STATUE_TYPES:
            raise ValidationError(
                f"{self.statue_id}: unknown statue_type {self.statue_type!r}"
            )
        for fam, allowed in MATERIAL_FAMILIES.items():
            values = getattr(self, fam)
            if values is None:
                continue
            if not values:
                raise ValidationError(f"{self.statue_id}: {fam} present but empty")
            bad = sorted(set(values) - set(allowed))
            if bad:
                raise ValidationError(f"{self.statue_id}: unknown {fam} {bad}")
        if (
            self.construction_method is not None
            and self.construction_method not in CONSTRUCTION_METHODS
        ):
            raise ValidationError(
                f"{self.statue_id}: unknown construction_method "
                f"{self.construction_method!r}"
            )

    def attribute_values(self, family: str) -> frozenset:
        """Values of one attribute family for this statue (empty if unknown)."""
        if family == "style":
            return frozenset([self.style])
        if family == "dimensions":
            if self.height_cm is None:
                return frozenset()
            return frozenset([bucket_dimension(self.height_cm)])
        if family == "century":
            aligned = align_temporal(self.date_evidence)
            return frozenset() if aligned is None else frozenset([aligned.century])
        if family in ("statue_type", "construction_method"):
            value = getattr(self, family)
            return frozenset() if value is None else frozenset([value])
        if family in MATERIAL_FAMILIES:
            return getattr(self, family) or frozenset()
        raise KeyError(family)


@dataclass(frozen=True)
class Rejection:
    row: int
    field: str
    reason: str

    def to_dict(self) -> dict:
        return {"row": self.row, "field": self.field, "reason": self.reason}


@dataclass(frozen=True)
class TaskLabeling:
    task_id: str
    mode: str
    labels: Mapping[str, frozenset] = field(default_factory=dict)

    @property
    def classes(self) -> list:
        return sorted({lab for labs in self.labels.values() for lab in labs})


def bucket_dimension(height_cm: float) -> str:
    """Map a statue height to small [0,100), medium [100,250) or big [250,inf)."""
    if not (height_cm > 0) or not math.isfinite(height_cm):
        raise DomainError(f"height must be a positive finite number, got {height_cm!r}")
    if height_cm < 100:
        return "small"
    if height_cm < 250:
        return "medium"
    return "big"


def century_of(year: int) -> int:
    return -(-year // 100)


def align_temporal(evidence: Iterable[DateEvidence]) -> AlignedDate | None:
    """Median year of the intersection of all date intervals, or None.

    Even-length intervals resolve to the lower of the two middle years.
    """
    evidence = list(evidence)
    if not evidence:
        return None
    lo = max(ev.start_year for ev in evidence)
    hi = min(ev.end_year for ev in evidence)
    if lo > hi:
        return None
    year = (lo + hi) // 2
    return AlignedDate(year=year, century=century_of(year))


def build_labelings(records: Sequence[StatueRecord]) -> list[TaskLabeling]:
    """One labeling per task; samples are image ids of eligible statues."""
    out = []
    for task in TASKS:
        family = TASK_FAMILY[task]
        labels = {}
        for rec in records:
            values = rec.attribute_values(family)
            if not values:
                continue
            for image_id in rec.image_ids:
                labels[image_id] = values
        mode = "multi_label" if task in MULTI_LABEL_TASKS else "single_label"
        out.append(TaskLabeling(task_id=task, mode=mode, labels=labels))
    return out


def image_groups(records: Iterable[StatueRecord]) -> dict[str, str]:
    """image_id -> statue_id."""
    return {img: rec.statue_id for rec in records for img in rec.image_ids}


# ---------------------------------------------------------------- ingestion


def _norm_enum(value: str, allowed: Sequence[str], fieldname: str) -> str:
    lookup = {a.lower(): a for a in allowed}
    key = value.strip().lower().replace(" ", "_").replace("+", "_")
    if key not in lookup:
        raise ValueError(f"unknown {fieldname} value {value.strip()!r}")
    return lookup[key]


def _parse_set(raw, allowed, fieldname):
    if raw is None:
        return None
    items = raw.split("|") if isinstance(raw, str) else list(raw)
    items = [i for i in (str(x).strip() for x in items) if i]
    if not items:
        return None
    return frozenset(_norm_enum(i, allowed, fieldname) for i in items)


def _parse_optional_enum(raw, allowed, fieldname):
    if raw is None or str(raw).strip() == "":
        return None
    return _norm_enum(str(raw), allowed, fieldname)


def _parse_height(raw):
    if raw is None or str(raw).strip() == "":
        return None
    value = float(raw)
    if not math.isfinite(value) or value <= 0:
        raise ValueError(f"height_cm must be positive, got {raw!r}")
    return value


def _parse_year(raw):
    if isinstance(raw, bool):
        raise ValueError("year must be an integer")
    if isinstance(raw, int):
        return raw
    text = str(raw).strip()
    return int(text)


def _parse_dates(kind, start, end) -> list[DateEvidence]:
    """Date evidence from scalar or parallel-list fields."""
    if isinstance(kind, list):
        start = start if isinstance(start, list) else [start] * len(kind)
        end = end if isinstance(end, list) else [end] * len(kind)
        if not (len(kind) == len(start) == len(end)):
            raise ValueError("date_kind/date_start/date_end lists differ in length")
        out = []
        for k, s, e in zip(kind, start, end):
            out.extend(_parse_dates(k, s, e))
        return out
    empty = [v is None or str(v).strip() == "" for v in (kind, start, end)]
    if all(empty):
        return []
    if empty[0] or empty[1]:
        raise ValueError("date evidence needs date_kind and date_start")
    k = _norm_enum(str(kind), DATE_KINDS, "date_kind")
    s = _parse_year(start)
    e = s if empty[2] else _parse_year(end)
    try:
        return [DateEvidence(k, s, e)]
    except ValidationError as exc:
        raise ValueError(str(exc)) from None


_FIELD_PARSERS = {
    "style": lambda v: _parse_optional_enum(v, STYLES, "style"),
    "height_cm": _parse_height,
    "statue_type": lambda v: _parse_optional_enum(v, STATUE_TYPES, "statue_type"),
    "construction_method": lambda v: _parse_optional_enum(
        v, CONSTRUCTION_METHODS, "construction_method"
    ),
    "image_ids": lambda v: _parse_image_ids(v),
    **{
        fam: (lambda allowed, fam: lambda v: _parse_set(v, allowed, fam))(allowed, fam)
        for fam, allowed in MATERIAL_FAMILIES.items()
    },
}


def _parse_image_ids(raw):
    if raw is None:
        return None
    items = raw.split("|") if isinstance(raw, str) else list(raw)
    items = tuple(i for i in (str(x).strip() for x in items) if i)
    return items or None


def _parse_row(row: Mapping, rowno: int, rejections: list[Rejection]):
    """Parse one raw row into (statue_id, fields, dates); None if rejected."""
    sid = str(row.get("statue_id") or "").strip()
    if not sid:
        rejections.append(Rejection(rowno, "statue_id", "missing statue_id"))
        return None
    fields = {}
    ok = True
    for name, parser in _FIELD_PARSERS.items():
        try:
            fields[name] = parser(row.get(name))
        except (ValueError, TypeError) as exc:
            rejections.append(Rejection(rowno, name, str(exc)))
            ok = False
    try:
        dates = _parse_dates(row.get("date_kind"), row.get("date_start"), row.get("date_end"))
    except (ValueError, TypeError) as exc:
        rejections.append(Rejection(rowno, "date", str(exc)))
        ok = False
        dates = []
    if not ok:
        return None
    return sid, fields, dates


def _assemble(parsed, rejections: list[Rejection], allow_continuation: bool):
    """Merge parsed rows per statue and build validated records."""
    merged: dict[str, dict] = {}
    rows_of: dict[str, list[int]] = {}
    for rowno, (sid, fields, dates) in parsed:
        if sid not in merged:
            merged[sid] = {"fields": dict(fields), "dates": list(dates)}
            rows_of[sid] = [rowno]
            continue
        if not allow_continuation:
            raise ValidationError(
                f"duplicate statue_id {sid!r} (rows {rows_of[sid][0]} and {rowno})"
            )
        base = merged[sid]["fields"]
        for name, value in fields.items():
            if value is None:
                continue
            if base[name] is None:
                base[name] = value
            elif base[name] != value:
                raise ValidationError(
                    f"duplicate statue_id {sid!r} with conflicting {name} "
                    f"(rows {rows_of[sid][0]} and {rowno})"
                )
        merged[sid]["dates"].extend(dates)
        rows_of[sid].append(rowno)

    records = []
    owner: dict[str, str] = {}
    for sid, item in merged.items():
        f = item["fields"]
        try:
            rec = StatueRecord(
                statue_id=sid,
                style=f["style"],
                image_ids=f["image_ids"] or (),
                height_cm=f["height_cm"],
                statue_type=f["statue_type"],
                date_evidence=tuple(item["dates"]),
                base_material=f["base_material"],
                color_texture=f["color_texture"],
                stone_type=f["stone_type"],
                wood_type=f["wood_type"],
                construction_method=f["construction_method"],
            )
        except ValidationError as exc:
            missing = "style" if f["style"] is None else "image_ids"
            rejections.append(Rejection(rows_of[sid][0], missing, str(exc)))
            continue
        for img in rec.image_ids:
            if img in owner:
                raise ValidationError(
                    f"image_id {img!r} is listed by statues {owner[img]!r} and {sid!r}"
                )
            owner[img] = sid
        records.append(rec)
    return records


def ingest_catalog(
    path: str | Path, format: str | None = None
) -> tuple[list[StatueRecord], list[Rejection]]:
    """Read a catalog file.

    Returns the validated records together with the rows that were rejected.
    Malformed files raise :class:`ParseError`; duplicate statue ids and
    image ids shared between statues raise :class:`ValidationError`.
    """
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    rejections: list[Rejection] = []
    parsed = []
    if fmt == "csv":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            missing = [c for c in ("statue_id", "style", "image_ids") if c not in header]
            if missing:
                raise ParseError(f"catalog header lacks {missing}", line=1)
            for lineno, row in enumerate(reader, start=2):
                if None in row:
                    raise ParseError("too many fields", line=lineno)
                item = _parse_row(row, lineno, rejections)
                if item is not None:
                    parsed.append((lineno, item))
        records = _assemble(parsed, rejections, allow_continuation=True)
    elif fmt == "json":
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
        if not isinstance(data, list):
            raise ParseError("catalog JSON must be a list of objects")
        for idx, obj in enumerate(data):
            if not isinstance(obj, dict):
                raise ParseError(f"entry {idx} is not an object")
            item = _parse_row(obj, idx, rejections)
            if item is not None:
                parsed.append((idx, item))
        records = _assemble(parsed, rejections, allow_continuation=False)
    else:
        raise ParseError(f"unsupported catalog format {fmt!r}")
    return records, rejections


def _join(values) -> str:
    return "" if not values else "|".join(sorted(values))


def _record_row(rec: StatueRecord) -> dict:
    return {
        "statue_id": rec.statue_id,
        "style": rec.style,
        "height_cm": "" if rec.height_cm is None else repr(rec.height_cm),
        "statue_type": rec.statue_type or "",
        "base_material": _join(rec.base_material),
        "color_texture": _join(rec.color_texture),
        "stone_type": _join(rec.stone_type),
        "wood_type": _join(rec.wood_type),
        "construction_method": rec.construction_method or "",
        "image_ids": "|".join(rec.image_ids),
    }


def write_catalog(records: Iterable[StatueRecord], path: str | Path, format: str | None = None):
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    records = list(records)
    if fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=CSV_HEADER, lineterminator="\n")
            writer.writeheader()
            for rec in records:
                base = _record_row(rec)
                dates = rec.date_evidence or (None,)
                for ev in dates:
                    row = dict(base)
                    row["date_kind"] = "" if ev is None else ev.kind
                    row["date_start"] = "" if ev is None else str(ev.start_year)
                    row["date_end"] = "" if ev is None else str(ev.end_year)
                    writer.writerow(row)
    elif fmt == "json":
        out = []
        for rec in records:
            out.append(
                {
                    "statue_id": rec.statue_id,
                    "style": rec.style,
                    "height_cm": rec.height_cm,
                    "statue_type": rec.statue_type,
                    "date_kind": [ev.kind for ev in rec.date_evidence],
                    "date_start": [ev.start_year for ev in rec.date_evidence],
                    "date_end": [ev.end_year for ev in rec.date_evidence],
                    **{
                        fam: None if getattr(rec, fam) is None else sorted(getattr(rec, fam))
                        for fam in MATERIAL_FAMILIES
                    },
                    "construction_method": rec.construction_method,
                    "image_ids": list(rec.image_ids),
                }
            )
        path.write_text(json.dumps(out, indent=1) + "\n", encoding="utf-8")
    else:
        raise ParseError(f"unsupported catalog format {fmt!r}")


def write_rejections(rejections: Iterable[Rejection], path: str | Path):
    Path(path).write_text(
        json.dumps([r.to_dict() for r in rejections], indent=1) + "\n", encoding="utf-8"
    )
