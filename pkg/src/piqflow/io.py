"""Reading and writing the study file formats.

Canonical formats (fixed headers, see the per-function docstrings):

* ratings CSV   ``subject_id,item_id,quality,blurry,shaky,bright,dark,grainy,none,other,position,is_repeat,is_golden``
* sessions CSV  ``subject_id,device,resolution_w,resolution_h,distance,age,gender,lenses``
* items CSV     ``item_id,kind,parent_id,width,height,path``
* item stats CSV ``item_id,mos,stddev,count,p_blurry,...,p_other``

A JSON-lines mirror of the ratings file (one rating object per line) is
supported for tooling. Loaders are pure given the file bytes and validate
every record; errors carry the offending row number and field.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable

from .datamodel import (
    CATEGORIES,
    DeviceClass,
    ItemKind,
    ItemRecord,
    ItemStats,
    LensesWorn,
    RatingRecord,
    SessionRecord,
    ValidationError,
    validate_item_tree,
)

RATINGS_HEADER = [
    "subject_id", "item_id", "quality",
    *CATEGORIES,
    "position", "is_repeat", "is_golden",
]
SESSIONS_HEADER = [
    "subject_id", "device", "resolution_w", "resolution_h",
    "distance", "age", "gender", "lenses",
]
ITEMS_HEADER = ["item_id", "kind", "parent_id", "width", "height", "path"]
ITEM_STATS_HEADER = ["item_id", "mos", "stddev", "count"] + [f"p_{c}" for c in CATEGORIES]

_TRUE = {"1", "true", "yes"}
_FALSE = {"0", "false", "no", ""}


class FormatError(ValidationError):
    """Malformed input file; message includes row number and field."""


def _parse_bool(value: str, row: int, fieldname: str) -> bool:
    v = value.strip().lower()
    if v in _TRUE:
        return True
    if v in _FALSE:
        return False
    raise FormatError(f"row {row}: field {fieldname!r}: not a boolean: {value!r}")


def _parse_float(value: str, row: int, fieldname: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise FormatError(f"row {row}: field {fieldname!r}: not a number: {value!r}") from None


def _parse_int(value: str, row: int, fieldname: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise FormatError(f"row {row}: field {fieldname!r}: not an integer: {value!r}") from None


def _rating_from_fields(fields: dict[str, str], row: int) -> RatingRecord:
    distortions = tuple(_parse_bool(fields[c], row, c) for c in CATEGORIES)
    try:
        return RatingRecord(
            subject_id=fields["subject_id"],
            item_id=fields["item_id"],
            quality=_parse_float(fields["quality"], row, "quality"),
            distortions=distortions,
            position_in_session=_parse_int(fields["position"], row, "position"),
            is_repeat=_parse_bool(fields["is_repeat"], row, "is_repeat"),
            is_golden=_parse_bool(fields["is_golden"], row, "is_golden"),
        )
    except FormatError:
        raise
    except ValidationError as exc:
        raise FormatError(f"row {row}: {exc}") from None


def load_ratings(path: str | Path, format: str = "csv",
                 metadata: dict[str, SessionRecord] | None = None) -> list[SessionRecord]:
    """Load a ratings file and group the records into per-subject sessions.

    ``format`` is ``csv`` or ``json-lines``. Session metadata defaults to
    unknowns unless ``metadata`` (from :func:`load_session_metadata`) supplies
    the subject's exit-survey answers. Sessions come back sorted by subject id.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    if format == "csv":
        records = _read_ratings_csv(path)
    elif format == "json-lines":
        records = _read_ratings_jsonl(path)
    else:
        raise ValueError(f"unknown ratings format: {format!r}")

    by_subject: dict[str, list[RatingRecord]] = {}
    for rec in records:
        by_subject.setdefault(rec.subject_id, []).append(rec)

    sessions = []
    for subject_id in sorted(by_subject):
        meta = (metadata or {}).get(subject_id)
        if meta is not None:
            sessions.append(
                SessionRecord(
                    subject_id=subject_id,
                    ratings=tuple(by_subject[subject_id]),
                    device_class=meta.device_class,
                    resolution=meta.resolution,
                    viewing_distance_bucket=meta.viewing_distance_bucket,
                    age_bucket=meta.age_bucket,
                    gender=meta.gender,
                    wore_prescribed_lenses=meta.wore_prescribed_lenses,
                )
            )
        else:
            sessions.append(SessionRecord(subject_id=subject_id,
                                          ratings=tuple(by_subject[subject_id])))
    return sessions


def _read_ratings_csv(path: Path) -> list[RatingRecord]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError("empty ratings file") from None
        if [h.strip() for h in header] != RATINGS_HEADER:
            unknown = set(h.strip() for h in header) - set(RATINGS_HEADER)
            if unknown:
                raise FormatError(f"row 1: unknown columns: {sorted(unknown)}")
            raise FormatError(f"row 1: expected header {','.join(RATINGS_HEADER)}")
        records = []
        for row_num, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(RATINGS_HEADER):
                raise FormatError(
                    f"row {row_num}: expected {len(RATINGS_HEADER)} fields, got {len(row)}"
                )
            fields = dict(zip(RATINGS_HEADER, row))
            records.append(_rating_from_fields(fields, row_num))
    return records


def _read_ratings_jsonl(path: Path) -> list[RatingRecord]:
    records = []
    with open(path) as fh:
        for row_num, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"row {row_num}: invalid JSON: {exc}") from None
            unknown = set(obj) - set(RATINGS_HEADER)
            if unknown:
                raise FormatError(f"row {row_num}: unknown distortion/field columns: {sorted(unknown)}")
            missing = set(RATINGS_HEADER) - set(obj)
            if missing:
                raise FormatError(f"row {row_num}: missing fields: {sorted(missing)}")
            fields = {k: str(obj[k]) for k in RATINGS_HEADER}
            records.append(_rating_from_fields(fields, row_num))
    return records


def save_ratings(sessions: Iterable[SessionRecord], path: str | Path,
                 format: str = "csv") -> None:
    """Write sessions back out; ``load_ratings(save_ratings(x)) == x``."""
    path = Path(path)
    rows = []
    for session in sessions:
        for r in session.ratings:
            rows.append(r)
    if format == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(RATINGS_HEADER)
            for r in rows:
                writer.writerow(_rating_to_row(r))
    elif format == "json-lines":
        with open(path, "w") as fh:
            for r in rows:
                fh.write(json.dumps(_rating_to_obj(r)) + "\n")
    else:
        raise ValueError(f"unknown ratings format: {format!r}")


def _rating_to_row(r: RatingRecord) -> list[str]:
    return [
        r.subject_id, r.item_id, repr(r.quality),
        *("1" if d else "0" for d in r.distortions),
        str(r.position_in_session),
        "true" if r.is_repeat else "false",
        "true" if r.is_golden else "false",
    ]


def _rating_to_obj(r: RatingRecord) -> dict:
    obj = {"subject_id": r.subject_id, "item_id": r.item_id, "quality": r.quality}
    for c, d in zip(CATEGORIES, r.distortions):
        obj[c] = int(d)
    obj["position"] = r.position_in_session
    obj["is_repeat"] = r.is_repeat
    obj["is_golden"] = r.is_golden
    return obj


def load_session_metadata(path: str | Path) -> dict[str, SessionRecord]:
    """Read the session metadata CSV into empty-rating SessionRecord stubs."""
    path = Path(path)
    out: dict[str, SessionRecord] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if [h.strip() for h in header] != SESSIONS_HEADER:
            raise FormatError(f"row 1: expected header {','.join(SESSIONS_HEADER)}")
        for row_num, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(SESSIONS_HEADER):
                raise FormatError(f"row {row_num}: expected {len(SESSIONS_HEADER)} fields")
            fields = dict(zip(SESSIONS_HEADER, row))
            try:
                device = DeviceClass(fields["device"])
            except ValueError:
                raise FormatError(f"row {row_num}: unknown device {fields['device']!r}") from None
            try:
                lenses = LensesWorn(fields["lenses"])
            except ValueError:
                raise FormatError(f"row {row_num}: unknown lenses value {fields['lenses']!r}") from None
            out[fields["subject_id"]] = SessionRecord(
                subject_id=fields["subject_id"],
                ratings=(),
                device_class=device,
                resolution=(_parse_int(fields["resolution_w"], row_num, "resolution_w"),
                            _parse_int(fields["resolution_h"], row_num, "resolution_h")),
                viewing_distance_bucket=fields["distance"],
                age_bucket=fields["age"],
                gender=fields["gender"],
                wore_prescribed_lenses=lenses,
            )
    return out


def save_session_metadata(sessions: Iterable[SessionRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SESSIONS_HEADER)
        for s in sessions:
            writer.writerow([
                s.subject_id, s.device_class.value,
                str(s.resolution[0]), str(s.resolution[1]),
                s.viewing_distance_bucket, s.age_bucket, s.gender,
                s.wore_prescribed_lenses.value,
            ])


def load_items(path: str | Path) -> dict[str, ItemRecord]:
    path = Path(path)
    items: dict[str, ItemRecord] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if [h.strip() for h in header] != ITEMS_HEADER:
            raise FormatError(f"row 1: expected header {','.join(ITEMS_HEADER)}")
        for row_num, row in enumerate(reader, start=2):
            if not row:
                continue
            fields = dict(zip(ITEMS_HEADER, row))
            try:
                kind = ItemKind(fields["kind"])
            except ValueError:
                raise FormatError(f"row {row_num}: unknown item kind {fields['kind']!r}") from None
            try:
                item = ItemRecord(
                    item_id=fields["item_id"],
                    kind=kind,
                    parent_id=fields["parent_id"] or None,
                    width_px=_parse_int(fields["width"], row_num, "width"),
                    height_px=_parse_int(fields["height"], row_num, "height"),
                    source_path=fields["path"],
                )
            except FormatError:
                raise
            except ValidationError as exc:
                raise FormatError(f"row {row_num}: {exc}") from None
            if item.item_id in items:
                raise FormatError(f"row {row_num}: duplicate item id {item.item_id!r}")
            items[item.item_id] = item
    validate_item_tree(items)
    return items


def save_items(items: Iterable[ItemRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ITEMS_HEADER)
        for i in items:
            writer.writerow([i.item_id, i.kind.value, i.parent_id or "",
                             str(i.width_px), str(i.height_px), i.source_path])


def load_item_stats(path: str | Path) -> dict[str, ItemStats]:
    path = Path(path)
    stats: dict[str, ItemStats] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if [h.strip() for h in header] != ITEM_STATS_HEADER:
            raise FormatError(f"row 1: expected header {','.join(ITEM_STATS_HEADER)}")
        for row_num, row in enumerate(reader, start=2):
            if not row:
                continue
            fields = dict(zip(ITEM_STATS_HEADER, row))
            probs = tuple(_parse_float(fields[f"p_{c}"], row_num, f"p_{c}") for c in CATEGORIES)
            try:
                st = ItemStats(
                    item_id=fields["item_id"],
                    mos=_parse_float(fields["mos"], row_num, "mos"),
                    stddev=_parse_float(fields["stddev"], row_num, "stddev"),
                    count=_parse_int(fields["count"], row_num, "count"),
                    distortion_prob=probs,
                )
            except FormatError:
                raise
            except ValidationError as exc:
                raise FormatError(f"row {row_num}: {exc}") from None
            stats[st.item_id] = st
    return stats


def save_item_stats(stats: Iterable[ItemStats], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ITEM_STATS_HEADER)
        for s in stats:
            writer.writerow([s.item_id, repr(s.mos), repr(s.stddev), str(s.count),
                             *(repr(p) for p in s.distortion_prob)])
