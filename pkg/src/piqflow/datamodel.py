"""Canonical data model for ratings, items, sessions, and per-item statistics.

All types are immutable after construction and validate their invariants in
``__post_init__``, so a constructed record is always a valid record.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

__all__ = [
    "DistortionCategory",
    "CATEGORIES",
    "N_CATEGORIES",
    "ItemKind",
    "DeviceClass",
    "LensesWorn",
    "ItemRecord",
    "RatingRecord",
    "SessionRecord",
    "ItemStats",
    "ValidationError",
]


class ValidationError(ValueError):
    """Raised when a record violates a type invariant."""


class DistortionCategory(enum.IntEnum):
    """The seven distortion options, in fixed serialization order."""

    BLURRY = 0
    SHAKY = 1
    BRIGHT = 2
    DARK = 3
    GRAINY = 4
    NONE = 5
    OTHER = 6

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_label(cls, label: str) -> "DistortionCategory":
        try:
            return cls[label.strip().upper()]
        except KeyError:
            raise ValidationError(f"unknown distortion category: {label!r}") from None


#: Category labels in index order (index 0..6).
CATEGORIES: tuple[str, ...] = tuple(c.label for c in DistortionCategory)
N_CATEGORIES = len(CATEGORIES)


class ItemKind(str, enum.Enum):
    WHOLE_IMAGE = "whole-image"
    RANDOM_PATCH = "random-patch"
    SALIENT_PATCH = "salient-patch"
    VIDEO_FRAME = "video-frame"

    @property
    def is_patch(self) -> bool:
        return self in (ItemKind.RANDOM_PATCH, ItemKind.SALIENT_PATCH)


class DeviceClass(str, enum.Enum):
    LAPTOP = "laptop"
    DESKTOP = "desktop"
    PHONE = "phone"
    TABLET = "tablet"
    OTHER = "other"


class LensesWorn(str, enum.Enum):
    YES = "yes"
    NO = "no"
    NOT_APPLICABLE = "not-applicable"


@dataclass(frozen=True)
class ItemRecord:
    """One rateable item: a whole image, a patch of one, or a video frame.

    Patch kinds must reference a parent and keep the parent's aspect ratio
    within 1%; that cross-record check lives in :func:`validate_item_tree`
    because it needs the parent record.
    """

    item_id: str
    kind: ItemKind
    width_px: int
    height_px: int
    source_path: str = ""
    parent_id: str | None = None

    def __post_init__(self):
        if not self.item_id:
            raise ValidationError("item_id must be non-empty")
        if self.width_px <= 0 or self.height_px <= 0:
            raise ValidationError(
                f"item {self.item_id}: dimensions must be positive, "
                f"got {self.width_px}x{self.height_px}"
            )
        if self.kind.is_patch and not self.parent_id:
            raise ValidationError(
                f"item {self.item_id}: patch items must reference a parent item"
            )

    @property
    def aspect(self) -> float:
        return self.width_px / self.height_px


def validate_item_tree(items: dict[str, ItemRecord]) -> None:
    """Check cross-record item invariants: parents exist, aspect kept within 1%."""
    for item in items.values():
        if not item.kind.is_patch:
            continue
        parent = items.get(item.parent_id or "")
        if parent is None:
            raise ValidationError(
                f"item {item.item_id}: parent {item.parent_id!r} not found"
            )
        if abs(item.aspect - parent.aspect) > 0.01 * parent.aspect:
            raise ValidationError(
                f"item {item.item_id}: aspect {item.aspect:.4f} deviates more than "
                f"1% from parent aspect {parent.aspect:.4f}"
            )


@dataclass(frozen=True)
class RatingRecord:
    """One subject's quality score and distortion checkboxes for one item."""

    subject_id: str
    item_id: str
    quality: float
    distortions: tuple[bool, ...]
    position_in_session: int = 0
    is_repeat: bool = False
    is_golden: bool = False

    def __post_init__(self):
        if not (0.0 <= self.quality <= 100.0):
            raise ValidationError(
                f"quality out of range: {self.quality} (subject {self.subject_id}, "
                f"item {self.item_id})"
            )
        if len(self.distortions) != N_CATEGORIES:
            raise ValidationError(
                f"expected {N_CATEGORIES} distortion flags, got {len(self.distortions)}"
            )
        if not any(self.distortions):
            raise ValidationError(
                f"all-false distortion flags are invalid (subject {self.subject_id}, "
                f"item {self.item_id}); subjects choose among seven options "
                f"including 'none'"
            )
        if self.position_in_session < 0:
            raise ValidationError("position_in_session must be >= 0")
        object.__setattr__(self, "distortions", tuple(bool(d) for d in self.distortions))

    def flagged(self, category: DistortionCategory) -> bool:
        return self.distortions[category]


@dataclass(frozen=True)
class SessionRecord:
    """All ratings one subject gave, with the exit-survey metadata."""

    subject_id: str
    ratings: tuple[RatingRecord, ...]
    device_class: DeviceClass = DeviceClass.OTHER
    resolution: tuple[int, int] = (0, 0)
    viewing_distance_bucket: str = "unknown"
    age_bucket: str = "unknown"
    gender: str = "unknown"
    wore_prescribed_lenses: LensesWorn = LensesWorn.NOT_APPLICABLE

    def __post_init__(self):
        ratings = tuple(sorted(self.ratings, key=lambda r: r.position_in_session))
        object.__setattr__(self, "ratings", ratings)
        for r in ratings:
            if r.subject_id != self.subject_id:
                raise ValidationError(
                    f"session {self.subject_id} contains rating by {r.subject_id}"
                )
        counts: dict[str, int] = {}
        repeat_ids: set[str] = set()
        golden_ids: set[str] = set()
        for r in ratings:
            counts[r.item_id] = counts.get(r.item_id, 0) + 1
            if r.is_repeat:
                repeat_ids.add(r.item_id)
            if r.is_golden:
                golden_ids.add(r.item_id)
        for item_id in repeat_ids:
            if counts[item_id] != 2:
                raise ValidationError(
                    f"session {self.subject_id}: repeat item {item_id} appears "
                    f"{counts[item_id]} times, expected exactly 2"
                )
        for item_id in golden_ids:
            if counts[item_id] != 1:
                raise ValidationError(
                    f"session {self.subject_id}: golden item {item_id} appears "
                    f"{counts[item_id]} times, expected exactly 1"
                )

    def repeat_pairs(self) -> list[tuple[str, float, float]]:
        """(item_id, first score, second score) for each repeated item, in
        order of first presentation."""
        first: dict[str, float] = {}
        second: dict[str, float] = {}
        order: list[str] = []
        for r in self.ratings:
            if not r.is_repeat:
                continue
            if r.item_id in first:
                second[r.item_id] = r.quality
            else:
                first[r.item_id] = r.quality
                order.append(r.item_id)
        # the two-occurrence invariant guarantees every first has a second
        return [(i, first[i], second[i]) for i in order]

    def golden_ratings(self) -> list[RatingRecord]:
        return [r for r in self.ratings if r.is_golden]

    def main_ratings(self) -> list[RatingRecord]:
        """Ratings on study items: golden items and second repeat views excluded."""
        seen: set[str] = set()
        out = []
        for r in self.ratings:
            if r.is_golden:
                continue
            if r.item_id in seen:
                continue
            seen.add(r.item_id)
            out.append(r)
        return out


@dataclass(frozen=True)
class ItemStats:
    """Aggregated per-item statistics over the retained ratings."""

    item_id: str
    mos: float
    stddev: float
    count: int
    distortion_prob: tuple[float, ...]

    def __post_init__(self):
        if not (0.0 <= self.mos <= 100.0):
            raise ValidationError(f"item {self.item_id}: mos {self.mos} out of [0,100]")
        if self.stddev < 0:
            raise ValidationError(f"item {self.item_id}: negative stddev")
        if self.count < 1:
            raise ValidationError(f"item {self.item_id}: count must be >= 1")
        if len(self.distortion_prob) != N_CATEGORIES:
            raise ValidationError(
                f"item {self.item_id}: expected {N_CATEGORIES} probabilities"
            )
        for p in self.distortion_prob:
            if not (0.0 <= p <= 1.0):
                raise ValidationError(
                    f"item {self.item_id}: distortion probability {p} out of [0,1]"
                )
        object.__setattr__(self, "distortion_prob", tuple(float(p) for p in self.distortion_prob))


# re-exported convenience: copy a record with fields changed
with_fields = replace
