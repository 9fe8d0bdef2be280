"""Synthetic rating-study generator.

Produces sessions with known ground truth so the screening, cleaning, and
analysis code can be tested against planted behaviors: faithful raters track
the true opinion scores with bias and Gaussian noise, constant raters park the
slider, haphazard raters answer uniformly at random, and antagonists invert
the scale. Deterministic for a given seed and configuration.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .datamodel import (
    DistortionCategory,
    LensesWorn,
    N_CATEGORIES,
    RatingRecord,
    SessionRecord,
    ValidationError,
)

RATER_FAITHFUL = "faithful"
RATER_CONSTANT = "constant"
RATER_HAPHAZARD = "haphazard"
RATER_ANTAGONIST = "antagonist"
RATER_TYPES = (RATER_FAITHFUL, RATER_CONSTANT, RATER_HAPHAZARD, RATER_ANTAGONIST)

# constant raters wiggle this much so positions aren't bit-identical
_CONSTANT_JITTER = 0.3


@dataclass(frozen=True)
class SimulatedRaterConfig:
    subject_id: str
    rater_type: str = RATER_FAITHFUL
    noise_stddev: float = 10.0
    bias: float = 0.0
    label_flip_prob: float = 0.0
    constant_value: float = 50.0
    wore_prescribed_lenses: LensesWorn = LensesWorn.NOT_APPLICABLE

    def __post_init__(self):
        if self.rater_type not in RATER_TYPES:
            raise ValidationError(f"unknown rater type {self.rater_type!r}")
        if self.noise_stddev < 0:
            raise ValidationError("noise stddev must be >= 0")
        if not 0.0 <= self.label_flip_prob <= 1.0:
            raise ValidationError("label flip probability must be in [0, 1]")


@dataclass(frozen=True)
class StudyGroundTruth:
    """What the simulated population actually thinks of each item."""

    true_mos: dict[str, float]
    # per-item chance a faithful rater flags each category
    label_prob: dict[str, tuple[float, ...]] = field(default_factory=dict)
    golden_scores: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for item_id, mos in self.true_mos.items():
            if not 0.0 <= mos <= 100.0:
                raise ValidationError(f"true MOS for {item_id} outside [0, 100]")
        for item_id, probs in self.label_prob.items():
            if len(probs) != N_CATEGORIES:
                raise ValidationError(
                    f"item {item_id}: expected {N_CATEGORIES} label probabilities"
                )
            if any(not 0.0 <= p <= 1.0 for p in probs):
                raise ValidationError(f"item {item_id}: label probability outside [0, 1]")


def _clamp(x: float) -> float:
    return float(min(100.0, max(0.0, x)))


_NONE_ONLY = tuple(c is DistortionCategory.NONE for c in DistortionCategory)


def _draw_labels(rng: np.random.Generator, probs: Sequence[float],
                 flip_prob: float) -> tuple[bool, ...]:
    flags = [bool(rng.random() < p) for p in probs]
    if flip_prob > 0:
        flags = [not f if rng.random() < flip_prob else f for f in flags]
    if not any(flags):
        # a rater must tick something; "no distortion" is the honest default
        flags[DistortionCategory.NONE] = True
    return tuple(flags)


def _score_for(rater: SimulatedRaterConfig, true_mos: float,
               rng: np.random.Generator) -> float:
    if rater.rater_type == RATER_FAITHFUL:
        return _clamp(true_mos + rater.bias + rng.normal(0.0, rater.noise_stddev))
    if rater.rater_type == RATER_CONSTANT:
        return _clamp(rater.constant_value + rng.normal(0.0, _CONSTANT_JITTER))
    if rater.rater_type == RATER_HAPHAZARD:
        return float(rng.uniform(0.0, 100.0))
    # antagonist: the scale flipped upside down
    return _clamp(100.0 - true_mos + rater.bias + rng.normal(0.0, rater.noise_stddev))


def _labels_for(rater: SimulatedRaterConfig, probs: Sequence[float],
                rng: np.random.Generator) -> tuple[bool, ...]:
    if rater.rater_type == RATER_CONSTANT:
        return _NONE_ONLY
    if rater.rater_type == RATER_HAPHAZARD:
        return _draw_labels(rng, [0.3] * N_CATEGORIES, 0.0)
    return _draw_labels(rng, probs, rater.label_flip_prob)


def simulate_study(raters: Sequence[SimulatedRaterConfig],
                   truth: StudyGroundTruth,
                   rng_seed: int = 0,
                   n_repeats: int = 5) -> list[SessionRecord]:
    """Generate one full session per configured rater.

    Every rater sees every study item once in a per-rater shuffled order, plus
    ``n_repeats`` re-shows (second showing after the first, both flagged) and
    all golden items. Same inputs and seed give identical sessions.
    """
    item_ids = sorted(truth.true_mos)
    if not item_ids:
        raise ValidationError("ground truth has no items")
    golden_ids = sorted(truth.golden_scores)
    overlap = set(item_ids) & set(golden_ids)
    if overlap:
        raise ValidationError(f"golden items duplicated in study items: {sorted(overlap)}")
    n_repeats = min(n_repeats, len(item_ids))
    default_probs = tuple(
        1.0 if c is DistortionCategory.NONE else 0.0 for c in DistortionCategory
    )

    sessions = []
    for idx, rater in enumerate(raters):
        rng = np.random.default_rng([rng_seed, idx])

        presentation: list[tuple[str, bool, bool]] = [
            (i, False, False) for i in item_ids
        ] + [(g, False, True) for g in golden_ids]
        order = rng.permutation(len(presentation))
        sequence = [presentation[i] for i in order]

        repeat_choice = rng.choice(len(item_ids), size=n_repeats, replace=False)
        repeat_ids = {item_ids[i] for i in repeat_choice}
        sequence = [
            (item, item in repeat_ids, golden) for item, _, golden in sequence
        ]
        for item in sorted(repeat_ids):
            first_pos = next(k for k, (i, _, _) in enumerate(sequence) if i == item)
            insert_at = int(rng.integers(first_pos + 1, len(sequence) + 1))
            sequence.insert(insert_at, (item, True, False))

        ratings = []
        for position, (item_id, is_repeat, is_golden) in enumerate(sequence):
            true_mos = (truth.golden_scores[item_id] if is_golden
                        else truth.true_mos[item_id])
            probs = truth.label_prob.get(item_id, default_probs)
            ratings.append(RatingRecord(
                subject_id=rater.subject_id,
                item_id=item_id,
                quality=_score_for(rater, true_mos, rng),
                distortions=_labels_for(rater, probs, rng),
                position_in_session=position,
                is_repeat=is_repeat,
                is_golden=is_golden,
            ))
        sessions.append(SessionRecord(
            subject_id=rater.subject_id,
            ratings=tuple(ratings),
            wore_prescribed_lenses=rater.wore_prescribed_lenses,
        ))
    return sessions


def default_ground_truth(n_items: int = 60, rng_seed: int = 7,
                         n_golden: int = 5) -> StudyGroundTruth:
    """A spread-out synthetic study: varied MOS and mixed label probabilities."""
    rng = np.random.default_rng(rng_seed)
    true_mos = {}
    label_prob = {}
    for k in range(n_items):
        item_id = f"img{k:03d}"
        true_mos[item_id] = float(rng.uniform(2.0, 98.0))
        raw = rng.uniform(0.0, 0.8, size=N_CATEGORIES - 2)
        p_none = float(np.clip(1.0 - raw.max() + rng.uniform(-0.2, 0.2), 0.0, 1.0))
        p_other = float(rng.uniform(0.0, 0.15))
        label_prob[item_id] = tuple(float(p) for p in raw) + (p_none, p_other)
    golden = {f"gold{k}": float(v)
              for k, v in enumerate(np.linspace(5.0, 95.0, n_golden))}
    return StudyGroundTruth(true_mos=true_mos, label_prob=label_prob,
                            golden_scores=golden)
