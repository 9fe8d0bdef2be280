"""Per-item rating cleanup: outlier rejection and MOS / label-probability stats.

The outlier method is gated on the shape of the score distribution. When the
kurtosis says "roughly normal" (beta2 in [2, 4]) a modified Z-score over the
median/MAD does the rejecting; anything heavier- or lighter-tailed falls to
Tukey's fences, which don't assume a shape. Whichever branch runs, at most
half the scores may be discarded.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .datamodel import (
    CATEGORIES,
    ItemRecord,
    ItemStats,
    RatingRecord,
    SessionRecord,
    ValidationError,
)
from .imageops import load_image

KURTOSIS_NORMAL_LO = 2.0
KURTOSIS_NORMAL_HI = 4.0
MODIFIED_Z_SCALE = 0.6745
MODIFIED_Z_CUTOFF = 3.5
TUKEY_WHISKER = 1.5
CONSTANT_COLOR_VARIANCE = 1e-6

METHOD_ZSCORE = "modified-z"
METHOD_TUKEY = "tukey"
METHOD_TUKEY_MAD_FALLBACK = "tukey-mad-fallback"
METHOD_NONE = "degenerate-noop"


class UndefinedKurtosisError(ValidationError):
    """Kurtosis of a zero-variance sample is undefined."""


@dataclass(frozen=True)
class RejectionResult:
    retained: tuple[float, ...]
    rejected_indices: tuple[int, ...]
    method_used: str


def kurtosis(scores: Sequence[float]) -> float:
    """Non-excess kurtosis beta2 = m4 / m2^2 with plain 1/n central moments.

    A Gaussian sample lands near 3; a symmetric two-point sample at exactly 1.
    """
    arr = np.asarray(list(scores), dtype=np.float64)
    if arr.size < 4:
        raise ValidationError(f"kurtosis needs >= 4 scores, got {arr.size}")
    centered = arr - arr.mean()
    m2 = float(np.mean(centered ** 2))
    if m2 == 0.0:
        raise UndefinedKurtosisError("kurtosis undefined for zero-variance scores")
    m4 = float(np.mean(centered ** 4))
    return m4 / (m2 * m2)


def _quantile(sorted_arr: np.ndarray, p: float) -> float:
    """Inclusive linear-interpolation quantile (rank = p * (n - 1))."""
    n = sorted_arr.size
    pos = p * (n - 1)
    lo = int(np.floor(pos))
    hi = int(np.ceil(pos))
    if lo == hi:
        return float(sorted_arr[lo])
    frac = pos - lo
    return float(sorted_arr[lo] * (1 - frac) + sorted_arr[hi] * frac)


def _tukey_candidates(arr: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    srt = np.sort(arr)
    q1 = _quantile(srt, 0.25)
    q3 = _quantile(srt, 0.75)
    iqr = q3 - q1
    lo = q1 - TUKEY_WHISKER * iqr
    hi = q3 + TUKEY_WHISKER * iqr
    mask = (arr < lo) | (arr > hi)
    # distance outside the fences ranks candidates when the cap kicks in
    extremity = np.where(arr < lo, lo - arr, np.where(arr > hi, arr - hi, 0.0))
    return mask, extremity


def reject_outliers(scores: Sequence[float]) -> RejectionResult:
    """Drop implausible scores for one item; returns what survived and why.

    Roughly-normal samples (kurtosis in [2, 4]) use the modified Z-score
    M = 0.6745 (x - median) / MAD with cutoff 3.5; other shapes use Tukey
    fences at 1.5 IQR with inclusive linear-interpolation quartiles. A MAD of
    zero silently reroutes to the Tukey branch. Never rejects more than
    floor(n/2) scores.
    """
    arr = np.asarray(list(scores), dtype=np.float64)
    n = arr.size
    if n < 4:
        raise ValidationError(f"outlier rejection needs >= 4 scores, got {n}")
    if np.all(arr == arr[0]):
        return RejectionResult(tuple(arr.tolist()), (), METHOD_NONE)

    try:
        beta2 = kurtosis(arr)
    except UndefinedKurtosisError:
        # distinct values whose variance still underflows to zero: nothing
        # sane to reject
        return RejectionResult(tuple(arr.tolist()), (), METHOD_NONE)
    method = METHOD_TUKEY
    if KURTOSIS_NORMAL_LO <= beta2 <= KURTOSIS_NORMAL_HI:
        median = float(np.median(arr))
        mad = float(np.median(np.abs(arr - median)))
        if mad > 0:
            m = MODIFIED_Z_SCALE * (arr - median) / mad
            mask = np.abs(m) > MODIFIED_Z_CUTOFF
            extremity = np.abs(m)
            method = METHOD_ZSCORE
        else:
            mask, extremity = _tukey_candidates(arr)
            method = METHOD_TUKEY_MAD_FALLBACK
    else:
        mask, extremity = _tukey_candidates(arr)

    rejected = [int(i) for i in np.nonzero(mask)[0]]
    cap = n // 2
    if len(rejected) > cap:
        # keep only the most extreme rejections, earliest index breaking ties
        rejected.sort(key=lambda i: (-extremity[i], i))
        rejected = sorted(rejected[:cap])
    retained = tuple(float(arr[i]) for i in range(n) if i not in set(rejected))
    return RejectionResult(retained, tuple(rejected), method)


def compute_item_stats(item_id: str, ratings: Sequence[RatingRecord]) -> ItemStats:
    """MOS, spread, and distortion label probabilities over retained ratings.

    Probabilities are per-category positives over the rating count; they need
    not sum to one, the labels are multi-choice.
    """
    if not ratings:
        raise ValidationError(f"item {item_id}: no retained ratings")
    scores = np.array([r.quality for r in ratings], dtype=np.float64)
    mos = float(scores.mean())
    stddev = float(scores.std(ddof=1)) if scores.size > 1 else 0.0
    counts = np.zeros(len(CATEGORIES))
    for r in ratings:
        counts += np.asarray(r.distortions, dtype=np.float64)
    probs = tuple(float(c) / len(ratings) for c in counts)
    return ItemStats(item_id=item_id, mos=mos, stddev=stddev,
                     count=len(ratings), distortion_prob=probs)


@dataclass
class CleanReport:
    stats: dict[str, ItemStats]
    rejected: dict[str, tuple[int, ...]]
    methods: dict[str, str]
    dropped_items: list[str]


def clean_all(sessions: Sequence[SessionRecord],
              min_ratings: int = 4) -> CleanReport:
    """Outlier-reject then summarize every item across subjects.

    Only each subject's first showing of an item contributes, so a repeated
    item is not counted twice per subject. Items with fewer than min_ratings
    ratings skip rejection and are summarized as-is; items with zero ratings
    are dropped.

    Ratings whose quality score is rejected also lose their distortion labels:
    a subject judged wrong about the score is not trusted on the labels.
    """
    per_item: dict[str, list[RatingRecord]] = {}
    for session in sessions:
        seen: set[str] = set()
        for r in session.ratings:
            if r.item_id in seen:
                continue
            seen.add(r.item_id)
            per_item.setdefault(r.item_id, []).append(r)

    stats: dict[str, ItemStats] = {}
    rejected: dict[str, tuple[int, ...]] = {}
    methods: dict[str, str] = {}
    dropped: list[str] = []
    for item_id in sorted(per_item):
        ratings = per_item[item_id]
        if not ratings:
            dropped.append(item_id)
            continue
        if len(ratings) < max(min_ratings, 4):
            # rejection itself is undefined under 4 scores
            kept = ratings
            rejected[item_id] = ()
            methods[item_id] = METHOD_NONE
        else:
            result = reject_outliers([r.quality for r in ratings])
            rejected_set = set(result.rejected_indices)
            kept = [r for i, r in enumerate(ratings) if i not in rejected_set]
            rejected[item_id] = result.rejected_indices
            methods[item_id] = result.method_used
        if not kept:
            dropped.append(item_id)
            continue
        stats[item_id] = compute_item_stats(item_id, kept)
    return CleanReport(stats=stats, rejected=rejected, methods=methods,
                       dropped_items=dropped)


def drop_degenerate_items(items: Mapping[str, ItemRecord],
                          pixels: Mapping[str, np.ndarray] | None = None,
                          ) -> tuple[dict[str, ItemRecord], list[tuple[str, str]]]:
    """Discard constant-color (or unreadable) items before any analysis.

    Pixel data comes from ``pixels`` when given, else from each item's source
    path. An item is constant when every channel's variance is under 1e-6.
    """
    retained: dict[str, ItemRecord] = {}
    dropped: list[tuple[str, str]] = []
    for item_id in sorted(items):
        item = items[item_id]
        try:
            arr = pixels[item_id] if pixels is not None else load_image(item.source_path)
        except Exception as exc:
            dropped.append((item_id, f"undecodable: {exc}"))
            continue
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        max_var = float(arr.reshape(-1, arr.shape[2]).var(axis=0).max())
        if max_var < CONSTANT_COLOR_VARIANCE:
            dropped.append((item_id, "constant-color"))
        else:
            retained[item_id] = item
    return retained, dropped
