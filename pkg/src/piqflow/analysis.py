"""Consistency analytics over cleaned ratings.

Rank statistics (SRCC/LCC) are implemented directly from the definitions so
they can serve as the contract for everything downstream: split-half
inter-subject agreement, golden-image intra-subject agreement, patch-vs-image
pooling checks, distortion label agreement, and the study of how much
agreement binarizing the label probabilities throws away.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .datamodel import (
    CATEGORIES,
    ItemRecord,
    ItemStats,
    N_CATEGORIES,
    SessionRecord,
    ValidationError,
)

DEFAULT_N_SPLITS = 50
MIN_COMMON_ITEMS = 3

BINARIZE_THRESHOLD = "threshold"
BINARIZE_MAX_THREE = "max_three"


class UndefinedCorrelationError(ValidationError):
    """Correlation of a zero-variance vector is undefined."""


# ---------------------------------------------------------------------------
# rank statistics


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks; tied values share the average of their rank range."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size, dtype=np.float64)
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def lcc(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson linear correlation."""
    xa = np.asarray(list(x), dtype=np.float64)
    ya = np.asarray(list(y), dtype=np.float64)
    if xa.size != ya.size:
        raise ValidationError(f"length mismatch: {xa.size} vs {ya.size}")
    if xa.size < 3:
        raise ValidationError(f"correlation needs >= 3 points, got {xa.size}")
    xc = xa - xa.mean()
    yc = ya - ya.mean()
    sx = float(np.sqrt(np.sum(xc * xc)))
    sy = float(np.sqrt(np.sum(yc * yc)))
    if sx == 0.0 or sy == 0.0:
        raise UndefinedCorrelationError("zero variance input")
    return float(np.sum(xc * yc) / (sx * sy))


def srcc(x: Sequence[float], y: Sequence[float]) -> float:
    """Spearman rank correlation: Pearson over average ranks."""
    xa = np.asarray(list(x), dtype=np.float64)
    ya = np.asarray(list(y), dtype=np.float64)
    if xa.size != ya.size:
        raise ValidationError(f"length mismatch: {xa.size} vs {ya.size}")
    if xa.size < 3:
        raise ValidationError(f"correlation needs >= 3 points, got {xa.size}")
    return lcc(_average_ranks(xa), _average_ranks(ya))


# ---------------------------------------------------------------------------
# split-half machinery


@dataclass(frozen=True)
class ConsistencyReport:
    mean_split_half_srcc: float
    n_splits: int
    per_split: tuple[float, ...]
    scope: str = "images"
    skipped_splits: int = 0

    def __post_init__(self):
        if self.per_split and abs(
            self.mean_split_half_srcc - sum(self.per_split) / len(self.per_split)
        ) > 1e-12:
            raise ValidationError("mean must equal the average of per-split values")


def _scores_by_subject(sessions: Iterable[SessionRecord],
                       items: set[str] | None = None,
                       ) -> dict[str, dict[str, float]]:
    out: dict[str, dict[str, float]] = {}
    for s in sessions:
        ratings = {}
        for r in s.main_ratings():
            if items is None or r.item_id in items:
                ratings[r.item_id] = r.quality
        if ratings:
            out[s.subject_id] = ratings
    return out


def _labels_by_subject(sessions: Iterable[SessionRecord],
                       items: set[str] | None = None,
                       ) -> dict[str, dict[str, tuple[bool, ...]]]:
    out: dict[str, dict[str, tuple[bool, ...]]] = {}
    for s in sessions:
        labels = {}
        for r in s.main_ratings():
            if items is None or r.item_id in items:
                labels[r.item_id] = r.distortions
        if labels:
            out[s.subject_id] = labels
    return out


def _half_means(half: Sequence[str], scores: Mapping[str, Mapping[str, float]],
                ) -> dict[str, float]:
    sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    for subj in half:
        for item_id, score in scores[subj].items():
            sums[item_id] = sums.get(item_id, 0.0) + score
            counts[item_id] = counts.get(item_id, 0) + 1
    return {i: sums[i] / counts[i] for i in sums}


def split_halves(subjects: Sequence[str], n_splits: int,
                 rng_seed: int) -> list[tuple[list[str], list[str]]]:
    """Random disjoint half-partitions; odd counts put the extra in half one."""
    rng = np.random.default_rng(rng_seed)
    splits = []
    subjects = list(subjects)
    cut = (len(subjects) + 1) // 2
    for _ in range(n_splits):
        perm = [subjects[i] for i in rng.permutation(len(subjects))]
        splits.append((perm[:cut], perm[cut:]))
    return splits


def inter_subject_consistency(sessions: Sequence[SessionRecord],
                              n_splits: int = DEFAULT_N_SPLITS,
                              rng_seed: int = 0,
                              items: set[str] | None = None,
                              scope: str = "images") -> ConsistencyReport:
    """Mean split-half SRCC of per-item MOS between random subject halves.

    Items must appear in both halves of a split to count there; splits with
    fewer than 3 common items (or degenerate MOS vectors) are skipped.
    """
    scores = _scores_by_subject(sessions, items)
    subjects = sorted(scores)
    if len(subjects) < 4:
        raise ValidationError(f"need >= 4 subjects, got {len(subjects)}")
    per_split: list[float] = []
    skipped = 0
    for half_a, half_b in split_halves(subjects, n_splits, rng_seed):
        mos_a = _half_means(half_a, scores)
        mos_b = _half_means(half_b, scores)
        common = sorted(set(mos_a) & set(mos_b))
        if len(common) < MIN_COMMON_ITEMS:
            skipped += 1
            continue
        try:
            per_split.append(srcc([mos_a[i] for i in common],
                                  [mos_b[i] for i in common]))
        except UndefinedCorrelationError:
            skipped += 1
    if not per_split:
        raise UndefinedCorrelationError("every split was degenerate or too small")
    return ConsistencyReport(
        mean_split_half_srcc=float(sum(per_split) / len(per_split)),
        n_splits=len(per_split),
        per_split=tuple(per_split),
        scope=scope,
        skipped_splits=skipped,
    )


@dataclass(frozen=True)
class IntraSubjectReport:
    median_lcc: float
    per_subject: dict[str, float]
    n_excluded: int


def intra_subject_consistency(sessions: Sequence[SessionRecord],
                              golden_reference: Mapping[str, float],
                              ) -> IntraSubjectReport:
    """Median per-subject LCC against the golden reference scores.

    Subjects with fewer than 3 usable golden ratings, or degenerate scores on
    them, are excluded from the median but counted.
    """
    per_subject: dict[str, float] = {}
    excluded = 0
    for s in sessions:
        golden = [r for r in s.golden_ratings() if r.item_id in golden_reference]
        if len(golden) < 3:
            excluded += 1
            continue
        subj_scores = [r.quality for r in golden]
        ref_scores = [golden_reference[r.item_id] for r in golden]
        try:
            per_subject[s.subject_id] = lcc(subj_scores, ref_scores)
        except UndefinedCorrelationError:
            excluded += 1
    if not per_subject:
        raise ValidationError("no subject had enough usable golden ratings")
    return IntraSubjectReport(
        median_lcc=float(np.median(list(per_subject.values()))),
        per_subject=per_subject,
        n_excluded=excluded,
    )


@dataclass(frozen=True)
class PatchImageCorrelation:
    overall: float
    random: float | None
    salient: float | None
    n_pairs: int


def patch_vs_image_correlation(item_stats: Mapping[str, ItemStats],
                               items: Mapping[str, ItemRecord],
                               ) -> PatchImageCorrelation:
    """SRCC between each patch's MOS and its parent image's MOS.

    Reported overall and restricted to each placement kind; a kind with fewer
    than 3 scored pairs comes back as None.
    """
    pairs: list[tuple[str, float, float]] = []
    for item_id, item in items.items():
        if not item.kind.is_patch:
            continue
        if item_id not in item_stats or item.parent_id not in item_stats:
            continue
        pairs.append((item.kind.value,
                      item_stats[item.parent_id].mos,
                      item_stats[item_id].mos))
    if len(pairs) < MIN_COMMON_ITEMS:
        raise UndefinedCorrelationError(
            f"need >= {MIN_COMMON_ITEMS} patch/parent pairs with stats, got {len(pairs)}"
        )
    overall = srcc([p[1] for p in pairs], [p[2] for p in pairs])

    def restricted(kind: str) -> float | None:
        sub = [(a, b) for k, a, b in pairs if k == kind]
        if len(sub) < MIN_COMMON_ITEMS:
            return None
        try:
            return srcc([a for a, _ in sub], [b for _, b in sub])
        except UndefinedCorrelationError:
            return None

    return PatchImageCorrelation(
        overall=overall,
        random=restricted("random-patch"),
        salient=restricted("salient-patch"),
        n_pairs=len(pairs),
    )


# ---------------------------------------------------------------------------
# distortion label agreement


def _half_label_probs(half: Sequence[str],
                      labels: Mapping[str, Mapping[str, tuple[bool, ...]]],
                      ) -> dict[str, np.ndarray]:
    sums: dict[str, np.ndarray] = {}
    counts: dict[str, int] = {}
    for subj in half:
        for item_id, flags in labels[subj].items():
            vec = np.asarray(flags, dtype=np.float64)
            if item_id in sums:
                sums[item_id] += vec
                counts[item_id] += 1
            else:
                sums[item_id] = vec.copy()
                counts[item_id] = 1
    return {i: sums[i] / counts[i] for i in sums}


def distortion_consistency(sessions: Sequence[SessionRecord],
                           n_splits: int = DEFAULT_N_SPLITS,
                           rng_seed: int = 0,
                           ) -> dict[str, float]:
    """Per-category mean split-half SRCC of the label probability vectors."""
    study = binarization_consistency_study(sessions, strategies=(),
                                           n_splits=n_splits, rng_seed=rng_seed)
    return study.per_strategy["probabilistic"]


@dataclass(frozen=True)
class BinarizationStudy:
    per_strategy: dict[str, dict[str, float]]
    drop_pct: dict[str, dict[str, float]]
    n_splits: int


def binarize(prob: Sequence[float], strategy: str, t: float | None = None,
             ) -> tuple[bool, ...]:
    """Collapse a probability vector to flags.

    ``threshold``: flag iff prob >= t (t in (0,1)). ``max_three``: flag the
    three highest-probability categories, lower index winning ties.
    """
    vec = tuple(float(p) for p in prob)
    if len(vec) != N_CATEGORIES:
        raise ValidationError(f"expected {N_CATEGORIES} probabilities, got {len(vec)}")
    if strategy == BINARIZE_THRESHOLD:
        if t is None or not 0.0 < t < 1.0:
            raise ValidationError(f"threshold t must be in (0,1), got {t}")
        return tuple(p >= t for p in vec)
    if strategy == BINARIZE_MAX_THREE:
        top = sorted(range(N_CATEGORIES), key=lambda i: (-vec[i], i))[:3]
        return tuple(i in top for i in range(N_CATEGORIES))
    raise ValidationError(f"unknown binarization strategy {strategy!r}")


def _strategy_label(strategy: str, t: float | None) -> str:
    return f"threshold-{t:g}" if strategy == BINARIZE_THRESHOLD else "max-three"


def binarization_consistency_study(
    sessions: Sequence[SessionRecord],
    strategies: Sequence[tuple[str, float | None]] = (
        (BINARIZE_THRESHOLD, 0.3),
        (BINARIZE_THRESHOLD, 0.4),
        (BINARIZE_THRESHOLD, 0.5),
        (BINARIZE_MAX_THREE, None),
    ),
    n_splits: int = DEFAULT_N_SPLITS,
    rng_seed: int = 0,
) -> BinarizationStudy:
    """How much inter-group label agreement survives binarization.

    For every random subject split, each half's per-item label probability
    vectors are compared per category (SRCC), both raw and after collapsing
    each half's probabilities with each strategy. The same splits are reused
    across strategies so the comparison is paired. Zero-variance categories
    are skipped per split.
    """
    labels = _labels_by_subject(sessions)
    subjects = sorted(labels)
    if len(subjects) < 4:
        raise ValidationError(f"need >= 4 subjects, got {len(subjects)}")

    names = ["probabilistic"] + [_strategy_label(s, t) for s, t in strategies]
    sums = {n: dict.fromkeys(CATEGORIES, 0.0) for n in names}
    counts = {n: dict.fromkeys(CATEGORIES, 0) for n in names}

    used_splits = 0
    for half_a, half_b in split_halves(subjects, n_splits, rng_seed):
        probs_a = _half_label_probs(half_a, labels)
        probs_b = _half_label_probs(half_b, labels)
        common = sorted(set(probs_a) & set(probs_b))
        if len(common) < MIN_COMMON_ITEMS:
            continue
        used_splits += 1
        mat_a = np.stack([probs_a[i] for i in common])
        mat_b = np.stack([probs_b[i] for i in common])
        views: dict[str, tuple[np.ndarray, np.ndarray]] = {"probabilistic": (mat_a, mat_b)}
        for strat, t in strategies:
            bin_a = np.stack([binarize(row, strat, t) for row in mat_a]).astype(float)
            bin_b = np.stack([binarize(row, strat, t) for row in mat_b]).astype(float)
            views[_strategy_label(strat, t)] = (bin_a, bin_b)
        for name, (va, vb) in views.items():
            for ci, cat in enumerate(CATEGORIES):
                try:
                    value = srcc(va[:, ci], vb[:, ci])
                except UndefinedCorrelationError:
                    continue
                sums[name][cat] += value
                counts[name][cat] += 1

    if used_splits == 0:
        raise ValidationError("no split had enough common items")
    per_strategy = {
        name: {cat: (sums[name][cat] / counts[name][cat]
                     if counts[name][cat] else float("nan"))
               for cat in CATEGORIES}
        for name in names
    }
    drop_pct: dict[str, dict[str, float]] = {}
    base = per_strategy["probabilistic"]
    for name in names[1:]:
        drop_pct[name] = {}
        for cat in CATEGORIES:
            b, v = base[cat], per_strategy[name][cat]
            drop_pct[name][cat] = (
                float("nan") if not np.isfinite(b) or not np.isfinite(v) or b == 0
                else 100.0 * (b - v) / abs(b)
            )
    return BinarizationStudy(per_strategy=per_strategy, drop_pct=drop_pct,
                             n_splits=used_splits)


# ---------------------------------------------------------------------------
# distributions and strata


@dataclass(frozen=True)
class HistogramReport:
    mos_counts: tuple[int, ...]
    bin_edges: tuple[float, ...]
    category_mean_prob: dict[str, float]


def histograms(item_stats: Mapping[str, ItemStats], bins: int = 10,
               value_range: tuple[float, float] = (0.0, 100.0),
               ) -> HistogramReport:
    """MOS histogram plus the mean probability mass per distortion category."""
    if not item_stats:
        raise ValidationError("no items")
    mos = np.array([s.mos for s in item_stats.values()], dtype=np.float64)
    counts, edges = np.histogram(mos, bins=bins, range=value_range)
    prob = np.stack([np.asarray(s.distortion_prob) for s in item_stats.values()])
    means = prob.mean(axis=0)
    return HistogramReport(
        mos_counts=tuple(int(c) for c in counts),
        bin_edges=tuple(float(e) for e in edges),
        category_mean_prob={c: float(m) for c, m in zip(CATEGORIES, means)},
    )


_STRATUM_GETTERS = {
    "device": lambda s: s.device_class.value,
    "resolution": lambda s: f"{s.resolution[0]}x{s.resolution[1]}",
    "distance": lambda s: s.viewing_distance_bucket,
    "age": lambda s: s.age_bucket,
    "gender": lambda s: s.gender,
}


def stratified_consistency(sessions: Sequence[SessionRecord], stratum: str,
                           values_a: str | set[str],
                           values_b: str | set[str] | None = None) -> float:
    """SRCC between the MOS vectors of two demographic strata.

    ``values_b=None`` compares the first stratum against everyone. Strata need
    at least 3 items rated on both sides.
    """
    if stratum not in _STRATUM_GETTERS:
        raise ValidationError(
            f"unknown stratum {stratum!r}; choose from {sorted(_STRATUM_GETTERS)}"
        )
    get = _STRATUM_GETTERS[stratum]
    if isinstance(values_a, str):
        values_a = {values_a}
    if isinstance(values_b, str):
        values_b = {values_b}
    group_a = [s for s in sessions if get(s) in values_a]
    group_b = list(sessions) if values_b is None else [s for s in sessions if get(s) in values_b]
    if not group_a or not group_b:
        raise ValidationError("both strata must be nonempty")
    scores_a = _scores_by_subject(group_a)
    scores_b = _scores_by_subject(group_b)
    mos_a = _half_means(sorted(scores_a), scores_a)
    mos_b = _half_means(sorted(scores_b), scores_b)
    common = sorted(set(mos_a) & set(mos_b))
    if len(common) < MIN_COMMON_ITEMS:
        raise ValidationError(
            f"strata share only {len(common)} items; need >= {MIN_COMMON_ITEMS}"
        )
    return srcc([mos_a[i] for i in common], [mos_b[i] for i in common])
