"""Subject-level screening: who do we trust enough to keep?

Four behavioral checks run per subject (degenerate slider use, haphazard
scoring, repeat consistency, golden-image agreement), plus the exit-survey
lens question; survivors then go through ITU-R BT.500-style statistical
rejection as a group. A subject is accepted iff no check fired.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .analysis import lcc
from .datamodel import LensesWorn, SessionRecord, ValidationError

REASON_SLIDER_DEGENERATE = "slider-degenerate"
REASON_HAPHAZARD = "haphazard"
REASON_REPEAT_INCONSISTENT = "repeat-inconsistent"
REASON_GOLDEN_MISMATCH = "golden-mismatch"
REASON_BT500_OUTLIER = "bt500-outlier"
REASON_NO_LENSES = "no-lenses"

REASON_CODES = (
    REASON_SLIDER_DEGENERATE,
    REASON_HAPHAZARD,
    REASON_REPEAT_INCONSISTENT,
    REASON_GOLDEN_MISMATCH,
    REASON_BT500_OUTLIER,
    REASON_NO_LENSES,
)

# Degenerate slider use: essentially no movement, or one label-set stamped on
# nearly everything. Haphazard: consecutive scores jump wildly.
SLIDER_STDDEV_MIN = 2.5
SAME_LABELSET_MAX_SHARE = 0.90
HAPHAZARD_MEDIAN_JUMP = 60.0
MIN_RATINGS_FOR_MID_SESSION = 10

REPEAT_TOL_POINTS = 20.0
REPEAT_MAX_FAILURES = 2
GOLDEN_MIN_LCC = 0.6
GOLDEN_MIN_ITEMS = 3

# Statistical rejection constants: deviation bound is 2 sigma for
# normal-looking items (kurtosis in [2, 4]) and sqrt(20) sigma otherwise;
# a subject is rejected when more than 5% of their scores fall outside the
# bounds AND the excursions are two-sided (|P-Q|/(P+Q) < 0.3).
BT500_KURTOSIS_LO = 2.0
BT500_KURTOSIS_HI = 4.0
BT500_DEVIATION_SHARE = 0.05
BT500_SIDEDNESS = 0.3


class InsufficientDataError(ValidationError):
    """A check was asked to run on too little data to mean anything."""


@dataclass(frozen=True)
class ScreenVerdict:
    subject_id: str
    accepted: bool
    reasons: tuple[str, ...] = ()

    def __post_init__(self):
        if self.accepted != (len(self.reasons) == 0):
            raise ValidationError(
                f"subject {self.subject_id}: accepted must mean zero reasons"
            )
        for r in self.reasons:
            if r not in REASON_CODES:
                raise ValidationError(f"unknown reason code {r!r}")


@dataclass(frozen=True)
class RepeatCheckResult:
    passed: bool
    diffs: tuple[float, ...]
    n_failures: int


@dataclass(frozen=True)
class GoldenCheckResult:
    passed: bool
    lcc: float | None
    n_golden: int


@dataclass
class ScreenReport:
    """Per-subject detail behind the verdicts, for the JSON report."""

    verdicts: list[ScreenVerdict] = field(default_factory=list)
    detail: dict[str, dict] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def to_json_obj(self) -> dict:
        return {
            "verdicts": [
                {"subject_id": v.subject_id, "accepted": v.accepted,
                 "reasons": list(v.reasons)}
                for v in self.verdicts
            ],
            "detail": self.detail,
            "warnings": list(self.warnings),
        }


def check_mid_session(ratings_so_far: Sequence) -> str | None:
    """Behavioral check over the ratings seen so far; None means clean.

    Needs at least 10 ratings to say anything.
    """
    if len(ratings_so_far) < MIN_RATINGS_FOR_MID_SESSION:
        raise InsufficientDataError(
            f"mid-session check needs >= {MIN_RATINGS_FOR_MID_SESSION} ratings, "
            f"got {len(ratings_so_far)}"
        )
    ordered = sorted(ratings_so_far, key=lambda r: r.position_in_session)
    scores = np.array([r.quality for r in ordered], dtype=np.float64)

    if float(np.std(scores)) < SLIDER_STDDEV_MIN:
        return REASON_SLIDER_DEGENERATE
    labelsets: dict[tuple, int] = {}
    for r in ordered:
        labelsets[r.distortions] = labelsets.get(r.distortions, 0) + 1
    if max(labelsets.values()) / len(ordered) > SAME_LABELSET_MAX_SHARE:
        return REASON_SLIDER_DEGENERATE

    jumps = np.abs(np.diff(scores))
    if len(jumps) and float(np.median(jumps)) > HAPHAZARD_MEDIAN_JUMP:
        return REASON_HAPHAZARD
    return None


def check_repeats(session: SessionRecord, tol_points: float = REPEAT_TOL_POINTS,
                  max_failures: int = REPEAT_MAX_FAILURES) -> RepeatCheckResult:
    """Fail when more than max_failures repeat pairs disagree by > tol_points."""
    pairs = session.repeat_pairs()
    if not pairs:
        raise InsufficientDataError(
            f"subject {session.subject_id}: no repeat pairs to check"
        )
    diffs = tuple(abs(a - b) for _, a, b in pairs)
    n_failures = sum(1 for d in diffs if d > tol_points)
    return RepeatCheckResult(passed=n_failures <= max_failures,
                             diffs=diffs, n_failures=n_failures)


def check_golden(session: SessionRecord,
                 golden_reference: Mapping[str, float],
                 min_lcc: float = GOLDEN_MIN_LCC) -> GoldenCheckResult:
    """Fail when agreement with the reference scores drops below min_lcc.

    Zero variance in the subject's golden scores counts as a fail: a subject
    who scores every calibration item identically has told us nothing.
    """
    golden = [r for r in session.golden_ratings() if r.item_id in golden_reference]
    if len(golden) < GOLDEN_MIN_ITEMS:
        raise InsufficientDataError(
            f"subject {session.subject_id}: need >= {GOLDEN_MIN_ITEMS} golden "
            f"items with reference scores, got {len(golden)}"
        )
    subject_scores = [r.quality for r in golden]
    reference_scores = [golden_reference[r.item_id] for r in golden]
    if len(set(subject_scores)) == 1 or len(set(reference_scores)) == 1:
        return GoldenCheckResult(passed=False, lcc=None, n_golden=len(golden))
    value = lcc(subject_scores, reference_scores)
    return GoldenCheckResult(passed=value >= min_lcc, lcc=value, n_golden=len(golden))


def bt500_reject(score_matrix: Mapping[str, Mapping[str, float]],
                 ) -> tuple[set[str], dict[str, tuple[int, int, int]], int]:
    """Group-level statistical rejection over a sparse subject x item matrix.

    Returns (rejected subject ids, per-subject (P, Q, N), skipped item count).
    Items rated by fewer than two subjects are skipped. The outcome is
    invariant under adding a constant to every score: means shift with the
    data and the bounds depend only on spread.
    """
    subjects = sorted(score_matrix)
    if len(subjects) < 2:
        raise InsufficientDataError("need >= 2 subjects for statistical rejection")
    items: dict[str, list[float]] = {}
    for subj in subjects:
        for item_id, score in score_matrix[subj].items():
            items.setdefault(item_id, []).append(float(score))
    if len(items) < 2:
        raise InsufficientDataError("need >= 2 items for statistical rejection")

    bounds: dict[str, tuple[float, float]] = {}
    skipped = 0
    for item_id, scores in items.items():
        if len(scores) < 2:
            skipped += 1
            continue
        arr = np.asarray(scores, dtype=np.float64)
        mu = float(arr.mean())
        sigma = float(arr.std(ddof=1))
        centered = arr - arr.mean()
        m2 = float(np.mean(centered ** 2))
        if m2 > 0:
            beta2 = float(np.mean(centered ** 4)) / (m2 * m2)
            factor = 2.0 if BT500_KURTOSIS_LO <= beta2 <= BT500_KURTOSIS_HI else math.sqrt(20.0)
        else:
            factor = 2.0
        bound = factor * sigma
        bounds[item_id] = (mu - bound, mu + bound)

    rejected: set[str] = set()
    detail: dict[str, tuple[int, int, int]] = {}
    for subj in subjects:
        p = q = n = 0
        for item_id, score in score_matrix[subj].items():
            if item_id not in bounds:
                continue
            lo, hi = bounds[item_id]
            n += 1
            if score > hi:
                p += 1
            elif score < lo:
                q += 1
        detail[subj] = (p, q, n)
        if n == 0 or p + q == 0:
            continue
        if (p + q) / n > BT500_DEVIATION_SHARE and abs(p - q) / (p + q) < BT500_SIDEDNESS:
            rejected.add(subj)
    return rejected, detail, skipped


def screen_all(sessions: Sequence[SessionRecord],
               golden_reference: Mapping[str, float] | None = None,
               *,
               repeat_tol: float = REPEAT_TOL_POINTS,
               max_repeat_failures: int = REPEAT_MAX_FAILURES,
               golden_min_lcc: float = GOLDEN_MIN_LCC) -> list[ScreenVerdict]:
    """Run the full screening battery; see screen_report for the detail."""
    return screen_report(sessions, golden_reference,
                         repeat_tol=repeat_tol,
                         max_repeat_failures=max_repeat_failures,
                         golden_min_lcc=golden_min_lcc).verdicts


def screen_report(sessions: Sequence[SessionRecord],
                  golden_reference: Mapping[str, float] | None = None,
                  *,
                  repeat_tol: float = REPEAT_TOL_POINTS,
                  max_repeat_failures: int = REPEAT_MAX_FAILURES,
                  golden_min_lcc: float = GOLDEN_MIN_LCC) -> ScreenReport:
    """Behavioral checks per subject, then statistical rejection on survivors.

    A check that cannot run for a subject (too few ratings, no repeats, no
    goldens) is skipped with a warning, never an abort. Verdicts come back
    sorted by subject id and do not depend on input order.
    """
    report = ScreenReport()
    reasons_by_subject: dict[str, list[str]] = {}
    ordered = sorted(sessions, key=lambda s: s.subject_id)
    if not golden_reference and ordered:
        report.warnings.append(
            "no golden reference provided; golden check skipped for all subjects"
        )

    for session in ordered:
        subject = session.subject_id
        reasons: list[str] = []
        detail: dict = {}

        try:
            mid = check_mid_session(session.ratings)
            detail["mid_session"] = mid or "ok"
            if mid is not None:
                reasons.append(mid)
        except InsufficientDataError as exc:
            report.warnings.append(str(exc))
            detail["mid_session"] = "skipped"

        try:
            rep = check_repeats(session, tol_points=repeat_tol,
                                max_failures=max_repeat_failures)
            detail["repeat"] = {"passed": rep.passed, "diffs": list(rep.diffs),
                                "n_failures": rep.n_failures}
            if not rep.passed:
                reasons.append(REASON_REPEAT_INCONSISTENT)
        except InsufficientDataError as exc:
            report.warnings.append(str(exc))
            detail["repeat"] = "skipped"

        if golden_reference:
            try:
                gold = check_golden(session, golden_reference, min_lcc=golden_min_lcc)
                detail["golden"] = {"passed": gold.passed, "lcc": gold.lcc,
                                    "n_golden": gold.n_golden}
                if not gold.passed:
                    reasons.append(REASON_GOLDEN_MISMATCH)
            except InsufficientDataError as exc:
                report.warnings.append(str(exc))
                detail["golden"] = "skipped"
        else:
            detail["golden"] = "skipped"

        if session.wore_prescribed_lenses is LensesWorn.NO:
            reasons.append(REASON_NO_LENSES)
        detail["lenses"] = session.wore_prescribed_lenses.value

        reasons_by_subject[subject] = reasons
        report.detail[subject] = detail

    # Statistical rejection sees only subjects that passed the behavioral
    # checks, and only their main ratings (repeats and goldens would put two
    # numbers, or a calibration artifact, in one matrix cell).
    survivors = [s for s in ordered if not reasons_by_subject[s.subject_id]]
    matrix = {
        s.subject_id: {r.item_id: r.quality for r in s.main_ratings()}
        for s in survivors
    }
    matrix = {subj: ratings for subj, ratings in matrix.items() if ratings}
    if len(matrix) >= 2:
        try:
            rejected, bt_detail, skipped = bt500_reject(matrix)
            for subj in rejected:
                reasons_by_subject[subj].append(REASON_BT500_OUTLIER)
            for subj, (p, q, n) in bt_detail.items():
                report.detail[subj]["bt500"] = {"P": p, "Q": q, "N": n,
                                                "rejected": subj in rejected}
            if skipped:
                report.warnings.append(
                    f"statistical rejection skipped {skipped} items with < 2 ratings"
                )
        except InsufficientDataError as exc:
            report.warnings.append(str(exc))

    for session in ordered:
        reasons = tuple(reasons_by_subject[session.subject_id])
        report.verdicts.append(
            ScreenVerdict(subject_id=session.subject_id,
                          accepted=not reasons, reasons=reasons)
        )
    return report


def save_verdicts(verdicts: Iterable[ScreenVerdict], path: str | Path) -> None:
    """CSV emitter: subject_id,accepted,reasons (reasons semicolon-joined)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject_id", "accepted", "reasons"])
        for v in verdicts:
            writer.writerow([v.subject_id, "true" if v.accepted else "false",
                             ";".join(v.reasons)])


def load_verdicts(path: str | Path) -> list[ScreenVerdict]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["subject_id", "accepted", "reasons"]:
            raise ValidationError("expected header subject_id,accepted,reasons")
        for row in reader:
            if not row:
                continue
            reasons = tuple(r for r in row[2].split(";") if r)
            out.append(ScreenVerdict(subject_id=row[0],
                                     accepted=row[1].strip().lower() == "true",
                                     reasons=reasons))
    return out


def save_report_json(report: ScreenReport, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(report.to_json_obj(), fh, indent=2)
