"""Turning predictions into words: buckets, severities, guidance, best-frame.

Everything here is a deterministic rule: quality scores fall into five named
buckets, distortion scores into three severities, and each distortion category
has a fixed remediation message. The guided-photography state machine walks
capture -> quality feedback -> optional distortion detail -> save/retake.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from .datamodel import CATEGORIES, DistortionCategory, N_CATEGORIES, ValidationError
from .model import ModelParams, predict


class QualityBucket(str, enum.Enum):
    BAD = "Bad"
    POOR = "Poor"
    FAIR = "Fair"
    GOOD = "Good"
    EXCELLENT = "Excellent"


class Severity(enum.IntEnum):
    LOW = 0
    MODERATE = 1
    HIGH = 2

    @property
    def label(self) -> str:
        return self.name.capitalize()


# bucket boundaries: [0,20) Bad, [20,40) Poor, [40,60) Fair, [60,80) Good,
# [80,100] Excellent; interior boundaries go to the upper bucket
_BUCKET_EDGES = (
    (20.0, QualityBucket.BAD),
    (40.0, QualityBucket.POOR),
    (60.0, QualityBucket.FAIR),
    (80.0, QualityBucket.GOOD),
)

SEVERITY_HIGH_ABOVE = 0.50
SEVERITY_MODERATE_FROM = 0.20


def quality_bucket(score: float) -> QualityBucket:
    if not 0.0 <= score <= 100.0:
        raise ValidationError(f"quality score {score} outside [0, 100]")
    for edge, bucket in _BUCKET_EDGES:
        if score < edge:
            return bucket
    return QualityBucket.EXCELLENT


def severity(score: float) -> Severity:
    """High strictly above 0.50; Moderate on [0.20, 0.50]; Low below."""
    if not 0.0 <= score <= 1.0:
        raise ValidationError(f"distortion score {score} outside [0, 1]")
    if score > SEVERITY_HIGH_ABOVE:
        return Severity.HIGH
    if score >= SEVERITY_MODERATE_FROM:
        return Severity.MODERATE
    return Severity.LOW


_BASE_MESSAGES = {
    DistortionCategory.BLURRY:
        "The phone may be too close to the object, move it away from it.",
    DistortionCategory.SHAKY:
        "Hold the phone and the object steady.",
    DistortionCategory.DARK:
        "Scene is too dark, try turning on the flash or switch on the lights.",
    DistortionCategory.GRAINY:
        "Try increasing the lighting or move the camera further from the subject.",
    DistortionCategory.NONE:
        "No major distortions seem to be present.",
    DistortionCategory.OTHER:
        "Unrecognized distortion.",
}
_BRIGHT_BASE = "Scene is too bright. Try turning off the flash."
_BRIGHT_HIGH_EXTRA = " Find proper lighting if you can."


def base_feedback(category: DistortionCategory | str,
                  level: Severity | None = None) -> str:
    """The remediation message for a category.

    The too-bright advice appends its lighting clause only at High severity;
    every other category ignores the severity argument.
    """
    if isinstance(category, str):
        category = DistortionCategory.from_label(category)
    if category is DistortionCategory.BRIGHT:
        if level is Severity.HIGH:
            return _BRIGHT_BASE + _BRIGHT_HIGH_EXTRA
        return _BRIGHT_BASE
    return _BASE_MESSAGES[category]


@dataclass(frozen=True)
class RankedDistortion:
    category: str
    score: float
    severity: str
    message: str


@dataclass(frozen=True)
class FeedbackReport:
    bucket: str
    quality: float
    ranked: tuple[RankedDistortion, ...]
    messages: tuple[str, ...]
    localized: tuple[tuple[str, str], ...] = ()

    def to_json_obj(self) -> dict:
        return {
            "bucket": self.bucket,
            "quality": self.quality,
            "ranked": [
                {"category": r.category, "score": r.score,
                 "severity": r.severity, "message": r.message}
                for r in self.ranked
            ],
            "messages": list(self.messages),
            "localized": [{"category": c, "region": p} for c, p in self.localized],
        }


# 'other' has no remediation advice, so it never enters the ranking
_RANKABLE = tuple(c for c in DistortionCategory if c is not DistortionCategory.OTHER)


def build_report(quality: float, distortions: Sequence[float]) -> FeedbackReport:
    """Bucket plus the top three distortions with severities and messages.

    Categories sort by score descending, ties to the lower category index. If
    "no distortion" wins the ranking outright, the report carries only that
    message; there is nothing to fix.
    """
    if len(distortions) != N_CATEGORIES:
        raise ValidationError(f"expected {N_CATEGORIES} scores, got {len(distortions)}")
    scores = [float(s) for s in distortions]
    for s in scores:
        if not 0.0 <= s <= 1.0:
            raise ValidationError(f"distortion score {s} outside [0, 1]")
    bucket = quality_bucket(quality)

    order = sorted(_RANKABLE, key=lambda c: (-scores[c], int(c)))
    if order[0] is DistortionCategory.NONE:
        top = [DistortionCategory.NONE]
    else:
        top = order[:3]
    ranked = []
    for cat in top:
        level = severity(scores[cat])
        ranked.append(RankedDistortion(
            category=cat.label,
            score=scores[cat],
            severity=level.label,
            message=base_feedback(cat, level),
        ))
    return FeedbackReport(
        bucket=bucket.value,
        quality=float(quality),
        ranked=tuple(ranked),
        messages=tuple(r.message for r in ranked),
    )


REGION_PHRASES = (
    "top-left", "top-center", "top-right",
    "center-left", "center", "center-right",
    "bottom-left", "bottom-center", "bottom-right",
)


def localized_feedback(grids: Mapping[str, np.ndarray],
                       ) -> list[tuple[str, str]]:
    """Where each dominant distortion lives, as region phrases.

    ``grids`` maps category label to its 3x3 score grid (iteration order is
    the ranking order). A cell speaks up only at Moderate severity or above;
    cells come out in raster order.
    """
    out: list[tuple[str, str]] = []
    for category, grid in grids.items():
        arr = np.asarray(grid, dtype=np.float64)
        if arr.shape != (3, 3):
            raise ValidationError(
                f"{category}: localized feedback needs a 3x3 grid, got {arr.shape}"
            )
        for idx, score in enumerate(arr.ravel()):
            if severity(float(score)) >= Severity.MODERATE:
                out.append((category, REGION_PHRASES[idx]))
    return out


def region_grid_3x3(params: ModelParams, pixels: np.ndarray,
                    ) -> dict[str, np.ndarray]:
    """Per-category 3x3 distortion grids by predicting on nine image cells.

    Cell edges sit at rounded thirds. If the image is too small for 16 px
    cells, every cell inherits the whole-image prediction.
    """
    arr = np.asarray(pixels)
    h, w = arr.shape[:2]
    ys = [round(k * h / 3) for k in range(4)]
    xs = [round(k * w / 3) for k in range(4)]
    grids = np.zeros((3, 3, N_CATEGORIES))
    too_small = min(ys[k + 1] - ys[k] for k in range(3)) < 16 or \
        min(xs[k + 1] - xs[k] for k in range(3)) < 16
    if too_small:
        _, d = predict(params, arr)
        grids[:, :] = d
    else:
        for r in range(3):
            for c in range(3):
                region = (xs[c], ys[r], xs[c + 1] - xs[c], ys[r + 1] - ys[r])
                _, d = predict(params, arr, region=region)
                grids[r, c] = d
    return {cat: grids[:, :, ci] for ci, cat in enumerate(CATEGORIES)}


# ---------------------------------------------------------------------------
# guided photography state machine

STATE_AWAIT_CAPTURE = "AwaitCapture"
STATE_QUALITY_SHOWN = "QualityShown"
STATE_DISTORTION_SHOWN = "DistortionShown"
STATE_SAVED = "Saved"
STATES = (STATE_AWAIT_CAPTURE, STATE_QUALITY_SHOWN,
          STATE_DISTORTION_SHOWN, STATE_SAVED)

EVENT_CAPTURE = "capture"
EVENT_REQUEST_DISTORTION = "request_distortion_feedback"
EVENT_SAVE = "save"
EVENT_RETAKE = "retake"
EVENTS = (EVENT_CAPTURE, EVENT_REQUEST_DISTORTION, EVENT_SAVE, EVENT_RETAKE)

_LEGAL = {
    STATE_AWAIT_CAPTURE: {EVENT_CAPTURE},
    STATE_QUALITY_SHOWN: {EVENT_REQUEST_DISTORTION, EVENT_SAVE, EVENT_RETAKE},
    STATE_DISTORTION_SHOWN: {EVENT_REQUEST_DISTORTION, EVENT_SAVE, EVENT_RETAKE},
    STATE_SAVED: set(),
}


def legal_events(state: str) -> set[str]:
    if state not in _LEGAL:
        raise ValidationError(f"unknown state {state!r}")
    return set(_LEGAL[state])


@dataclass(frozen=True)
class GuidedSessionState:
    state: str = STATE_AWAIT_CAPTURE
    attempts: int = 0
    last_quality: float | None = None
    last_distortions: tuple[float, ...] | None = None
    last_pixels: np.ndarray | None = None

    def __post_init__(self):
        if self.state not in STATES:
            raise ValidationError(f"unknown state {self.state!r}")


def guided_step(state: GuidedSessionState, event: str,
                params: ModelParams | None = None,
                pixels: np.ndarray | None = None,
                predictor: Callable[[np.ndarray], tuple[float, np.ndarray]] | None = None,
                ) -> tuple[GuidedSessionState, dict]:
    """One state-machine transition; illegal events leave the state alone.

    ``capture`` needs ``pixels`` plus either ``params`` or a ``predictor``
    callable; ``request_distortion_feedback`` reuses the captured pixels for
    the localized 3x3 detail (skipped under a bare predictor).
    """
    if event not in EVENTS:
        return state, {"error": f"unknown event {event!r}",
                       "state": state.state}
    if event not in _LEGAL[state.state]:
        return state, {"error": f"event {event!r} not allowed in state "
                                f"{state.state}",
                       "state": state.state}

    if event == EVENT_CAPTURE:
        if pixels is None:
            return state, {"error": "capture needs an image", "state": state.state}
        if predictor is not None:
            quality, dist = predictor(pixels)
        elif params is not None:
            quality, dist = predict(params, pixels)
        else:
            return state, {"error": "capture needs a model", "state": state.state}
        bucket = quality_bucket(quality)
        new = GuidedSessionState(
            state=STATE_QUALITY_SHOWN,
            attempts=state.attempts,
            last_quality=float(quality),
            last_distortions=tuple(float(d) for d in dist),
            last_pixels=np.asarray(pixels),
        )
        return new, {"state": new.state, "quality": new.last_quality,
                     "bucket": bucket.value,
                     "message": f"Picture quality is {bucket.value}."}

    if event == EVENT_REQUEST_DISTORTION:
        report = build_report(state.last_quality, state.last_distortions)
        if params is not None and state.last_pixels is not None:
            grids = region_grid_3x3(params, state.last_pixels)
            ranked_grids = {r.category: grids[r.category] for r in report.ranked
                            if r.category in grids}
            report = replace(report,
                             localized=tuple(localized_feedback(ranked_grids)))
        new = replace(state, state=STATE_DISTORTION_SHOWN)
        return new, {"state": new.state, "report": report.to_json_obj()}

    if event == EVENT_SAVE:
        new = replace(state, state=STATE_SAVED)
        return new, {"state": new.state, "message": "Photo saved."}

    # retake
    new = GuidedSessionState(state=STATE_AWAIT_CAPTURE,
                             attempts=state.attempts + 1)
    return new, {"state": new.state, "attempts": new.attempts}


def select_best_frame(frames: Sequence[np.ndarray], params: ModelParams,
                      ) -> tuple[int, float, str]:
    """Index, quality, and bucket of the highest-quality frame.

    Ties go to the earliest frame.
    """
    if len(frames) == 0:
        raise ValidationError("no frames given")
    best_idx = 0
    best_q = -1.0
    for idx, frame in enumerate(frames):
        q, _ = predict(params, frame)
        if q > best_q:
            best_idx, best_q = idx, q
    return best_idx, best_q, quality_bucket(best_q).value
