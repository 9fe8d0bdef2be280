"""Multi-task quality + distortion model.

One shared hidden layer feeds two heads: a sigmoid quality output reported on
the 0..100 scale and seven per-category sigmoid distortion outputs. Training
is deterministic full-batch gradient descent on the summed MSE of both heads,
with the learning rate held constant for the first half of the epochs and
decayed by 10x each epoch after that. A closed-form ridge baseline (no hidden
layer) exists to regression-test the surrounding pipeline.

``MultiTaskRegressor`` wraps the whole thing in the scikit-learn estimator
protocol: ``fit(X, y)`` / ``predict(X)`` / ``get_params()``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .analysis import UndefinedCorrelationError, lcc, srcc
from .datamodel import (
    CATEGORIES,
    ItemRecord,
    ItemStats,
    N_CATEGORIES,
    ValidationError,
)
from .features import FEATURE_CONFIG, extract_features

MODE_MLP = "mlp"
MODE_RIDGE = "ridge-baseline"

MODEL_FORMAT = "quality-model"
MODEL_VERSION = 1

DEFAULT_HIDDEN_DIM = 32
DEFAULT_EPOCHS = 10
DEFAULT_BASE_LR = 0.5
DEFAULT_SPLIT_PROPORTIONS = (0.603, 0.196, 0.201)

MOS_RANGES = (("0-33", 0, 33), ("34-66", 34, 66), ("67-100", 67, 100))


class TrainingDivergedError(RuntimeError):
    """Loss went non-finite; carries the epoch and learning rate."""


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class ModelParams:
    """Weights plus the feature standardization they were trained under."""

    mode: str
    feature_config: str
    mean: np.ndarray
    std: np.ndarray
    # mlp mode
    w1: np.ndarray | None = None
    b1: np.ndarray | None = None
    wq: np.ndarray | None = None
    bq: float = 0.0
    wd: np.ndarray | None = None
    bd: np.ndarray | None = None
    nonlinearity: str = "tanh"
    # ridge mode
    ridge_wq: np.ndarray | None = None
    ridge_bq: float = 0.0
    ridge_wd: np.ndarray | None = None
    ridge_bd: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def standardize(self, x: np.ndarray) -> np.ndarray:
        safe_std = np.where(self.std > 0, self.std, 1.0)
        return (np.asarray(x, dtype=np.float64) - self.mean) / safe_std

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(quality in [0,100], distortion probabilities in [0,1]) per row."""
        z = self.standardize(np.atleast_2d(x))
        if self.mode == MODE_MLP:
            h = np.tanh(z @ self.w1.T + self.b1)
            q = _sigmoid(h @ self.wq + self.bq)
            d = _sigmoid(h @ self.wd.T + self.bd)
        else:
            q = np.clip(z @ self.ridge_wq + self.ridge_bq, 0.0, 1.0)
            d = np.clip(z @ self.ridge_wd.T + self.ridge_bd, 0.0, 1.0)
        return 100.0 * q, d


def _init_params(feature_dim: int, hidden_dim: int, seed: int,
                 mean: np.ndarray, std: np.ndarray) -> ModelParams:
    rng = np.random.default_rng(seed)
    return ModelParams(
        mode=MODE_MLP,
        feature_config=FEATURE_CONFIG,
        mean=mean,
        std=std,
        w1=rng.normal(0.0, 1.0 / math.sqrt(feature_dim), (hidden_dim, feature_dim)),
        b1=np.zeros(hidden_dim),
        wq=rng.normal(0.0, 1.0 / math.sqrt(hidden_dim), hidden_dim),
        bq=0.0,
        wd=rng.normal(0.0, 1.0 / math.sqrt(hidden_dim), (N_CATEGORIES, hidden_dim)),
        bd=np.zeros(N_CATEGORIES),
    )


def loss_and_grads(params: ModelParams, z: np.ndarray, yq: np.ndarray,
                   yd: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
    """Summed two-head MSE and its exact gradients on standardized inputs.

    Quality targets live in [0,1] here; the 100x scaling is presentation only.
    """
    n = z.shape[0]
    h_pre = z @ params.w1.T + params.b1
    h = np.tanh(h_pre)
    q = _sigmoid(h @ params.wq + params.bq)
    d = _sigmoid(h @ params.wd.T + params.bd)

    loss = float(np.mean((q - yq) ** 2) + np.mean((d - yd) ** 2))

    gq = 2.0 * (q - yq) * q * (1.0 - q) / n
    gd = 2.0 * (d - yd) * d * (1.0 - d) / (n * N_CATEGORIES)

    grads = {
        "wq": h.T @ gq,
        "bq": float(np.sum(gq)),
        "wd": gd.T @ h,
        "bd": gd.sum(axis=0),
    }
    gh = np.outer(gq, params.wq) + gd @ params.wd
    gh_pre = gh * (1.0 - h * h)
    grads["w1"] = gh_pre.T @ z
    grads["b1"] = gh_pre.sum(axis=0)
    return loss, grads


def lr_at_epoch(base_lr: float, epoch: int, epochs: int) -> float:
    """Constant for the first half of training, then 10x decay per epoch."""
    half = epochs // 2
    if epoch < half:
        return base_lr
    return base_lr * (0.1 ** (epoch - half + 1))


def fit_arrays(x: np.ndarray, quality01: np.ndarray, dist_prob: np.ndarray,
               *, mode: str = MODE_MLP, hidden_dim: int = DEFAULT_HIDDEN_DIM,
               epochs: int = DEFAULT_EPOCHS, base_lr: float = DEFAULT_BASE_LR,
               seed: int = 0, ridge_lambda: float = 1e-3,
               x_val: np.ndarray | None = None,
               quality01_val: np.ndarray | None = None,
               dist_prob_val: np.ndarray | None = None) -> ModelParams:
    """Train on a prepared feature matrix; the spine under every fit() path."""
    x = np.asarray(x, dtype=np.float64)
    yq = np.asarray(quality01, dtype=np.float64)
    yd = np.asarray(dist_prob, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValidationError("training features must be a nonempty 2-D matrix")
    if yq.shape != (x.shape[0],) or yd.shape != (x.shape[0], N_CATEGORIES):
        raise ValidationError("target shapes do not match the feature matrix")
    if np.any(yq < 0) or np.any(yq > 1):
        raise ValidationError("quality targets must be in [0, 1]")

    mean = x.mean(axis=0)
    std = x.std(axis=0)
    flags = []
    if float(yq.std()) == 0.0:
        flags.append("degenerate-quality-targets")
    if float(yd.std()) == 0.0:
        flags.append("degenerate-distortion-targets")

    if mode == MODE_RIDGE:
        params = ModelParams(mode=MODE_RIDGE, feature_config=FEATURE_CONFIG,
                             mean=mean, std=std)
        z = params.standardize(x)
        gram = z.T @ z + ridge_lambda * np.eye(z.shape[1])
        solve = np.linalg.solve
        params.ridge_wq = solve(gram, z.T @ (yq - yq.mean()))
        params.ridge_bq = float(yq.mean())
        params.ridge_wd = solve(gram, z.T @ (yd - yd.mean(axis=0))).T
        params.ridge_bd = yd.mean(axis=0)
        params.metadata = {"mode": mode, "seed": seed, "ridge_lambda": ridge_lambda,
                           "n_train": int(x.shape[0]), "flags": flags}
        return params
    if mode != MODE_MLP:
        raise ValidationError(f"unknown training mode {mode!r}")

    params = _init_params(x.shape[1], hidden_dim, seed, mean, std)
    z = params.standardize(x)
    loss_curve = []
    val_curve = []
    for epoch in range(epochs):
        lr = lr_at_epoch(base_lr, epoch, epochs)
        loss, grads = loss_and_grads(params, z, yq, yd)
        if not np.isfinite(loss):
            raise TrainingDivergedError(
                f"non-finite loss at epoch {epoch} (lr={lr}); "
                f"inputs finite={bool(np.all(np.isfinite(z)))}"
            )
        params.w1 -= lr * grads["w1"]
        params.b1 -= lr * grads["b1"]
        params.wq -= lr * grads["wq"]
        params.bq -= lr * grads["bq"]
        params.wd -= lr * grads["wd"]
        params.bd -= lr * grads["bd"]
        loss_curve.append(loss)
        if x_val is not None and len(x_val):
            vq, vd = params.forward(x_val)
            val_loss = float(np.mean((vq / 100.0 - quality01_val) ** 2)
                             + np.mean((vd - dist_prob_val) ** 2))
            val_curve.append(val_loss)

    params.metadata = {
        "mode": mode, "seed": seed, "epochs": epochs, "base_lr": base_lr,
        "hidden_dim": hidden_dim, "n_train": int(x.shape[0]),
        "loss_curve": loss_curve, "val_loss_curve": val_curve, "flags": flags,
    }
    return params


class MultiTaskRegressor(BaseEstimator):
    """Scikit-learn-style estimator around the two-head model.

    ``y`` for :meth:`fit` is an (n, 8) array: column 0 the quality target on
    the 0..100 scale, columns 1..7 the distortion probabilities. ``predict``
    returns the same layout.
    """

    def __init__(self, mode: str = MODE_MLP, hidden_dim: int = DEFAULT_HIDDEN_DIM,
                 epochs: int = DEFAULT_EPOCHS, base_lr: float = DEFAULT_BASE_LR,
                 seed: int = 0, ridge_lambda: float = 1e-3):
        self.mode = mode
        self.hidden_dim = hidden_dim
        self.epochs = epochs
        self.base_lr = base_lr
        self.seed = seed
        self.ridge_lambda = ridge_lambda

    def fit(self, X, y, X_val=None, y_val=None):
        y = np.asarray(y, dtype=np.float64)
        if y.ndim != 2 or y.shape[1] != 1 + N_CATEGORIES:
            raise ValidationError(
                f"y must be (n, {1 + N_CATEGORIES}): quality 0..100 then "
                f"{N_CATEGORIES} probabilities"
            )
        kwargs = {}
        if y_val is not None:
            y_val = np.asarray(y_val, dtype=np.float64)
            kwargs = {"x_val": np.asarray(X_val, dtype=np.float64),
                      "quality01_val": y_val[:, 0] / 100.0,
                      "dist_prob_val": y_val[:, 1:]}
        self.params_ = fit_arrays(
            X, y[:, 0] / 100.0, y[:, 1:],
            mode=self.mode, hidden_dim=self.hidden_dim, epochs=self.epochs,
            base_lr=self.base_lr, seed=self.seed, ridge_lambda=self.ridge_lambda,
            **kwargs,
        )
        return self

    def predict(self, X) -> np.ndarray:
        q, d = self.params_.forward(np.asarray(X, dtype=np.float64))
        return np.column_stack([q, d])


# ---------------------------------------------------------------------------
# dataset splits


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple[str, ...]
    validation: tuple[str, ...]
    test: tuple[str, ...]
    proportions: tuple[float, float, float] = DEFAULT_SPLIT_PROPORTIONS

    def subset_of(self, item_id: str) -> str | None:
        if item_id in set(self.train):
            return "train"
        if item_id in set(self.validation):
            return "validation"
        if item_id in set(self.test):
            return "test"
        return None


def split_dataset(items: Mapping[str, ItemRecord],
                  proportions: tuple[float, float, float] = DEFAULT_SPLIT_PROPORTIONS,
                  seed: int = 0) -> DatasetSplit:
    """Partition parents by proportion; every patch follows its parent.

    Disjoint by construction and covers every item.
    """
    if abs(sum(proportions) - 1.0) > 1e-6:
        raise ValidationError(f"proportions must sum to 1, got {proportions}")
    parents = sorted(i for i, rec in items.items() if not rec.kind.is_patch)
    if len(parents) < 3:
        raise ValidationError(f"need >= 3 parent items to split, got {len(parents)}")
    rng = np.random.default_rng(seed)
    order = [parents[i] for i in rng.permutation(len(parents))]
    n = len(order)
    n_train = int(round(proportions[0] * n))
    n_val = int(round(proportions[1] * n))
    n_val = min(n_val, n - n_train)
    assign: dict[str, str] = {}
    for idx, item_id in enumerate(order):
        assign[item_id] = ("train" if idx < n_train
                           else "validation" if idx < n_train + n_val
                           else "test")
    buckets: dict[str, list[str]] = {"train": [], "validation": [], "test": []}
    for item_id in sorted(items):
        rec = items[item_id]
        home = assign[rec.parent_id] if rec.kind.is_patch else assign[item_id]
        buckets[home].append(item_id)
    return DatasetSplit(train=tuple(buckets["train"]),
                        validation=tuple(buckets["validation"]),
                        test=tuple(buckets["test"]),
                        proportions=tuple(proportions))


# ---------------------------------------------------------------------------
# orchestration over items


def targets_for(stats: ItemStats) -> np.ndarray:
    """y row for the estimator: [mos 0..100, seven probabilities]."""
    return np.array([stats.mos, *stats.distortion_prob], dtype=np.float64)


def train(features_by_item: Mapping[str, np.ndarray],
          item_stats: Mapping[str, ItemStats],
          split: DatasetSplit,
          *, items: Mapping[str, ItemRecord] | None = None,
          images_only: bool = False,
          mode: str = MODE_MLP, hidden_dim: int = DEFAULT_HIDDEN_DIM,
          epochs: int = DEFAULT_EPOCHS, base_lr: float = DEFAULT_BASE_LR,
          seed: int = 0) -> ModelParams:
    """Fit on the train split (optionally parents only) with validation tracking."""
    def usable(ids: Sequence[str]) -> list[str]:
        out = []
        for i in ids:
            if i not in features_by_item or i not in item_stats:
                continue
            if images_only and items is not None and items[i].kind.is_patch:
                continue
            out.append(i)
        return out

    train_ids = usable(split.train)
    if not train_ids:
        raise ValidationError("train split has no items with features and stats")
    val_ids = usable(split.validation)

    def matrices(ids: list[str]):
        x = np.stack([features_by_item[i] for i in ids])
        y = np.stack([targets_for(item_stats[i]) for i in ids])
        return x, y[:, 0] / 100.0, y[:, 1:]

    x, yq, yd = matrices(train_ids)
    kwargs = {}
    if val_ids:
        xv, yqv, ydv = matrices(val_ids)
        kwargs = {"x_val": xv, "quality01_val": yqv, "dist_prob_val": ydv}
    params = fit_arrays(x, yq, yd, mode=mode, hidden_dim=hidden_dim,
                        epochs=epochs, base_lr=base_lr, seed=seed, **kwargs)
    params.metadata["n_validation"] = len(val_ids)
    params.metadata["images_only"] = images_only
    return params


def predict(params: ModelParams, pixels: np.ndarray,
            region: tuple[int, int, int, int] | None = None,
            ) -> tuple[float, np.ndarray]:
    """(quality 0..100, seven distortion probabilities) for an image/region."""
    feats = extract_features(pixels, region)
    q, d = params.forward(feats[None, :])
    return float(q[0]), d[0]


@dataclass
class MetricsReport:
    quality_srcc: float | None
    quality_lcc: float | None
    per_range: dict[str, dict[str, float | None]]
    distortion_srcc: dict[str, float | None]
    per_kind: dict[str, dict[str, float | None]]
    n_items: int
    notes: list[str] = field(default_factory=list)

    def to_json_obj(self) -> dict:
        return {
            "n_items": self.n_items,
            "quality": {"srcc": self.quality_srcc, "lcc": self.quality_lcc},
            "per_range": self.per_range,
            "distortion_srcc": self.distortion_srcc,
            "per_kind": self.per_kind,
            "notes": self.notes,
        }


def _safe_corr(fn, a, b, notes, label) -> float | None:
    if len(a) < 3:
        notes.append(f"{label}: omitted, only {len(a)} items")
        return None
    try:
        return fn(a, b)
    except UndefinedCorrelationError:
        notes.append(f"{label}: undefined (zero variance)")
        return None


def evaluate(params: ModelParams,
             features_by_item: Mapping[str, np.ndarray],
             item_stats: Mapping[str, ItemStats],
             split: DatasetSplit,
             items: Mapping[str, ItemRecord] | None = None,
             subset: str = "test") -> MetricsReport:
    """Correlation metrics on one split subset.

    Quality SRCC/LCC overall and per MOS band; SRCC per distortion category;
    per-item-kind breakdowns when the item catalog is supplied. Slices with
    fewer than 3 items, or degenerate predictions, are omitted with a note.
    """
    ids = [i for i in getattr(split, subset)
           if i in features_by_item and i in item_stats]
    if not ids:
        raise ValidationError(f"{subset} split has no items with features and stats")
    x = np.stack([features_by_item[i] for i in ids])
    pred_q, pred_d = params.forward(x)
    true_q = np.array([item_stats[i].mos for i in ids])
    true_d = np.stack([item_stats[i].distortion_prob for i in ids])

    notes: list[str] = []
    report = MetricsReport(
        quality_srcc=_safe_corr(srcc, true_q, pred_q, notes, "quality srcc"),
        quality_lcc=_safe_corr(lcc, true_q, pred_q, notes, "quality lcc"),
        per_range={}, distortion_srcc={}, per_kind={}, n_items=len(ids),
        notes=notes,
    )
    for label, lo, hi in MOS_RANGES:
        mask = (np.floor(true_q) >= lo) & (np.floor(true_q) <= hi)
        report.per_range[label] = {
            "srcc": _safe_corr(srcc, true_q[mask], pred_q[mask], notes,
                               f"range {label} srcc"),
            "lcc": _safe_corr(lcc, true_q[mask], pred_q[mask], notes,
                              f"range {label} lcc"),
            "n": int(mask.sum()),
        }
    for ci, cat in enumerate(CATEGORIES):
        report.distortion_srcc[cat] = _safe_corr(
            srcc, true_d[:, ci], pred_d[:, ci], notes, f"distortion {cat} srcc"
        )
    if items is not None:
        kinds = {
            "whole-image": [k for k, i in enumerate(ids)
                            if not items[i].kind.is_patch],
            "random-patch": [k for k, i in enumerate(ids)
                             if items[i].kind.value == "random-patch"],
            "salient-patch": [k for k, i in enumerate(ids)
                              if items[i].kind.value == "salient-patch"],
        }
        for kind, idx in kinds.items():
            if not idx:
                continue
            report.per_kind[kind] = {
                "srcc": _safe_corr(srcc, true_q[idx], pred_q[idx], notes,
                                   f"kind {kind} srcc"),
                "lcc": _safe_corr(lcc, true_q[idx], pred_q[idx], notes,
                                  f"kind {kind} lcc"),
                "n": len(idx),
            }
    return report


# ---------------------------------------------------------------------------
# serialization: versioned JSON, bit-exact on weights


def _tolist(arr: np.ndarray | None):
    return None if arr is None else np.asarray(arr, dtype=np.float64).tolist()


def save_model(params: ModelParams, path: str | Path) -> None:
    obj = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "mode": params.mode,
        "feature_config": params.feature_config,
        "standardization": {"mean": _tolist(params.mean), "std": _tolist(params.std)},
        "nonlinearity": params.nonlinearity,
        "weights": {
            "w1": _tolist(params.w1), "b1": _tolist(params.b1),
            "wq": _tolist(params.wq), "bq": params.bq,
            "wd": _tolist(params.wd), "bd": _tolist(params.bd),
            "ridge_wq": _tolist(params.ridge_wq), "ridge_bq": params.ridge_bq,
            "ridge_wd": _tolist(params.ridge_wd), "ridge_bd": _tolist(params.ridge_bd),
        },
        "metadata": params.metadata,
    }
    with open(path, "w") as fh:
        json.dump(obj, fh)


def _toarray(value):
    return None if value is None else np.asarray(value, dtype=np.float64)


def load_model(path: str | Path) -> ModelParams:
    with open(path) as fh:
        obj = json.load(fh)
    if obj.get("format") != MODEL_FORMAT:
        raise ValidationError(f"not a model file: format={obj.get('format')!r}")
    if obj.get("version") != MODEL_VERSION:
        raise ValidationError(f"unsupported model version {obj.get('version')!r}")
    w = obj["weights"]
    ridge_bd = _toarray(w.get("ridge_bd"))
    return ModelParams(
        mode=obj["mode"],
        feature_config=obj["feature_config"],
        mean=_toarray(obj["standardization"]["mean"]),
        std=_toarray(obj["standardization"]["std"]),
        w1=_toarray(w.get("w1")), b1=_toarray(w.get("b1")),
        wq=_toarray(w.get("wq")), bq=w.get("bq", 0.0),
        wd=_toarray(w.get("wd")), bd=_toarray(w.get("bd")),
        nonlinearity=obj.get("nonlinearity", "tanh"),
        ridge_wq=_toarray(w.get("ridge_wq")), ridge_bq=w.get("ridge_bq", 0.0),
        ridge_wd=_toarray(w.get("ridge_wd")), ridge_bd=ridge_bd,
        metadata=obj.get("metadata", {}),
    )
