"""Perceptual-statistics feature extraction.

Eighteen classical no-reference quality statistics, computed at full and half
scale, give a 36-dim vector per image or region. The half scale is 2x2 block
averaging. Region extraction crops first and then computes, so features on a
region of a large image are identical to features on the cropped-out image:
local and global predictions share one definition.

Degenerate inputs are defined, not special-cased away: on a constant region
every variance-normalized statistic is 0 by guarded division.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .datamodel import ValidationError
from .imageops import gaussian_blur, half_scale, to_luminance

FEATURE_CONFIG = "pstats18x2-v1"
MIN_REGION_SIDE = 16

_MSCN_SIGMA = 7.0 / 6.0
_MSCN_WINDOW = 7
_MSCN_C = 1.0
_VOV_BLOCK = 8
_LAPLACIAN = np.array([[0.0, 1.0, 0.0],
                       [1.0, -4.0, 1.0],
                       [0.0, 1.0, 0.0]])

_PER_SCALE_NAMES = (
    "mscn_std", "mscn_kurtosis", "mscn_skewness", "mscn_abs_mean",
    "laplacian_var",
    "gradmag_mean", "gradmag_std",
    "lum_mean", "lum_std", "lum_p2", "lum_p98",
    "frac_bright", "frac_dark",
    "block_var_mean", "block_var_var",
    "autocorr_h", "autocorr_v",
    "lum_entropy",
)
FEATURE_NAMES = tuple(f"{name}@{scale}" for scale in ("full", "half")
                      for name in _PER_SCALE_NAMES)
FEATURE_DIM = len(FEATURE_NAMES)


def _moments(x: np.ndarray) -> tuple[float, float, float]:
    """(std, skewness, non-excess kurtosis), all 0 on zero variance."""
    centered = x - x.mean()
    m2 = float(np.mean(centered ** 2))
    if m2 <= 0.0:
        return 0.0, 0.0, 0.0
    m3 = float(np.mean(centered ** 3))
    m4 = float(np.mean(centered ** 4))
    return float(np.sqrt(m2)), m3 / m2 ** 1.5, m4 / (m2 * m2)


def _mscn(lum: np.ndarray) -> np.ndarray:
    mu = gaussian_blur(lum, _MSCN_SIGMA, _MSCN_WINDOW)
    var = gaussian_blur(lum * lum, _MSCN_SIGMA, _MSCN_WINDOW) - mu * mu
    sigma = np.sqrt(np.maximum(var, 0.0))
    return (lum - mu) / (sigma + _MSCN_C)


def _lag1_corr(a: np.ndarray, b: np.ndarray) -> float:
    af = a.ravel() - a.mean()
    bf = b.ravel() - b.mean()
    denom = float(np.sqrt(np.sum(af * af) * np.sum(bf * bf)))
    if denom <= 0.0:
        return 0.0
    return float(np.sum(af * bf) / denom)


def _block_variances(lum: np.ndarray, block: int) -> np.ndarray:
    h, w = lum.shape
    bh, bw = h // block, w // block
    if bh == 0 or bw == 0:
        return np.zeros(0)
    trimmed = lum[: bh * block, : bw * block]
    blocks = trimmed.reshape(bh, block, bw, block).transpose(0, 2, 1, 3)
    return blocks.reshape(bh * bw, block * block).var(axis=1)


def _entropy(lum: np.ndarray) -> float:
    counts, _ = np.histogram(lum, bins=256, range=(0.0, 256.0))
    p = counts[counts > 0] / counts.sum()
    return float(-np.sum(p * np.log2(p)))


def _scale_features(lum: np.ndarray) -> list[float]:
    mscn = _mscn(lum)
    mscn_std, mscn_skew, mscn_kurt = _moments(mscn)

    lap = ndimage.convolve(lum, _LAPLACIAN, mode="nearest")
    gy, gx = np.gradient(lum)
    gradmag = np.sqrt(gx * gx + gy * gy)

    block_vars = _block_variances(lum, _VOV_BLOCK)
    block_var_mean = float(block_vars.mean()) if block_vars.size else 0.0
    block_var_var = float(block_vars.var()) if block_vars.size > 1 else 0.0

    return [
        mscn_std,
        mscn_kurt,
        mscn_skew,
        float(np.mean(np.abs(mscn))),
        float(lap.var()),
        float(gradmag.mean()),
        float(gradmag.std()),
        float(lum.mean()),
        float(lum.std()),
        float(np.percentile(lum, 2)),
        float(np.percentile(lum, 98)),
        float(np.mean(lum >= 250.0)),
        float(np.mean(lum <= 5.0)),
        block_var_mean,
        block_var_var,
        _lag1_corr(lum[:, :-1], lum[:, 1:]),
        _lag1_corr(lum[:-1, :], lum[1:, :]),
        _entropy(lum),
    ]


def extract_features(pixels: np.ndarray,
                     region: tuple[int, int, int, int] | None = None) -> np.ndarray:
    """36-dim perceptual-statistics vector for an image or a region of it.

    ``region`` is (left, top, width, height), at least 16x16 and inside the
    image. Output is float64 with every entry finite.
    """
    lum = to_luminance(pixels)
    h, w = lum.shape
    if region is not None:
        left, top, rw, rh = region
        if rw < MIN_REGION_SIDE or rh < MIN_REGION_SIDE:
            raise ValidationError(
                f"region {rw}x{rh} too small; minimum side is {MIN_REGION_SIDE}"
            )
        if left < 0 or top < 0 or left + rw > w or top + rh > h:
            raise ValidationError(
                f"region {region} outside image bounds {w}x{h}"
            )
        lum = lum[top:top + rh, left:left + rw]
    elif h < MIN_REGION_SIDE or w < MIN_REGION_SIDE:
        raise ValidationError(
            f"image {w}x{h} too small; minimum side is {MIN_REGION_SIDE}"
        )

    values = _scale_features(lum) + _scale_features(half_scale(lum))
    out = np.array(values, dtype=np.float64)
    if not np.all(np.isfinite(out)):
        bad = [FEATURE_NAMES[i] for i in np.nonzero(~np.isfinite(out))[0]]
        raise ValidationError(f"non-finite features: {bad}")
    return out


def extract_feature_matrix(images: list[np.ndarray]) -> np.ndarray:
    """Stack per-image features into an (n, 36) matrix."""
    return np.stack([extract_features(img) for img in images])
