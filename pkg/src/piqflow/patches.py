"""Cropping fixed-fraction patches out of whole images.

Two placement modes: ``random`` puts the crop uniformly at random inside the
image bounds (seeded), ``salient`` centers it on the window with the highest
mean saliency under a spectral-residual saliency map. Patch dimensions are
``fraction`` of each linear dimension, rounded half away from zero, so a
1000x500 image at fraction 0.4 yields a 400x200 patch and the aspect ratio
survives within a pixel of exact rounding.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .datamodel import ItemKind, ItemRecord, ValidationError
from .imageops import (
    gaussian_blur,
    integral_image,
    resize_bilinear,
    round_half_away,
    to_luminance,
    window_sums,
)

MIN_PATCH_SIDE = 8
_SALIENCY_WORKING_SIZE = 64

PATCH_MODES = ("random", "salient")


def saliency_map(pixels: np.ndarray) -> np.ndarray:
    """Spectral-residual saliency, normalized to [0, 1].

    Log-amplitude spectrum minus its 3x3 local mean keeps the "surprising"
    frequency content; the inverse transform of that residual (with the
    original phase) lights up where the surprise lives. Computed at a 64-px
    working scale, Gaussian-smoothed, then resampled to the input size.
    """
    gray = to_luminance(pixels)
    h, w = gray.shape
    if gray.min() == gray.max():
        # constant input: nothing is salient, and normalizing the spectral
        # residual would just amplify float noise at the DC bin
        return np.zeros((h, w))
    scale = _SALIENCY_WORKING_SIZE / max(h, w)
    sw = max(2, round_half_away(w * scale))
    sh = max(2, round_half_away(h * scale))
    small = resize_bilinear(gray, sw, sh)

    spectrum = np.fft.fft2(small)
    log_amp = np.log1p(np.abs(spectrum))
    phase = np.angle(spectrum)
    residual = log_amp - ndimage.uniform_filter(log_amp, size=3, mode="nearest")
    sal = np.abs(np.fft.ifft2(np.exp(residual + 1j * phase))) ** 2
    sal = gaussian_blur(sal, sigma=2.5, size=9)

    sal = resize_bilinear(sal, w, h)
    lo, hi = sal.min(), sal.max()
    if hi - lo <= 0:
        return np.zeros_like(sal)
    return (sal - lo) / (hi - lo)


def patch_shape(width: int, height: int, fraction: float) -> tuple[int, int]:
    """Patch (width, height) for a given linear fraction of the parent."""
    if not 0.0 < fraction <= 1.0:
        raise ValidationError(f"fraction must be in (0, 1], got {fraction}")
    return round_half_away(width * fraction), round_half_away(height * fraction)


def crop_window(pixels: np.ndarray, mode: str, fraction: float,
                rng_seed: int = 0) -> tuple[np.ndarray, tuple[int, int]]:
    """Crop one patch; returns (patch pixels, (left, top) offset).

    Same seed, same image, same arguments always give the same crop. Patches
    smaller than 8x8 are refused.
    """
    if mode not in PATCH_MODES:
        raise ValidationError(f"mode must be one of {PATCH_MODES}, got {mode!r}")
    arr = np.asarray(pixels)
    h, w = arr.shape[:2]
    pw, ph = patch_shape(w, h, fraction)
    if pw < MIN_PATCH_SIDE or ph < MIN_PATCH_SIDE:
        raise ValidationError(
            f"patch would be {pw}x{ph}; minimum side is {MIN_PATCH_SIDE}"
        )
    pw, ph = min(pw, w), min(ph, h)

    if mode == "random":
        rng = np.random.default_rng(rng_seed)
        left = int(rng.integers(0, w - pw + 1))
        top = int(rng.integers(0, h - ph + 1))
    else:
        sal = saliency_map(arr)
        sums = window_sums(integral_image(sal), ph, pw)
        # argmax scans in raster order, so ties resolve to the top-left window
        top, left = np.unravel_index(int(np.argmax(sums)), sums.shape)
        top, left = int(top), int(left)

    return arr[top:top + ph, left:left + pw].copy(), (left, top)


def crop_patches(item: ItemRecord, pixels: np.ndarray, mode: str,
                 fraction: float, rng_seed: int = 0,
                 ) -> tuple[ItemRecord, np.ndarray, tuple[int, int]]:
    """Crop a patch and mint its catalog record (kind, parent link, size)."""
    patch_px, (left, top) = crop_window(pixels, mode, fraction, rng_seed)
    kind = ItemKind.RANDOM_PATCH if mode == "random" else ItemKind.SALIENT_PATCH
    record = ItemRecord(
        item_id=f"{item.item_id}_{mode}_{rng_seed}",
        kind=kind,
        parent_id=item.item_id,
        width_px=patch_px.shape[1],
        height_px=patch_px.shape[0],
        source_path=f"{item.source_path}#{mode}@{rng_seed}",
    )
    return record, patch_px, (left, top)
