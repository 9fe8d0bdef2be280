"""Low-level pixel utilities shared by feature extraction, cropping, and maps.

Images travel through the package as numpy arrays: uint8 ``(H, W, 3)`` RGB or
``(H, W)`` grayscale. Floating-point work happens in float64 luminance on the
0..255 scale.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

# Rec. 601 luma weights.
_LUMA = np.array([0.299, 0.587, 0.114])


def load_image(path: str | Path) -> np.ndarray:
    """Read an image file into a uint8 RGB array of shape (H, W, 3)."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))


def save_image(pixels: np.ndarray, path: str | Path) -> None:
    arr = np.asarray(pixels)
    if arr.dtype != np.uint8:
        arr = np.clip(np.rint(arr), 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path)


def to_luminance(pixels: np.ndarray) -> np.ndarray:
    """Float64 luminance in [0, 255] from RGB or grayscale input."""
    arr = np.asarray(pixels, dtype=np.float64)
    if arr.ndim == 2:
        return arr
    if arr.ndim == 3 and arr.shape[2] == 3:
        return arr @ _LUMA
    raise ValueError(f"expected (H,W) or (H,W,3) array, got shape {arr.shape}")


def gaussian_kernel_1d(sigma: float, size: int) -> np.ndarray:
    """Sampled, sum-normalized 1-D Gaussian of odd length ``size``."""
    if size % 2 != 1:
        raise ValueError("kernel size must be odd")
    x = np.arange(size, dtype=np.float64) - size // 2
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_blur(img: np.ndarray, sigma: float, size: int) -> np.ndarray:
    """Separable Gaussian filter with replicated edges."""
    k = gaussian_kernel_1d(sigma, size)
    out = ndimage.convolve1d(np.asarray(img, dtype=np.float64), k, axis=0, mode="nearest")
    return ndimage.convolve1d(out, k, axis=1, mode="nearest")


def half_scale(img: np.ndarray) -> np.ndarray:
    """Downscale by 2 via non-overlapping 2x2 block means (odd edges dropped)."""
    arr = np.asarray(img, dtype=np.float64)
    h, w = arr.shape[:2]
    h2, w2 = h // 2, w // 2
    if h2 == 0 or w2 == 0:
        raise ValueError("image too small to halve")
    arr = arr[: h2 * 2, : w2 * 2]
    if arr.ndim == 2:
        return arr.reshape(h2, 2, w2, 2).mean(axis=(1, 3))
    return arr.reshape(h2, 2, w2, 2, -1).mean(axis=(1, 3))


def integral_image(img: np.ndarray) -> np.ndarray:
    """Summed-area table with a zero top row/left column.

    ``S[i, j]`` is the sum of ``img[:i, :j]``; a window sum is then four
    lookups: ``S[y2,x2] - S[y1,x2] - S[y2,x1] + S[y1,x1]``.
    """
    arr = np.asarray(img, dtype=np.float64)
    s = np.zeros((arr.shape[0] + 1, arr.shape[1] + 1))
    np.cumsum(np.cumsum(arr, axis=0), axis=1, out=s[1:, 1:])
    return s


def window_sums(sat: np.ndarray, win_h: int, win_w: int) -> np.ndarray:
    """All sliding-window sums from a summed-area table built by integral_image."""
    return (sat[win_h:, win_w:] - sat[:-win_h, win_w:]
            - sat[win_h:, :-win_w] + sat[:-win_h, :-win_w])


def resize_bilinear(img: np.ndarray, width: int, height: int) -> np.ndarray:
    """Bilinear resample of a 2-D float array."""
    im = Image.fromarray(np.asarray(img, dtype=np.float32), mode="F")
    return np.asarray(im.resize((width, height), Image.BILINEAR), dtype=np.float64)


def round_half_away(x: float) -> int:
    """0.5 rounds away from zero (unlike python's bankers' rounding)."""
    return int(np.floor(x + 0.5)) if x >= 0 else -int(np.floor(-x + 0.5))
