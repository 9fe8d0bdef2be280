"""Spatial quality and distortion maps.

An image is tiled into non-overlapping NxN squares (edge tiles truncated so
the cover is exact), the predictor runs once per tile, and the resulting grid
renders as a heatmap: bilinear interpolation between tile centers, a frozen
colormap, and alpha blending over the source photo. Quality grids use the warm
map, distortion grids the CVD-safe one.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .colormaps import DISTORTION_LUT, QUALITY_LUT, apply_lut
from .datamodel import CATEGORIES, ValidationError
from .model import ModelParams, predict

MIN_TILE_SIDE = 16
DEFAULT_ALPHA = 0.8

KIND_QUALITY = "quality"


def distortion_kind(category: str) -> str:
    if category not in CATEGORIES:
        raise ValidationError(f"unknown category {category!r}")
    return f"distortion:{category}"


class MapError(RuntimeError):
    """Prediction failed inside map assembly; message names the tile."""


@dataclass(frozen=True)
class SpatialMap:
    grid: np.ndarray  # rows x cols, row-major tile order
    tile_size_px: int
    kind: str
    source_size: tuple[int, int]  # (width, height)

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=np.float64)
        object.__setattr__(self, "grid", grid)
        w, h = self.source_size
        rows = math.ceil(h / self.tile_size_px)
        cols = math.ceil(w / self.tile_size_px)
        if grid.shape != (rows, cols):
            raise ValidationError(
                f"grid shape {grid.shape} does not match ceil({h}/{self.tile_size_px})"
                f" x ceil({w}/{self.tile_size_px}) = ({rows}, {cols})"
            )
        lo, hi = (0.0, 100.0) if self.kind == KIND_QUALITY else (0.0, 1.0)
        if np.any(grid < lo) or np.any(grid > hi):
            raise ValidationError(f"{self.kind} grid values outside [{lo}, {hi}]")

    def normalized(self) -> np.ndarray:
        """Grid scaled to [0, 1] regardless of kind."""
        return self.grid / 100.0 if self.kind == KIND_QUALITY else self.grid


def tile(width: int, height: int, n: int) -> list[tuple[int, int, int, int]]:
    """Row-major (left, top, w, h) rectangles exactly covering the image."""
    if n < MIN_TILE_SIDE:
        raise ValidationError(f"tile size must be >= {MIN_TILE_SIDE}, got {n}")
    if width < n or height < n:
        raise ValidationError(
            f"image {width}x{height} smaller than tile size {n}"
        )
    rects = []
    for top in range(0, height, n):
        for left in range(0, width, n):
            rects.append((left, top, min(n, width - left), min(n, height - top)))
    return rects


def _predict_grids(params: ModelParams, pixels: np.ndarray, n: int,
                   ) -> tuple[np.ndarray, np.ndarray]:
    """(quality grid, rows x cols x 7 distortion grid) with edge fill."""
    arr = np.asarray(pixels)
    h, w = arr.shape[:2]
    rects = tile(w, h, n)
    rows = math.ceil(h / n)
    cols = math.ceil(w / n)
    quality = np.full((rows, cols), np.nan)
    dist = np.full((rows, cols, len(CATEGORIES)), np.nan)
    for idx, (left, top, tw, th) in enumerate(rects):
        r, c = divmod(idx, cols)
        if tw < MIN_TILE_SIDE or th < MIN_TILE_SIDE:
            continue  # filled from the nearest predicted tile below
        try:
            q, d = predict(params, arr, region=(left, top, tw, th))
        except Exception as exc:
            raise MapError(f"tile {idx} at {(left, top, tw, th)}: {exc}") from exc
        quality[r, c] = q
        dist[r, c] = d

    valid = np.argwhere(~np.isnan(quality))
    if valid.size == 0:
        raise MapError("no tile was large enough to predict on")
    for r in range(rows):
        for c in range(cols):
            if not np.isnan(quality[r, c]):
                continue
            d2 = (valid[:, 0] - r) ** 2 + (valid[:, 1] - c) ** 2
            vr, vc = valid[int(np.argmin(d2))]  # argmin ties: raster order
            quality[r, c] = quality[vr, vc]
            dist[r, c] = dist[vr, vc]
    return quality, dist


def quality_map(params: ModelParams, pixels: np.ndarray, n: int) -> SpatialMap:
    arr = np.asarray(pixels)
    h, w = arr.shape[:2]
    quality, _ = _predict_grids(params, arr, n)
    return SpatialMap(grid=quality, tile_size_px=n, kind=KIND_QUALITY,
                      source_size=(w, h))


def distortion_maps(params: ModelParams, pixels: np.ndarray, n: int,
                    ) -> dict[str, SpatialMap]:
    arr = np.asarray(pixels)
    h, w = arr.shape[:2]
    _, dist = _predict_grids(params, arr, n)
    return {
        cat: SpatialMap(grid=dist[:, :, ci], tile_size_px=n,
                        kind=distortion_kind(cat), source_size=(w, h))
        for ci, cat in enumerate(CATEGORIES)
    }


def all_maps(params: ModelParams, pixels: np.ndarray, n: int,
             ) -> tuple[SpatialMap, dict[str, SpatialMap]]:
    """Quality and all seven distortion maps from one prediction pass."""
    arr = np.asarray(pixels)
    h, w = arr.shape[:2]
    quality, dist = _predict_grids(params, arr, n)
    qmap = SpatialMap(grid=quality, tile_size_px=n, kind=KIND_QUALITY,
                      source_size=(w, h))
    dmaps = {
        cat: SpatialMap(grid=dist[:, :, ci], tile_size_px=n,
                        kind=distortion_kind(cat), source_size=(w, h))
        for ci, cat in enumerate(CATEGORIES)
    }
    return qmap, dmaps


def _tile_centers(extent: int, n: int, count: int) -> np.ndarray:
    """Center coordinate of each (possibly truncated) tile along one axis."""
    centers = []
    for k in range(count):
        start = k * n
        size = min(n, extent - start)
        centers.append(start + (size - 1) / 2.0)
    return np.asarray(centers, dtype=np.float64)


def upsample_grid(spatial_map: SpatialMap) -> np.ndarray:
    """Bilinear field over the full image from tile-center samples.

    Pixels outside the outer centers clamp to the edge value, so the
    interpolated field never leaves [grid min, grid max].
    """
    w, h = spatial_map.source_size
    grid = spatial_map.grid
    rows, cols = grid.shape
    cy = _tile_centers(h, spatial_map.tile_size_px, rows)
    cx = _tile_centers(w, spatial_map.tile_size_px, cols)

    def axis_weights(coords: np.ndarray, centers: np.ndarray):
        idx = np.searchsorted(centers, coords, side="right") - 1
        idx = np.clip(idx, 0, len(centers) - 2) if len(centers) > 1 else np.zeros_like(idx)
        if len(centers) == 1:
            return np.zeros(len(coords), dtype=np.intp), np.zeros(len(coords))
        span = centers[idx + 1] - centers[idx]
        t = (coords - centers[idx]) / span
        return idx.astype(np.intp), np.clip(t, 0.0, 1.0)

    ys = np.arange(h, dtype=np.float64)
    xs = np.arange(w, dtype=np.float64)
    ry, ty = axis_weights(ys, cy)
    rx, tx = axis_weights(xs, cx)
    r1 = np.minimum(ry + 1, rows - 1)
    c1 = np.minimum(rx + 1, cols - 1)

    ty = ty[:, None]
    tx = tx[None, :]
    g00 = grid[np.ix_(ry, rx)]
    g01 = grid[np.ix_(ry, c1)]
    g10 = grid[np.ix_(r1, rx)]
    g11 = grid[np.ix_(r1, c1)]
    return ((1 - ty) * (1 - tx) * g00 + (1 - ty) * tx * g01
            + ty * (1 - tx) * g10 + ty * tx * g11)


def render(spatial_map: SpatialMap, pixels: np.ndarray,
           alpha: float = DEFAULT_ALPHA) -> np.ndarray:
    """Blend the interpolated heatmap over the photo; returns 8-bit RGB.

    alpha 0 returns the input image byte-identical; alpha 1 is pure heatmap.
    """
    arr = np.asarray(pixels)
    if arr.ndim == 2:
        arr = np.stack([arr] * 3, axis=2)
    h, w = arr.shape[:2]
    if (w, h) != spatial_map.source_size:
        raise ValidationError(
            f"map was built for {spatial_map.source_size}, image is {(w, h)}"
        )
    if not 0.0 <= alpha <= 1.0:
        raise ValidationError(f"alpha must be in [0, 1], got {alpha}")
    field = upsample_grid(spatial_map)
    if spatial_map.kind == KIND_QUALITY:
        colors = apply_lut(field / 100.0, QUALITY_LUT)
    else:
        colors = apply_lut(field, DISTORTION_LUT)
    blended = alpha * colors.astype(np.float64) + (1.0 - alpha) * arr.astype(np.float64)
    return np.clip(np.rint(blended), 0, 255).astype(np.uint8)


def save_map_json(spatial_map: SpatialMap, path: str | Path) -> None:
    """Sidecar with the raw grid so renders can be reproduced."""
    obj = {
        "kind": spatial_map.kind,
        "N": spatial_map.tile_size_px,
        "width": spatial_map.source_size[0],
        "height": spatial_map.source_size[1],
        "grid": spatial_map.grid.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(obj, fh)


def load_map_json(path: str | Path) -> SpatialMap:
    with open(path) as fh:
        obj = json.load(fh)
    return SpatialMap(grid=np.asarray(obj["grid"], dtype=np.float64),
                      tile_size_px=int(obj["N"]), kind=obj["kind"],
                      source_size=(int(obj["width"]), int(obj["height"])))
