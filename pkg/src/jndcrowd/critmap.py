"""Criticality maps: Gaussian-blurred aggregates of reported click
locations, plus mode seeking on the resulting scalar fields.

Maps are stored at full image resolution as float arrays indexed
``values[y, x]``; click coordinates are (x, y) pixel positions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter, maximum_filter

from .errors import DomainError

DEFAULT_SIGMA_BLUR = 35.0  # same spatial scale as the planted gold regions
MERGE_TOL_FACTOR = 0.5  # modes closer than bandwidth/2 are merged
MEAN_SHIFT_TOL = 0.1  # px
MEAN_SHIFT_MAX_ITER = 200


@dataclass
class ClickSet:
    image_id: str
    clicks: list = field(default_factory=list)  # (x, y, worker_id) tuples

    def positions(self) -> np.ndarray:
        if not self.clicks:
            return np.empty((0, 2), dtype=float)
        return np.array([(c[0], c[1]) for c in self.clicks], dtype=float)


def aggregate_clicks_to_map(clicks: ClickSet, sigma_blur: float,
                            width: int, height: int) -> np.ndarray:
    """Unit impulses at click positions, Gaussian-blurred (std sigma_blur,
    kernel truncated at 4 sigma, reflected borders), then max-normalized.

    An empty click set yields the all-zero map.
    """
    if sigma_blur <= 0:
        raise DomainError(f"sigma_blur must be positive, got {sigma_blur}")
    offenders = [
        (x, y) for x, y, *_ in clicks.clicks
        if not (0 <= x < width and 0 <= y < height)
    ]
    if offenders:
        raise DomainError(f"clicks out of bounds for {width}x{height}: {offenders}")
    impulses = np.zeros((height, width), dtype=np.float64)
    for x, y, *_ in clicks.clicks:
        impulses[int(round(y)), int(round(x))] += 1.0
    if not clicks.clicks:
        return impulses
    blurred = gaussian_filter(impulses, sigma=sigma_blur, mode="reflect", truncate=4.0)
    peak = blurred.max()
    if peak > 0:
        blurred /= peak
    return blurred


def _local_maxima(values: np.ndarray) -> np.ndarray:
    """(y, x) positions where the map attains a 8-neighborhood maximum > 0."""
    footprint_max = maximum_filter(values, size=3, mode="reflect")
    mask = (values >= footprint_max) & (values > 0)
    return np.argwhere(mask)


def mean_shift_modes(values: np.ndarray, bandwidth: float) -> list:
    """Mode locations of the map as (x, y) floats, strongest first.

    Every discrete local maximum seeds a flat-kernel mean-shift iteration
    (weights are the map values inside the bandwidth disk); converged points
    closer than bandwidth/2 are merged, keeping the strongest.
    """
    if bandwidth <= 0:
        raise DomainError(f"bandwidth must be positive, got {bandwidth}")
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0 or values.max() <= 0:
        return []
    height, width = values.shape
    seeds = _local_maxima(values)
    converged = []
    for sy, sx in seeds:
        y, x = float(sy), float(sx)
        for _ in range(MEAN_SHIFT_MAX_ITER):
            y0 = max(0, int(np.floor(y - bandwidth)))
            y1 = min(height, int(np.ceil(y + bandwidth)) + 1)
            x0 = max(0, int(np.floor(x - bandwidth)))
            x1 = min(width, int(np.ceil(x + bandwidth)) + 1)
            patch = values[y0:y1, x0:x1]
            yy, xx = np.mgrid[y0:y1, x0:x1]
            inside = (yy - y) ** 2 + (xx - x) ** 2 <= bandwidth**2
            w = np.where(inside, patch, 0.0)
            total = w.sum()
            if total <= 0:
                break
            ny = float((w * yy).sum() / total)
            nx = float((w * xx).sum() / total)
            shift = np.hypot(ny - y, nx - x)
            y, x = ny, nx
            if shift < MEAN_SHIFT_TOL:
                break
        strength = values[int(round(y)), int(round(x))]
        converged.append((x, y, strength))

    converged.sort(key=lambda m: (-m[2], m[0], m[1]))
    merged = []
    merge_tol = bandwidth * MERGE_TOL_FACTOR
    for x, y, strength in converged:
        if all(np.hypot(x - mx, y - my) >= merge_tol for mx, my, _ in merged):
            merged.append((x, y, strength))
    return [(x, y) for x, y, _ in merged]


def window_sum(values: np.ndarray, center, k: int = 7) -> float:
    """Sum of map values in the k x k window centered at (x, y); cells
    outside the map contribute 0."""
    if k % 2 != 1 or k < 1:
        raise DomainError(f"window size must be odd and positive, got {k}")
    values = np.asarray(values)
    height, width = values.shape
    cx, cy = int(round(center[0])), int(round(center[1]))
    half = k // 2
    y0, y1 = max(0, cy - half), min(height, cy + half + 1)
    x0, x1 = max(0, cx - half), min(width, cx + half + 1)
    if y0 >= y1 or x0 >= x1:
        return 0.0
    return float(values[y0:y1, x0:x1].sum())


def save_map_png(values: np.ndarray, path, sidecar: dict | None = None) -> None:
    """Export a map as 16-bit grayscale PNG (value = round(65535 * v)) with
    an optional JSON sidecar."""
    arr = np.asarray(values, dtype=np.float64)
    quantized = np.round(np.clip(arr, 0.0, 1.0) * 65535.0).astype(np.uint16)
    Image.fromarray(quantized).save(path, format="PNG")
    if sidecar is not None:
        Path(str(path) + ".json").write_text(
            json.dumps(sidecar, indent=2, sort_keys=True) + "\n"
        )
