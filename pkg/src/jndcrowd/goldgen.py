"""Synthesis of gold-standard attention-check images.

A gold item plants three stronger-distortion regions into the frames whose
level lies inside a known acceptable threshold range, so that an attentive
participant's answer can be checked both for the chosen level and for the
clicked locations.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import critmap
from .errors import DomainError, ResponseValidationError, SelectionError, SynthesisError
from .imaging import (
    LEVELS,
    Codec,
    CodecAdapter,
    DistortionLadder,
    RasterImage,
    build_ladder,
    check_level,
)

REGION_SIGMA = 35.0  # px, spatial extent of a planted region
HIT_RADIUS_FACTOR = 2.0  # a click within 2*sigma of a center covers it
MIN_CORRECT_HITS = 2
JPEG_MAX_RANGE_HI = 90  # keeps the stronger-level contrast >= 8 levels


def stronger_level(codec: Codec, d: int) -> int:
    """Blend partner level carrying clearly stronger distortion.

    JPEG: ceil(80 + d/5); BPG: min(ceil(1.4 d), 100). Integer arithmetic
    avoids float rounding at exact multiples.
    """
    d = check_level(d)
    if codec == Codec.JPEG:
        return 80 + (-(-d // 5))
    if codec == Codec.BPG:
        return min(-(-7 * d // 5), 100)
    raise DomainError(f"unknown codec {codec!r}")


def blend_weight_field(centers, sigma: float, width: int, height: int) -> np.ndarray:
    """Sum of three isotropic Gaussians (variance sigma^2) at the given
    (x, y) centers, scaled so the grid maximum equals 1."""
    if sigma <= 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    for x, y in centers:
        if not (0 <= x < width and 0 <= y < height):
            raise DomainError(f"center ({x}, {y}) outside {width}x{height}")
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    total = np.zeros((height, width), dtype=np.float64)
    for u, v in centers:
        total += np.exp(-((xx - u) ** 2 + (yy - v) ** 2) / (2.0 * sigma**2))
    return total / total.max()


def synthesize_gold_frame(i_d: RasterImage, i_fd: RasterImage,
                          w: np.ndarray) -> RasterImage:
    """Per-pixel blend round((1-w)*I_d + w*I_fd), rounded half away from
    zero and clamped to [0, 255]."""
    if i_d.pixels.shape != i_fd.pixels.shape:
        raise DomainError("blend inputs have mismatched dimensions")
    if w.shape != i_d.pixels.shape[:2]:
        raise DomainError("weight field does not match image dimensions")
    wf = w[..., None]
    blended = (1.0 - wf) * i_d.pixels.astype(np.float64) + wf * i_fd.pixels.astype(np.float64)
    rounded = np.floor(blended + 0.5)  # half away from zero; values are >= 0
    return RasterImage(np.clip(rounded, 0, 255).astype(np.uint8))


def gold_pjnd_range(d0: float, s: float,
                    lo_prob: float = 0.25, hi_prob: float = 0.75):
    """Integer levels where the detection sigmoid 1/(1+exp(-(d-d0)/s))
    falls within [lo_prob, hi_prob], clamped to [1, 100].

    For the default band this is [ceil(d0 - s ln 3), floor(d0 + s ln 3)].
    """
    if s <= 0:
        raise DomainError(f"sigmoid scale must be positive, got {s}")
    if not 1 <= d0 <= 100:
        raise DomainError(f"sigmoid center {d0} outside [1, 100]")
    if not 0 < lo_prob <= hi_prob < 1:
        raise DomainError("need 0 < lo_prob <= hi_prob < 1")
    lo_real = d0 + s * math.log(lo_prob / (1.0 - lo_prob))
    hi_real = d0 + s * math.log(hi_prob / (1.0 - hi_prob))
    d_lo = max(1, math.ceil(lo_real))
    d_hi = min(100, math.floor(hi_real))
    if d_lo > d_hi:
        raise SynthesisError(
            f"empty acceptance range for center {d0}, scale {s}"
        )
    return d_lo, d_hi


@dataclass
class GoldSpec:
    """Everything needed to rebuild and grade one attention-check item."""

    source_id: str
    codec: Codec
    centers: list  # three (x, y) pixel coordinates
    sigma_region: float = REGION_SIGMA
    sigmoid_center: float = 50.0
    sigmoid_scale: float = 4.0
    pjnd_range: tuple = (1, 100)  # inclusive integer levels
    seed: int | None = None

    def __post_init__(self):
        self.codec = Codec(self.codec)
        if len(self.centers) != 3:
            raise DomainError(f"exactly 3 region centers required, got {len(self.centers)}")
        if self.sigma_region <= 0:
            raise DomainError("sigma_region must be positive")
        lo, hi = self.pjnd_range
        if not 1 <= lo <= hi <= 100:
            raise DomainError(f"invalid acceptance range {self.pjnd_range}")
        self.centers = [(float(x), float(y)) for x, y in self.centers]
        self.pjnd_range = (int(lo), int(hi))

    @property
    def gold_id(self) -> str:
        return f"gold-{self.source_id}"

    def to_dict(self) -> dict:
        return {
            "source_id": self.source_id,
            "codec": self.codec.value,
            "centers": [list(c) for c in self.centers],
            "sigma_region": self.sigma_region,
            "sigmoid_center": self.sigmoid_center,
            "sigmoid_scale": self.sigmoid_scale,
            "pjnd_range": list(self.pjnd_range),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GoldSpec":
        return cls(
            source_id=data["source_id"],
            codec=Codec(data["codec"]),
            centers=[tuple(c) for c in data["centers"]],
            sigma_region=data.get("sigma_region", REGION_SIGMA),
            sigmoid_center=data["sigmoid_center"],
            sigmoid_scale=data["sigmoid_scale"],
            pjnd_range=tuple(data["pjnd_range"]),
            seed=data.get("seed"),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "GoldSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


def draw_gold_spec(rng: np.random.Generator, source_id: str, codec: Codec,
                   centers, pilot_mean_pjnd: float,
                   sigma_region: float = REGION_SIGMA,
                   sigmoid_scale: float = 4.0,
                   center_spread: float = 10.0,
                   lo_prob: float = 0.25, hi_prob: float = 0.75,
                   max_attempts: int = 100) -> GoldSpec:
    """Draw the sigmoid center near the pilot mean threshold and derive the
    acceptance range; JPEG redraws until the range stays at or below level
    90 so the planted regions keep enough contrast."""
    lo_bound = max(10.0, pilot_mean_pjnd - center_spread)
    hi_bound = min(90.0, pilot_mean_pjnd + center_spread)
    if lo_bound > hi_bound:
        lo_bound = hi_bound = min(90.0, max(10.0, pilot_mean_pjnd))
    for _ in range(max_attempts):
        d0 = float(rng.uniform(lo_bound, hi_bound))
        try:
            d_lo, d_hi = gold_pjnd_range(d0, sigmoid_scale, lo_prob, hi_prob)
        except SynthesisError:
            continue
        if codec == Codec.JPEG and d_hi > JPEG_MAX_RANGE_HI:
            continue
        return GoldSpec(
            source_id=source_id,
            codec=codec,
            centers=list(centers),
            sigma_region=sigma_region,
            sigmoid_center=d0,
            sigmoid_scale=sigmoid_scale,
            pjnd_range=(d_lo, d_hi),
        )
    raise SynthesisError(
        f"could not draw a valid acceptance range near {pilot_mean_pjnd} for {source_id}"
    )


def build_gold_ladder(source: RasterImage, codec: Codec, adapter: CodecAdapter,
                      spec: GoldSpec,
                      plain_ladder: DistortionLadder | None = None) -> DistortionLadder:
    """Ladder whose frames inside the acceptance range carry the three
    planted stronger-distortion regions; all other frames are the plain
    ladder frames."""
    ladder = plain_ladder or build_ladder(source, codec, adapter, source_id=spec.source_id)
    d_lo, d_hi = spec.pjnd_range
    w = blend_weight_field(spec.centers, spec.sigma_region, ladder.width, ladder.height)
    frames = list(ladder.frames)
    for d in range(d_lo, d_hi + 1):
        partner = stronger_level(codec, d)
        frames[d] = synthesize_gold_frame(ladder.frames[d], ladder.frames[partner], w)
    return DistortionLadder(
        source_id=spec.gold_id,
        codec=codec,
        frames=frames,
        source_hash=ladder.source_hash,
        adapter_identity=ladder.adapter_identity,
        encoder_options=ladder.encoder_options,
    )


def select_gt_centers(map_values: np.ndarray, bandwidth: float,
                      window: int = 7):
    """The three map modes with the largest window sums, strongest first.

    Raises SelectionError when the map has fewer than three distinct modes.
    """
    modes = critmap.mean_shift_modes(map_values, bandwidth)
    if len(modes) < 3:
        raise SelectionError(
            f"found {len(modes)} modes, need 3; widen the bandwidth or pick another image"
        )
    scored = [
        (critmap.window_sum(map_values, m, k=window), m) for m in modes
    ]
    scored.sort(key=lambda sm: (-sm[0], sm[1][0], sm[1][1]))
    return [m for _, m in scored[:3]]


@dataclass
class GoldValidation:
    pjnd_ok: bool
    hits: int
    correct: bool = field(init=False)

    def __post_init__(self):
        if not 0 <= self.hits <= 3:
            raise DomainError(f"hits must be in 0..3, got {self.hits}")
        self.correct = bool(self.pjnd_ok and self.hits >= MIN_CORRECT_HITS)


def count_region_hits(clicks, centers, sigma: float) -> int:
    """Greedy nearest-eligible matching of clicks to region centers.

    Each click may cover at most one center and each center counts once; a
    pair is eligible when its Euclidean distance is at most 2*sigma. Sorting
    candidate pairs by distance (coordinates as tie-break) makes the result
    invariant under permutations of clicks and of centers.
    """
    radius = HIT_RADIUS_FACTOR * sigma
    pairs = []
    for ki, (cx, cy) in enumerate(clicks):
        for ci, (ux, uy) in enumerate(centers):
            dist = math.hypot(cx - ux, cy - uy)
            if dist <= radius:
                pairs.append((dist, (cx, cy), (ux, uy), ki, ci))
    # ties beyond (distance, coordinates) only occur between interchangeable
    # duplicates, so index order cannot leak into the result
    pairs.sort(key=lambda p: (p[0], p[1], p[2]))
    used_clicks, used_centers = set(), set()
    hits = 0
    for _, _, _, ki, ci in pairs:
        if ki in used_clicks or ci in used_centers:
            continue
        used_clicks.add(ki)
        used_centers.add(ci)
        hits += 1
    return hits


def validate_gold_response(response, spec: GoldSpec) -> GoldValidation:
    """Grade one answer to a gold item: level inside the acceptance range,
    and at least two of the three planted regions clicked."""
    clicks = list(response.clicks)
    if len(clicks) != 3:
        raise ResponseValidationError(f"expected exactly 3 clicks, got {len(clicks)}")
    level = response.level
    if not 0 <= level <= 100:
        raise ResponseValidationError(f"level {level} outside [0, 100]")
    d_lo, d_hi = spec.pjnd_range
    pjnd_ok = d_lo <= level <= d_hi
    hits = count_region_hits(clicks, spec.centers, spec.sigma_region)
    return GoldValidation(pjnd_ok=pjnd_ok, hits=hits)
