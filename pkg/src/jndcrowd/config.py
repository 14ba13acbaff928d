"""Study configuration: one TOML or JSON file is the single source of
truth; CLI flags override individual keys."""

from __future__ import annotations

import json

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError


@dataclass
class StudyConfig:
    images: list = field(default_factory=list)  # source image paths or ids
    codecs: list = field(default_factory=lambda: ["jpeg"])
    target_responses: int = 50  # responses collected per image
    overshoot: int = 2  # in-flight assignment allowance past the target
    accuracy_threshold: float = 0.70
    max_study_hits: int = 20
    accuracy_check_after: int = 10
    hit_removal_fraction: float = 0.10
    extreme_lo: int = 5
    extreme_hi: int = 95
    sigma_region: float = 35.0  # px, planted gold region extent
    sigma_blur: float = 35.0  # px, criticality-map blur
    sigmoid_scale: float = 4.0
    gold_center_spread: float = 10.0  # sigmoid center drawn +/- this around pilot mean
    gold_lo_prob: float = 0.25
    gold_hi_prob: float = 0.75
    seed: int = 0
    jpeg_subsampling: str = "4:2:0"
    bpg_encoder: str = ""  # empty: JPEG-only mode
    bpg_decoder: str = ""

    def __post_init__(self):
        checks = [
            (1 <= self.target_responses, "target_responses must be >= 1"),
            (0 <= self.overshoot, "overshoot must be >= 0"),
            (0 < self.accuracy_threshold <= 1, "accuracy_threshold must be in (0, 1]"),
            (1 <= self.accuracy_check_after <= self.max_study_hits,
             "accuracy_check_after must be within the HIT cap"),
            (0 <= self.hit_removal_fraction < 1, "hit_removal_fraction must be in [0, 1)"),
            (0 <= self.extreme_lo <= self.extreme_hi <= 100, "extreme bounds out of order"),
            (self.sigma_region > 0, "sigma_region must be positive"),
            (self.sigma_blur > 0, "sigma_blur must be positive"),
            (self.sigmoid_scale > 0, "sigmoid_scale must be positive"),
            (0 < self.gold_lo_prob <= self.gold_hi_prob < 1,
             "gold acceptance band must satisfy 0 < lo <= hi < 1"),
            (all(c in ("jpeg", "bpg") for c in self.codecs), "codecs must be jpeg/bpg"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)

    @classmethod
    def from_file(cls, path) -> "StudyConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            if path.suffix == ".toml":
                data = tomllib.loads(path.read_text())
            else:
                data = json.loads(path.read_text())
        except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}
