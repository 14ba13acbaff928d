"""Offline analytics: outlier removal, threshold aggregation, dataset
export, and cross-dataset statistics.

The filter pipeline is order-fixed: rejected workers first, then the
per-HIT deviation filter, then the extreme-rating cut. Filters only ever
drop responses; surviving responses are never mutated.
"""

from __future__ import annotations

import json
import math
import statistics
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import critmap
from .errors import DomainError, PipelineError

EXTREME_LO = 5
EXTREME_HI = 95
HIT_REMOVAL_FRACTION = 0.10


def _is_response(event: dict) -> bool:
    return event.get("type") == "response"


def remove_rejected_workers(responses, rejected_worker_ids):
    """Drop every response (study and gold) of a rejected worker."""
    rejected = set(rejected_worker_ids)
    kept = [r for r in responses if r["worker_id"] not in rejected]
    return kept, len(responses) - len(kept)


def hit_level_outlier_removal(responses, fraction: float = HIT_REMOVAL_FRACTION):
    """Per HIT template, drop the ceil(fraction * W) workers whose levels
    deviate most from that template's per-image means.

    The deviation score is the worker's mean absolute deviation from the
    per-image mean levels across the template's images, computed once
    (no recomputation after removals); ties break toward the higher
    worker id.
    """
    if not 0 <= fraction < 1:
        raise DomainError(f"fraction must be in [0, 1), got {fraction}")
    by_template: dict[int, list] = {}
    for r in responses:
        by_template.setdefault(r.get("template_id", -1), []).append(r)

    dropped_keys = set()
    for template_id, group in by_template.items():
        workers = sorted({r["worker_id"] for r in group})
        n_workers = len(workers)
        if n_workers == 0:
            continue
        image_levels: dict[str, list] = {}
        for r in group:
            image_levels.setdefault(r["image_ref"], []).append(r["level"])
        image_means = {im: statistics.fmean(v) for im, v in image_levels.items()}
        scores = []
        for w in workers:
            deviations = [
                abs(r["level"] - image_means[r["image_ref"]])
                for r in group if r["worker_id"] == w
            ]
            scores.append((statistics.fmean(deviations), w))
        n_drop = math.ceil(fraction * n_workers)
        # highest score first; equal scores remove the higher worker id first
        scores.sort(key=lambda sw: (sw[0], sw[1]), reverse=True)
        for _, w in scores[:n_drop]:
            dropped_keys.add((template_id, w))

    kept = [
        r for r in responses
        if (r.get("template_id", -1), r["worker_id"]) not in dropped_keys
    ]
    return kept, len(responses) - len(kept)


def filter_extreme(responses, lo: int = EXTREME_LO, hi: int = EXTREME_HI):
    """Drop responses whose level falls below ``lo`` or exceeds ``hi``
    (both bounds keep); their clicks go with them."""
    kept = [r for r in responses if lo <= r["level"] <= hi]
    return kept, len(responses) - len(kept)


@dataclass
class QcReport:
    responses_in: int
    removed_rejected_workers: int
    removed_hit_level: int
    removed_extreme: int
    responses_out: int

    def to_dict(self) -> dict:
        return {
            "responses_in": self.responses_in,
            "stages": [
                {"stage": "rejected_workers", "removed": self.removed_rejected_workers},
                {"stage": "hit_level", "removed": self.removed_hit_level},
                {"stage": "extreme_ratings", "removed": self.removed_extreme},
            ],
            "responses_out": self.responses_out,
        }


def run_qc(events, rejected_worker_ids, fraction: float = HIT_REMOVAL_FRACTION,
           extreme_lo: int = EXTREME_LO, extreme_hi: int = EXTREME_HI):
    """Full filter pipeline over a raw event list; returns the surviving
    response events and the per-stage accounting report."""
    responses = [e for e in events if _is_response(e)]
    n_in = len(responses)
    responses, n_rejected = remove_rejected_workers(responses, rejected_worker_ids)
    responses, n_hit = hit_level_outlier_removal(responses, fraction)
    responses, n_extreme = filter_extreme(responses, extreme_lo, extreme_hi)
    report = QcReport(
        responses_in=n_in,
        removed_rejected_workers=n_rejected,
        removed_hit_level=n_hit,
        removed_extreme=n_extreme,
        responses_out=len(responses),
    )
    return responses, report


def derive_worker_states(events, threshold: float = 0.70,
                         check_after: int = 10, hit_cap: int = 20) -> dict:
    """Final worker lifecycle states reconstructed from the response log.

    Folds the per-HIT gold validations in log order through the same
    rejection/revocation rules the live protocol applies, so offline runs
    need no separate worker-state file.
    """
    tallies: dict[str, dict] = {}
    states: dict[str, str] = {}
    for e in events:
        if e.get("type") != "response" or not e.get("is_gold"):
            continue
        if e.get("template_id", -1) < 0:  # quiz/training golds do not count
            continue
        w = e["worker_id"]
        if states.get(w) in ("rejected", "revoked"):
            continue
        t = tallies.setdefault(w, {"a": 0, "b": 0, "c": 0})
        gold = e.get("gold") or {}
        t["a"] += 1
        t["b"] += bool(gold.get("pjnd_ok"))
        t["c"] += gold.get("hits", 0) >= 2
        states[w] = "qualified"
        if t["a"] >= check_after and (t["b"] + t["c"]) / (2 * t["a"]) < threshold:
            states[w] = "rejected"
        elif t["a"] >= hit_cap:
            states[w] = "revoked"
    return states


def rejected_workers_from_events(events) -> set:
    return {
        w for w, state in derive_worker_states(events).items() if state == "rejected"
    }


@dataclass
class ImageAnnotation:
    image_id: str
    codec: str
    pjnd_samples: list
    mean_pjnd: float
    std_pjnd: float | None  # None for a single sample
    clicks: critmap.ClickSet
    map_values: np.ndarray | None = None


def aggregate(responses, image_dims, sigma_blur: float = critmap.DEFAULT_SIGMA_BLUR,
              codec_by_image: dict | None = None, build_maps: bool = True):
    """Per-image statistics and criticality maps over surviving study
    responses. Gold responses measure workers, not images, and are skipped.

    ``image_dims`` maps image id to (width, height). Images without
    surviving samples are simply absent from the result.
    """
    by_image: dict[str, list] = {}
    for r in responses:
        if r.get("is_gold"):
            continue
        by_image.setdefault(r["image_ref"], []).append(r)

    annotations = []
    for image_id in sorted(by_image):
        group = by_image[image_id]
        samples = [r["level"] for r in group]
        clicks = critmap.ClickSet(
            image_id=image_id,
            clicks=[(x, y, r["worker_id"]) for r in group for x, y in r["clicks"]],
        )
        width, height = image_dims[image_id]
        map_values = None
        if build_maps:
            map_values = critmap.aggregate_clicks_to_map(clicks, sigma_blur, width, height)
        annotations.append(ImageAnnotation(
            image_id=image_id,
            codec=(codec_by_image or {}).get(image_id, "jpeg"),
            pjnd_samples=samples,
            mean_pjnd=statistics.fmean(samples),
            std_pjnd=statistics.stdev(samples) if len(samples) >= 2 else None,
            clicks=clicks,
            map_values=map_values,
        ))
    return annotations


def _midranks(x: np.ndarray) -> np.ndarray:
    """Average ranks (1-based) with ties sharing their mid-rank."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(len(x), dtype=np.float64)
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and x[order[j + 1]] == x[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def srocc(x, y) -> float:
    """Spearman rank-order correlation: Pearson correlation of mid-ranks."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 2:
        raise DomainError("srocc needs two equal-length vectors of size >= 2")
    rx, ry = _midranks(x), _midranks(y)
    sx = rx - rx.mean()
    sy = ry - ry.mean()
    denom = math.sqrt(float(sx @ sx) * float(sy @ sy))
    if denom == 0:
        raise DomainError("srocc undefined: an argument has zero rank variance")
    return float(sx @ sy) / denom


def linfit(x, y):
    """Ordinary least squares line; returns (slope, intercept)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 2:
        raise DomainError("linfit needs two equal-length vectors of size >= 2")
    sxx = float(((x - x.mean()) ** 2).sum())
    if sxx == 0:
        raise DomainError("linfit undefined for constant x")
    slope = float(((x - x.mean()) * (y - y.mean())).sum()) / sxx
    intercept = float(y.mean() - slope * x.mean())
    return slope, intercept


def compare_datasets(annotations, reference_means: dict, codec: str) -> dict:
    """Consistency report against a reference per-image mean-threshold
    table: rank correlation, regression of our means on the reference
    means, scatter data, and the mean signed difference."""
    ours = {
        a.image_id: a.mean_pjnd for a in annotations if a.codec == codec
    }
    common = sorted(set(ours) & set(reference_means))
    if not common:
        raise PipelineError(f"no overlapping image ids for codec {codec}")
    ref = [float(reference_means[i]) for i in common]
    own = [ours[i] for i in common]
    slope, intercept = linfit(ref, own)
    return {
        "codec": codec,
        "n_images": len(common),
        "srocc": srocc(ref, own),
        "regression": {"slope": slope, "intercept": intercept},
        "mean_signed_difference": statistics.fmean(
            o - r for o, r in zip(own, ref)
        ),
        "scatter": [
            {"image_id": i, "reference_mean": r, "our_mean": o}
            for i, r, o in zip(common, ref, own)
        ],
    }


def export_dataset(annotations, out_dir) -> dict:
    """Write per-image JSON records and criticality-map PNGs plus a
    manifest with global counts. Re-export over identical inputs is
    byte-identical."""
    if not annotations:
        raise PipelineError("nothing to export: no annotations")
    out = Path(out_dir)
    images_dir = out / "images"
    maps_dir = out / "maps"
    images_dir.mkdir(parents=True, exist_ok=True)
    maps_dir.mkdir(parents=True, exist_ok=True)
    total_samples = 0
    total_clicks = 0
    for ann in sorted(annotations, key=lambda a: a.image_id):
        record = {
            "image_id": ann.image_id,
            "codec": ann.codec,
            "pjnd_samples": ann.pjnd_samples,
            "mean_pjnd": ann.mean_pjnd,
            "std_pjnd": ann.std_pjnd,
            "clicks": [[x, y] for x, y, *_ in ann.clicks.clicks],
        }
        try:
            (images_dir / f"{ann.image_id}.json").write_text(
                json.dumps(record, indent=2, sort_keys=True) + "\n"
            )
            if ann.map_values is not None:
                critmap.save_map_png(ann.map_values, maps_dir / f"{ann.image_id}.png")
        except OSError as exc:
            raise PipelineError(f"export failed for {ann.image_id}: {exc}") from exc
        total_samples += len(ann.pjnd_samples)
        total_clicks += len(ann.clicks.clicks)
    manifest = {
        "n_images": len(annotations),
        "n_pjnd_samples": total_samples,
        "n_clicks": total_clicks,
        "mean_samples_per_image": total_samples / len(annotations),
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )
    return manifest
