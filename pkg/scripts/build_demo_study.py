#!/usr/bin/env python3
"""Build a small servable demo study from synthetic source images.

Creates random textured sources, encodes their full JPEG distortion
ladders into a cache, synthesizes gold (attention check) items, and writes
the study directory. Afterwards the server can be started with:

    jndcrowd serve --study-dir out/demo/study
"""

import argparse
import json
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from jndcrowd.goldgen import build_gold_ladder, draw_gold_spec
from jndcrowd.imaging import Codec, LadderCache, PillowJpegAdapter, RasterImage, build_ladder


def _textured_image(gen, size):
    """Low-pass filtered noise: compresses non-trivially at every level."""
    base = gen.uniform(0, 255, size=(size, size, 3))
    smooth = gaussian_filter(base, sigma=(3, 3, 0))
    detail = gen.uniform(-40, 40, size=(size, size, 3))
    return RasterImage(np.clip(smooth + detail, 0, 255).astype(np.uint8))


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n-images", type=int, default=10)
    parser.add_argument("--n-gold", type=int, default=15)
    parser.add_argument("--size", type=int, default=256)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", type=Path, default=Path("out/demo"))
    args = parser.parse_args()
    if args.size < 220:
        parser.error("--size must be >= 220: gold regions use sigma 35 px and "
                     "need room for three well-separated centers")

    gen = np.random.default_rng(args.seed)
    adapter = PillowJpegAdapter()
    study_dir = args.out / "study"
    (study_dir / "gold").mkdir(parents=True, exist_ok=True)
    cache = LadderCache(study_dir / "cache")

    images = []
    for i in range(args.n_images):
        image_id = f"im{i:03d}"
        source = _textured_image(gen, args.size)
        cache.store(build_ladder(source, Codec.JPEG, adapter, source_id=image_id))
        images.append({"image_id": image_id, "codec": "jpeg",
                       "width": source.width, "height": source.height})
        print(f"ladder {image_id}: 101 frames cached")

    gold_ids = []
    gold_dims = {}
    for i in range(args.n_gold):
        source_id = f"gold{i:03d}"
        source = _textured_image(gen, args.size)
        # equilateral triangle (side 52 * sqrt(3) = 90 px > 2 sigma apart),
        # randomly rotated and offset from the image center
        cx = args.size / 2 + float(gen.uniform(-20, 20))
        cy = args.size / 2 + float(gen.uniform(-20, 20))
        theta = float(gen.uniform(0, 2 * np.pi))
        centers = [
            (cx + 52 * np.cos(theta + k * 2 * np.pi / 3),
             cy + 52 * np.sin(theta + k * 2 * np.pi / 3))
            for k in range(3)
        ]
        spec = draw_gold_spec(gen, source_id, Codec.JPEG, centers,
                              pilot_mean_pjnd=float(gen.uniform(30, 70)))
        spec.save(study_dir / "gold" / f"{spec.gold_id}.json")
        cache.store(build_gold_ladder(source, Codec.JPEG, adapter, spec))
        gold_ids.append(spec.gold_id)
        gold_dims[source_id] = [args.size, args.size]
        print(f"gold {spec.gold_id}: range {spec.pjnd_range}")

    study = {
        "images": images,
        "training_gold": gold_ids[:5],
        "quiz_gold": gold_ids[5:15],
        "gold_dims": gold_dims,
        "target_responses": 10,
        "overshoot": 2,
        "seed": args.seed,
    }
    (study_dir / "study.json").write_text(json.dumps(study, indent=2) + "\n")
    print(f"study directory ready: {study_dir}")


if __name__ == "__main__":
    main()
