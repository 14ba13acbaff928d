#!/usr/bin/env python3
"""End-to-end synthetic-observer experiment.

Generates a ground-truth scenario, runs the full crowd protocol with
simulated observers, applies the quality-control pipeline, and reports how
well the aggregated thresholds recover the planted truth.
"""

import argparse
import json
from pathlib import Path

import numpy as np

from jndcrowd import qc
from jndcrowd.eventlog import write_events
from jndcrowd.goldgen import draw_gold_spec
from jndcrowd.imaging import Codec
from jndcrowd.simobserver import make_scenario, run_simulated_study


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n-images", type=int, default=300)
    parser.add_argument("--n-observers", type=int, default=150)
    parser.add_argument("--target-responses", type=int, default=50)
    parser.add_argument("--spammer-fraction", type=float, default=0.10)
    parser.add_argument("--marginal-fraction", type=float, default=0.10)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--out", type=Path, default=Path("out/sim"))
    args = parser.parse_args()

    scenario = make_scenario(
        n_images=args.n_images, n_observers=args.n_observers, seed=args.seed,
        spammer_fraction=args.spammer_fraction,
        marginal_fraction=args.marginal_fraction,
    )
    gen = np.random.default_rng(args.seed + 1)
    specs = []
    for i in range(25):
        centers = [(float(gen.uniform(70, 186)), float(gen.uniform(70, 186)))
                   for _ in range(3)]
        specs.append(draw_gold_spec(
            gen, f"gs{i:02d}", Codec.JPEG, centers,
            pilot_mean_pjnd=float(gen.uniform(30, 70)),
        ))

    result = run_simulated_study(scenario, specs, seed=args.seed + 2,
                                 target_responses=args.target_responses)
    responses, report = qc.run_qc(result.events, result.rejected_workers)
    annotations = qc.aggregate(
        responses,
        image_dims={im.image_id: (im.width, im.height) for im in scenario.images},
        build_maps=False,
    )

    truth = {im.image_id: im.true_level for im in scenario.images}
    errors = [a.mean_pjnd - truth[a.image_id] for a in annotations]
    within2 = sum(abs(e) <= 2 for e in errors) / len(errors)

    args.out.mkdir(parents=True, exist_ok=True)
    scenario.save(args.out / "scenario.json")
    write_events(args.out / "log.jsonl", result.events)
    summary = {
        "qc": report.to_dict(),
        "n_images_recovered": len(annotations),
        "mean_abs_error": float(np.mean(np.abs(errors))),
        "fraction_within_2_levels": within2,
        "spammer_rejection_rate": result.spammer_rejection_rate(scenario),
        "mean_samples_per_image": float(np.mean(
            [len(a.pjnd_samples) for a in annotations])),
    }
    (args.out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary, indent=2))


if __name__ == "__main__":
    main()
