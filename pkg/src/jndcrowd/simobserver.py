"""Synthetic observers for desk-scale verification.

A scenario fixes, per image, a true threshold level and the planted
artifact-region centers; a population of observer models then drives the
study protocol exactly as live participants would (quiz, HIT assembly,
per-HIT gold grading), producing the same JSON-lines response log the
server emits. Everything is deterministic under a fixed seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import protocol
from .errors import DomainError
from .eventlog import response_event
from .goldgen import validate_gold_response
from .protocol import (
    QUIZ_ITEMS,
    Response,
    StudyImage,
    StudyState,
    WorkerRecord,
    WorkerState,
)

RELIABLE = "reliable"
SPAMMER = "spammer"


@dataclass
class ObserverModel:
    observer_id: str
    reliability: str = RELIABLE
    threshold_bias: float = 0.0
    threshold_noise_std: float = 0.0
    click_jitter_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.reliability not in (RELIABLE, SPAMMER):
            raise DomainError(f"unknown reliability {self.reliability!r}")
        if self.threshold_noise_std < 0 or self.click_jitter_std < 0:
            raise DomainError("noise standard deviations must be >= 0")


@dataclass
class ScenarioImage:
    image_id: str
    true_level: int
    centers: list  # (x, y) strongest first
    width: int
    height: int
    codec: str = "jpeg"

    def __post_init__(self):
        if not 5 <= self.true_level <= 95:
            raise DomainError(f"true level {self.true_level} outside [5, 95]")


@dataclass
class GroundTruthScenario:
    images: list  # ScenarioImage
    population: list  # ObserverModel

    def to_dict(self) -> dict:
        return {
            "images": [
                {
                    "image_id": im.image_id,
                    "true_level": im.true_level,
                    "centers": [list(c) for c in im.centers],
                    "width": im.width,
                    "height": im.height,
                    "codec": im.codec,
                }
                for im in self.images
            ],
            "population": [
                {
                    "observer_id": ob.observer_id,
                    "reliability": ob.reliability,
                    "threshold_bias": ob.threshold_bias,
                    "threshold_noise_std": ob.threshold_noise_std,
                    "click_jitter_std": ob.click_jitter_std,
                    "seed": ob.seed,
                }
                for ob in self.population
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GroundTruthScenario":
        return cls(
            images=[
                ScenarioImage(
                    image_id=im["image_id"],
                    true_level=im["true_level"],
                    centers=[tuple(c) for c in im["centers"]],
                    width=im["width"],
                    height=im["height"],
                    codec=im.get("codec", "jpeg"),
                )
                for im in data["images"]
            ],
            population=[ObserverModel(**ob) for ob in data["population"]],
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "GroundTruthScenario":
        return cls.from_dict(json.loads(Path(path).read_text()))


def simulate_pjnd(model: ObserverModel, true_level: int,
                  rng: np.random.Generator) -> int:
    """Reliable: true level plus bias plus Gaussian noise, rounded and
    clamped to [0, 100]. Spammer: uniform over [0, 100]."""
    if model.reliability == SPAMMER:
        return int(rng.integers(0, 101))
    raw = true_level + model.threshold_bias + rng.normal(0.0, model.threshold_noise_std) \
        if model.threshold_noise_std > 0 else true_level + model.threshold_bias
    return int(np.clip(round(raw), 0, 100))


def simulate_clicks(model: ObserverModel, centers, width: int, height: int,
                    rng: np.random.Generator):
    """Reliable: the three strongest centers, jittered and clamped
    in-bounds. Spammer: three uniform random points."""
    if model.reliability == SPAMMER:
        return [
            (float(rng.uniform(0, width)), float(rng.uniform(0, height)))
            for _ in range(3)
        ]
    if len(centers) < 3:
        raise DomainError(f"need at least 3 centers, got {len(centers)}")
    clicks = []
    for x, y in centers[:3]:
        jx = rng.normal(0.0, model.click_jitter_std) if model.click_jitter_std > 0 else 0.0
        jy = rng.normal(0.0, model.click_jitter_std) if model.click_jitter_std > 0 else 0.0
        clicks.append((
            float(np.clip(x + jx, 0, width - 1)),
            float(np.clip(y + jy, 0, height - 1)),
        ))
    return clicks


@dataclass
class SimulationResult:
    events: list  # response/quiz/hit events, replayable JSON objects
    workers: dict  # worker_id -> WorkerRecord
    quiz_passed: set
    image_dims: dict  # image_id -> (width, height)
    codec_by_image: dict

    @property
    def rejected_workers(self) -> set:
        return {
            w for w, rec in self.workers.items()
            if rec.state == WorkerState.REJECTED
        }

    def spammer_rejection_rate(self, scenario: GroundTruthScenario) -> float:
        """Fraction of spammers stopped by quality control: failed the quiz
        or got rejected by the running-accuracy check."""
        spammers = [ob.observer_id for ob in scenario.population
                    if ob.reliability == SPAMMER]
        if not spammers:
            return 1.0
        stopped = sum(
            1 for w in spammers
            if w not in self.quiz_passed
            or self.workers[w].state == WorkerState.REJECTED
        )
        return stopped / len(spammers)


def _respond_to_gold(model, spec, rng, clock, worker_id, hit_id) -> Response:
    level = simulate_pjnd(model, int(round(spec.sigmoid_center)), rng)
    # gold frames share the study image geometry; centers sit well inside
    width = int(max(x for x, _ in spec.centers)) + 200
    height = int(max(y for _, y in spec.centers)) + 200
    clicks = simulate_clicks(model, spec.centers, width, height, rng)
    return Response(
        worker_id=worker_id, hit_id=hit_id, image_ref=spec.gold_id,
        level=level, clicks=clicks,
        started_at=clock, submitted_at=clock + 1.0,
    )


def run_simulated_study(scenario: GroundTruthScenario, gold_specs,
                        seed: int = 0,
                        target_responses: int = protocol.DEFAULT_TARGET_RESPONSES,
                        overshoot: int = protocol.DEFAULT_OVERSHOOT) -> SimulationResult:
    """Drive the full protocol with the scenario's population and emit a
    replayable event log."""
    if len(gold_specs) < QUIZ_ITEMS:
        raise DomainError(f"need at least {QUIZ_ITEMS} gold items for the quiz")
    rng = np.random.default_rng(seed)
    quiz_specs = list(gold_specs)[:QUIZ_ITEMS]
    specs_by_image = {s.gold_id: s for s in gold_specs}

    state = StudyState(
        study_images=[
            StudyImage(image_id=im.image_id, codec=im.codec) for im in scenario.images
        ],
        gold_specs=list(gold_specs),
        target_responses=target_responses,
        overshoot=overshoot,
    )
    images_by_id = {im.image_id: im for im in scenario.images}

    events = []
    workers: dict[str, WorkerRecord] = {}
    observer_rng = {
        ob.observer_id: np.random.default_rng([seed, ob.seed, i])
        for i, ob in enumerate(scenario.population)
    }
    clock = 0.0
    quiz_passed = set()

    # qualification: every observer takes the fixed 10-item quiz
    for ob in scenario.population:
        worker = WorkerRecord(worker_id=ob.observer_id,
                              state=WorkerState.IN_QUALIFICATION)
        workers[ob.observer_id] = worker
        wrng = observer_rng[ob.observer_id]
        responses = []
        for spec in quiz_specs:
            clock += 1.0
            resp = _respond_to_gold(ob, spec, wrng, clock, ob.observer_id, "quiz")
            responses.append(resp)
            events.append(response_event(
                worker_id=resp.worker_id, hit_id="quiz", image_ref=resp.image_ref,
                level=resp.level, clicks=resp.clicks,
                started_at=resp.started_at, submitted_at=resp.submitted_at,
                is_gold=True,
            ) | {"type": "quiz_response"})
        result = protocol.grade_quiz(responses, specs_by_image, ob.observer_id)
        events.append({
            "type": "quiz_result", "worker_id": ob.observer_id,
            "a": result.a, "b": result.b, "c": result.c,
            "accuracy": result.accuracy, "passed": result.passed,
        })
        if result.passed:
            worker.transition(WorkerState.QUALIFIED)
            quiz_passed.add(ob.observer_id)

    # study: round-robin over qualified workers until no HIT can be assigned
    models = {ob.observer_id: ob for ob in scenario.population}
    active = [w for w in workers if workers[w].state == WorkerState.QUALIFIED]
    progress = True
    while progress:
        progress = False
        for worker_id in active:
            worker = workers[worker_id]
            if worker.state != WorkerState.QUALIFIED:
                continue
            try:
                hit = state.assemble_hit(worker_id, rng)
            except DomainError:
                continue
            progress = True
            model = models[worker_id]
            wrng = observer_rng[worker_id]
            gold_validation = None
            for item in hit.items:
                clock += 1.0
                if item.is_gold:
                    spec = specs_by_image[item.image_ref]
                    resp = _respond_to_gold(model, spec, wrng, clock,
                                            worker_id, hit.hit_id)
                    gold_validation = validate_gold_response(resp, spec)
                    events.append(response_event(
                        worker_id=worker_id, hit_id=hit.hit_id,
                        image_ref=item.image_ref, level=resp.level,
                        clicks=resp.clicks, started_at=resp.started_at,
                        submitted_at=resp.submitted_at,
                        template_id=hit.template_id, is_gold=True,
                        gold={
                            "pjnd_ok": gold_validation.pjnd_ok,
                            "hits": gold_validation.hits,
                            "correct": gold_validation.correct,
                        },
                    ))
                else:
                    image = images_by_id[item.image_ref]
                    level = simulate_pjnd(model, image.true_level, wrng)
                    clicks = simulate_clicks(model, image.centers,
                                             image.width, image.height, wrng)
                    events.append(response_event(
                        worker_id=worker_id, hit_id=hit.hit_id,
                        image_ref=item.image_ref, level=level, clicks=clicks,
                        started_at=clock, submitted_at=clock + 1.0,
                        template_id=hit.template_id,
                    ))
            state.complete_hit(hit.hit_id)
            protocol.on_study_hit_completed(worker, gold_validation)
            events.append({
                "type": "hit_completed", "worker_id": worker_id,
                "hit_id": hit.hit_id, "template_id": hit.template_id,
                "state": worker.state.value,
                "hits_completed": worker.study_hits_completed,
            })

    return SimulationResult(
        events=events,
        workers=workers,
        quiz_passed=quiz_passed,
        image_dims={im.image_id: (im.width, im.height) for im in scenario.images},
        codec_by_image={im.image_id: im.codec for im in scenario.images},
    )


def make_scenario(n_images: int, n_observers: int, seed: int = 0,
                  width: int = 256, height: int = 256,
                  spammer_fraction: float = 0.10,
                  marginal_fraction: float = 0.0,
                  noise_std: float = 3.0, jitter_std: float = 10.0,
                  marginal_noise_std: float = 8.0,
                  n_centers: int = 3, codec: str = "jpeg") -> GroundTruthScenario:
    """Random but reproducible scenario: per-image true level in [5, 95],
    well-separated region centers, and a population of reliable observers
    with an optional spammer share and an optional "marginal" share whose
    threshold noise makes them borderline on the running-accuracy check."""
    rng = np.random.default_rng(seed)
    images = []
    margin = 60
    min_sep = 72.0  # > 2 * region sigma, keeps regions distinct
    for i in range(n_images):
        centers = []
        while len(centers) < n_centers:
            x = float(rng.uniform(margin, width - margin))
            y = float(rng.uniform(margin, height - margin))
            if all(np.hypot(x - cx, y - cy) >= min_sep for cx, cy in centers):
                centers.append((x, y))
        images.append(ScenarioImage(
            image_id=f"img{i:04d}",
            true_level=int(rng.integers(10, 91)),
            centers=centers,
            width=width, height=height, codec=codec,
        ))
    population = []
    n_spammers = int(round(spammer_fraction * n_observers))
    n_marginal = int(round(marginal_fraction * n_observers))
    for i in range(n_observers):
        if i < n_spammers:
            reliability, std, jitter = SPAMMER, 0.0, 0.0
        elif i < n_spammers + n_marginal:
            reliability, std, jitter = RELIABLE, marginal_noise_std, jitter_std
        else:
            reliability, std, jitter = RELIABLE, noise_std, jitter_std
        population.append(ObserverModel(
            observer_id=f"w{i:03d}",
            reliability=reliability,
            threshold_bias=0.0,
            threshold_noise_std=std,
            click_jitter_std=jitter,
            seed=int(rng.integers(2**31)),
        ))
    return GroundTruthScenario(images=images, population=population)
