"""Study design and worker lifecycle: image sampling, HIT assembly,
qualification flow, accuracy tracking, and state transitions.

A HIT is one work unit of 11 images: 10 distinct study images plus one
attention-check ("gold") item at a random position.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DomainError, ResponseValidationError, StateError
from .goldgen import GoldSpec, GoldValidation, validate_gold_response

HIT_STUDY_IMAGES = 10
HIT_SIZE = 11
ACCURACY_THRESHOLD = 0.70
MAX_STUDY_HITS = 20
ACCURACY_CHECK_AFTER = 10
TRAINING_ITEMS = 5
QUIZ_ITEMS = 10
DEFAULT_TARGET_RESPONSES = 50
DEFAULT_OVERSHOOT = 2


class WorkerState(str, Enum):
    NEW = "new"
    IN_QUALIFICATION = "in_qualification"
    QUALIFIED = "qualified"
    REVOKED = "revoked"
    REJECTED = "rejected"


_ALLOWED_TRANSITIONS = {
    WorkerState.NEW: {WorkerState.IN_QUALIFICATION},
    WorkerState.IN_QUALIFICATION: {WorkerState.QUALIFIED},
    WorkerState.QUALIFIED: {WorkerState.REVOKED, WorkerState.REJECTED},
    WorkerState.REVOKED: set(),
    WorkerState.REJECTED: set(),
}


@dataclass
class GoldStats:
    """Running tallies over gold images seen in study HITs: a = seen,
    b = correct thresholds, c = correct locations."""

    a: int = 0
    b: int = 0
    c: int = 0


@dataclass
class Calibration:
    ppi: float = 0.0
    confirmed_distance: bool = False


@dataclass
class WorkerRecord:
    worker_id: str
    state: WorkerState = WorkerState.NEW
    study_hits_completed: int = 0
    gold_stats: GoldStats = field(default_factory=GoldStats)
    calibration: Calibration = field(default_factory=Calibration)

    def transition(self, new_state: WorkerState) -> None:
        if new_state not in _ALLOWED_TRANSITIONS[self.state]:
            raise StateError(f"illegal transition {self.state.value} -> {new_state.value}")
        self.state = new_state


@dataclass
class HitItem:
    image_ref: str
    codec: str
    is_gold: bool = False


@dataclass
class HIT:
    hit_id: str
    items: list  # 11 HitItems, exactly one gold
    template_id: int = -1

    def __post_init__(self):
        if len(self.items) != HIT_SIZE:
            raise DomainError(f"a HIT has {HIT_SIZE} items, got {len(self.items)}")
        golds = [it for it in self.items if it.is_gold]
        if len(golds) != 1:
            raise DomainError(f"a HIT has exactly one gold item, got {len(golds)}")
        study = [it.image_ref for it in self.items if not it.is_gold]
        if len(set(study)) != HIT_STUDY_IMAGES:
            raise DomainError("study images within a HIT must be pairwise distinct")

    @property
    def gold_item(self) -> HitItem:
        return next(it for it in self.items if it.is_gold)


@dataclass
class Response:
    worker_id: str
    hit_id: str
    image_ref: str
    level: int
    clicks: list  # exactly three (x, y)
    started_at: float = 0.0
    submitted_at: float = 0.0

    def __post_init__(self):
        if not 0 <= self.level <= 100:
            raise ResponseValidationError(f"level {self.level} outside [0, 100]")
        if len(self.clicks) != 3:
            raise ResponseValidationError(
                f"exactly 3 clicks required, got {len(self.clicks)}"
            )
        if self.submitted_at < self.started_at:
            raise ResponseValidationError("submitted_at precedes started_at")
        self.clicks = [(float(x), float(y)) for x, y in self.clicks]


def sample_study_images(image_ids_sorted_by_mean_pjnd, n_pick: int):
    """Indices ceil(n*i/n_pick), i = 0..n_pick-1, over a list sorted
    ascending by mean threshold; spreads picks over the threshold range."""
    n = len(image_ids_sorted_by_mean_pjnd)
    if n_pick > n:
        raise DomainError(f"cannot pick {n_pick} from {n} images")
    if n_pick < 1:
        raise DomainError("n_pick must be positive")
    indices = sorted({-(-n * i // n_pick) for i in range(n_pick)})
    return indices


def select_gold_candidates(images, n_bins: int = 25):
    """One low-variance image per threshold bin.

    ``images`` is a list of (image_id, pjnd_samples). Images are sorted
    ascending by mean threshold, split into n_bins contiguous bins (the
    first n mod n_bins bins get one extra), and the minimum-variance image
    of each bin is returned; ties break toward the lower image id.
    """
    n = len(images)
    if n < n_bins:
        raise DomainError(f"need at least {n_bins} images, got {n}")
    for image_id, samples in images:
        if len(samples) < 2:
            raise DomainError(f"image {image_id} has fewer than 2 threshold samples")
    ordered = sorted(images, key=lambda im: (statistics.fmean(im[1]), im[0]))
    base, extra = divmod(n, n_bins)
    chosen = []
    pos = 0
    for b in range(n_bins):
        size = base + (1 if b < extra else 0)
        bin_images = ordered[pos:pos + size]
        pos += size
        best = min(bin_images, key=lambda im: (statistics.variance(im[1]), im[0]))
        chosen.append(best[0])
    return chosen


def accuracy(a: int, b: int, c: int) -> float:
    """(b + c) / (2a): fraction of correct threshold and location answers
    over a graded gold items."""
    if a < 1:
        raise DomainError(f"a must be >= 1, got {a}")
    if not (0 <= b <= a and 0 <= c <= a):
        raise DomainError(f"need 0 <= b, c <= a; got a={a}, b={b}, c={c}")
    return (b + c) / (2 * a)


@dataclass
class QuizResult:
    worker_id: str
    a: int
    b: int
    c: int
    accuracy: float
    passed: bool


def grade_quiz(responses, specs_by_image, worker_id: str = "") -> QuizResult:
    """Grade the 10-item quiz: b counts in-range thresholds, c counts items
    with at least two correctly clicked regions."""
    if len(responses) != QUIZ_ITEMS:
        raise DomainError(f"quiz has {QUIZ_ITEMS} responses, got {len(responses)}")
    b = c = 0
    for resp in responses:
        spec = specs_by_image[resp.image_ref]
        validation = validate_gold_response(resp, spec)
        b += validation.pjnd_ok
        c += validation.hits >= 2
    acc = accuracy(QUIZ_ITEMS, b, c)
    return QuizResult(
        worker_id=worker_id or (responses[0].worker_id if responses else ""),
        a=QUIZ_ITEMS, b=b, c=c, accuracy=acc,
        passed=acc >= ACCURACY_THRESHOLD,
    )


def on_study_hit_completed(worker: WorkerRecord,
                           gold_validation: GoldValidation) -> WorkerRecord:
    """Fold one completed study HIT into the worker's tallies and apply the
    rejection (cumulative accuracy below 70% at 10+ HITs) and revocation
    (20-HIT cap) rules."""
    if worker.state != WorkerState.QUALIFIED:
        raise StateError(f"worker {worker.worker_id} is {worker.state.value}, not qualified")
    if worker.study_hits_completed >= MAX_STUDY_HITS:
        raise StateError("study HIT cap already reached")
    stats = worker.gold_stats
    stats.a += 1
    stats.b += gold_validation.pjnd_ok
    stats.c += gold_validation.hits >= 2
    worker.study_hits_completed += 1
    if (worker.study_hits_completed >= ACCURACY_CHECK_AFTER
            and accuracy(stats.a, stats.b, stats.c) < ACCURACY_THRESHOLD):
        worker.transition(WorkerState.REJECTED)
    elif worker.study_hits_completed >= MAX_STUDY_HITS:
        worker.transition(WorkerState.REVOKED)
    return worker


@dataclass
class TrainingOutcome:
    advance: bool
    validation: GoldValidation
    gt_range: tuple | None = None  # shown on failure
    show_heatmap: bool = False


def training_step(response, spec: GoldSpec) -> TrainingOutcome:
    """One training attempt: advance on a fully correct answer, otherwise
    hand back the ground truth for display and require a retry.

    The threshold must be acceptable before clicks count at all, mirroring
    the interface gate that locks the click phase until then.
    """
    validation = validate_gold_response(response, spec)
    if validation.correct:
        return TrainingOutcome(advance=True, validation=validation)
    return TrainingOutcome(
        advance=False,
        validation=validation,
        gt_range=spec.pjnd_range,
        show_heatmap=True,
    )


@dataclass
class StudyImage:
    image_id: str
    codec: str
    assignments: int = 0
    completions: int = 0


class StudyState:
    """Assignment bookkeeping for HIT assembly.

    The study pool is partitioned once into fixed 10-image templates;
    workers are assigned the least-served template they have not done yet.
    This realizes "weighted toward images with fewest collected responses"
    exactly, keeps per-template worker groups well defined for HIT-level
    filtering, and never gives a worker the same image twice.
    """

    def __init__(self, study_images, gold_specs,
                 target_responses: int = DEFAULT_TARGET_RESPONSES,
                 overshoot: int = DEFAULT_OVERSHOOT):
        if len(study_images) < HIT_STUDY_IMAGES:
            raise DomainError(
                f"study pool needs at least {HIT_STUDY_IMAGES} images"
            )
        if len(study_images) % HIT_STUDY_IMAGES != 0:
            raise DomainError(
                "study pool size must be a multiple of "
                f"{HIT_STUDY_IMAGES} to partition into templates"
            )
        if not gold_specs:
            raise DomainError("gold pool must be non-empty")
        self.images = {im.image_id: im for im in study_images}
        self.gold_specs = list(gold_specs)
        self.target = target_responses
        self.overshoot = overshoot
        ids = [im.image_id for im in study_images]
        self.templates = [
            ids[i:i + HIT_STUDY_IMAGES] for i in range(0, len(ids), HIT_STUDY_IMAGES)
        ]
        self.template_assignments = [0] * len(self.templates)
        self.template_completions = [0] * len(self.templates)
        self.worker_templates: dict[str, set[int]] = {}
        self._hit_templates: dict[str, int] = {}
        self._hit_counter = 0

    def eligible_templates(self, worker_id: str):
        done = self.worker_templates.get(worker_id, set())
        return [
            t for t in range(len(self.templates))
            if t not in done
            and self.template_completions[t] < self.target
            and self.template_assignments[t] < self.target + self.overshoot
        ]

    def plan_assignment(self, worker_id: str, rng: np.random.Generator):
        """Choose the least-served eligible template, a uniformly drawn gold
        item, and a random gold position without mutating any state.

        Returns (template_id, gold_ref, gold_position, hit_id); raises
        DomainError when the worker has no eligible template left.
        """
        eligible = self.eligible_templates(worker_id)
        if not eligible:
            raise DomainError(f"no eligible HIT template for worker {worker_id}")
        min_assigned = min(self.template_assignments[t] for t in eligible)
        candidates = [t for t in eligible if self.template_assignments[t] == min_assigned]
        template = candidates[int(rng.integers(len(candidates)))]
        gold = self.gold_specs[int(rng.integers(len(self.gold_specs)))]
        gold_pos = int(rng.integers(HIT_SIZE))
        hit_id = f"hit-{self._hit_counter + 1:06d}-{worker_id}"
        return template, gold.gold_id, gold_pos, hit_id

    def apply_assignment(self, worker_id: str, template_id: int, hit_id: str,
                         gold_ref: str, gold_position: int) -> HIT:
        """Commit a planned (or replayed) assignment to the bookkeeping and
        materialize the HIT."""
        gold = next(g for g in self.gold_specs if g.gold_id == gold_ref)
        items = [
            HitItem(image_ref=image_id, codec=self.images[image_id].codec)
            for image_id in self.templates[template_id]
        ]
        items.insert(gold_position,
                     HitItem(image_ref=gold.gold_id, codec=gold.codec.value,
                             is_gold=True))
        self._hit_counter += 1
        hit = HIT(hit_id=hit_id, items=items, template_id=template_id)
        self.template_assignments[template_id] += 1
        for image_id in self.templates[template_id]:
            self.images[image_id].assignments += 1
        self.worker_templates.setdefault(worker_id, set()).add(template_id)
        self._hit_templates[hit.hit_id] = template_id
        return hit

    def assemble_hit(self, worker_id: str, rng: np.random.Generator) -> HIT:
        """Plan and commit an assignment in one step."""
        template, gold_ref, gold_pos, hit_id = self.plan_assignment(worker_id, rng)
        return self.apply_assignment(worker_id, template, hit_id, gold_ref, gold_pos)

    def complete_hit(self, hit_id: str) -> None:
        template = self._hit_templates.pop(hit_id, None)
        if template is None:
            raise DomainError(f"unknown or already completed HIT {hit_id}")
        self.template_completions[template] += 1
        for image_id in self.templates[template]:
            self.images[image_id].completions += 1

    def abandon_hit(self, hit_id: str) -> None:
        template = self._hit_templates.pop(hit_id, None)
        if template is None:
            return
        self.template_assignments[template] -= 1
        for image_id in self.templates[template]:
            self.images[image_id].assignments -= 1
