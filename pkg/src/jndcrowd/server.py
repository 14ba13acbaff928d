"""HTTP study service: sessions, qualification flow, HIT assignment,
frame delivery, response intake, and append-only persistence.

All state mutations are funneled through a single lock and recorded in the
event log before the response is acknowledged, so a restart can rebuild
identical worker state by replaying the log. Endpoints are versioned under
``/v1``.
"""

from __future__ import annotations

import io
import json
import secrets
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Header, HTTPException, Request
from fastapi.responses import JSONResponse, Response as HttpResponse

from . import protocol, qc
from .critmap import DEFAULT_SIGMA_BLUR
from .errors import DomainError, ResponseValidationError, StateError
from .eventlog import EventLog, response_event
from .goldgen import GoldSpec, blend_weight_field, validate_gold_response
from .imaging import Codec, LadderCache
from .protocol import (
    TRAINING_ITEMS,
    QUIZ_ITEMS,
    Response as StudyResponse,
    StudyImage,
    StudyState,
    WorkerRecord,
    WorkerState,
)

PPI_MIN, PPI_MAX = 50.0, 400.0
SESSION_TTL_S = 6 * 3600


@dataclass
class Session:
    token: str
    worker_id: str
    ppi: float
    confirmed_distance: bool
    created_at: float
    expires_at: float

    def expired(self, now: float) -> bool:
        return now >= self.expires_at


@dataclass
class OpenHit:
    hit_id: str
    worker_id: str
    template_id: int
    items: list  # HitItems, gold flagged server-side only
    responses: dict = field(default_factory=dict)  # image_ref -> response event
    gold_validation: dict | None = None


class StudyServer:
    """All mutable study state plus the event log behind one lock."""

    def __init__(self, study_dir, admin_token: str = "admin",
                 clock=time.time):
        self.study_dir = Path(study_dir)
        self.admin_token = admin_token
        self.clock = clock
        self.lock = threading.RLock()

        study = json.loads((self.study_dir / "study.json").read_text())
        self.image_dims = {}
        self.codec_by_image = {}
        study_images = []
        for im in study["images"]:
            study_images.append(StudyImage(image_id=im["image_id"], codec=im["codec"]))
            self.image_dims[im["image_id"]] = (im["width"], im["height"])
            self.codec_by_image[im["image_id"]] = im["codec"]

        self.gold_specs = {}
        for path in sorted((self.study_dir / "gold").glob("*.json")):
            spec = GoldSpec.load(path)
            self.gold_specs[spec.gold_id] = spec
            dims = study.get("gold_dims", {}).get(spec.source_id)
            if dims:
                self.image_dims[spec.gold_id] = tuple(dims)
            self.codec_by_image[spec.gold_id] = spec.codec.value

        self.training_ids = study.get("training_gold", [])[:TRAINING_ITEMS]
        self.quiz_ids = study.get("quiz_gold", [])[:QUIZ_ITEMS]
        if len(self.quiz_ids) != QUIZ_ITEMS:
            raise DomainError(f"study.json must list {QUIZ_ITEMS} quiz gold ids")

        self.state = StudyState(
            study_images=study_images,
            gold_specs=list(self.gold_specs.values()),
            target_responses=study.get("target_responses", protocol.DEFAULT_TARGET_RESPONSES),
            overshoot=study.get("overshoot", protocol.DEFAULT_OVERSHOOT),
        )
        self.cache = LadderCache(self.study_dir / "cache")
        self.workers: dict[str, WorkerRecord] = {}
        self.sessions: dict[str, Session] = {}
        self.qual_progress: dict[str, dict] = {}
        self.open_hits: dict[str, OpenHit] = {}
        self.rng = np.random.default_rng(study.get("seed", 0))

        log_path = self.study_dir / "log.jsonl"
        for event in EventLog.read(log_path):
            self._apply(event)
        self.log = EventLog(log_path)

    # -- event sourcing -------------------------------------------------

    def record(self, event: dict) -> None:
        self.log.append(event)
        self._apply(event)

    def _apply(self, event: dict) -> None:
        handler = getattr(self, f"_apply_{event['type']}", None)
        if handler is not None:
            handler(event)

    def _worker(self, worker_id: str) -> WorkerRecord:
        if worker_id not in self.workers:
            self.workers[worker_id] = WorkerRecord(worker_id=worker_id)
        return self.workers[worker_id]

    def _apply_session(self, event: dict) -> None:
        worker = self._worker(event["worker_id"])
        worker.calibration.ppi = event["ppi"]
        worker.calibration.confirmed_distance = event["confirmed_distance"]
        self.sessions[event["token"]] = Session(
            token=event["token"], worker_id=event["worker_id"],
            ppi=event["ppi"], confirmed_distance=event["confirmed_distance"],
            created_at=event["created_at"], expires_at=event["expires_at"],
        )

    def _apply_qualification_started(self, event: dict) -> None:
        worker = self._worker(event["worker_id"])
        worker.transition(WorkerState.IN_QUALIFICATION)
        self.qual_progress[event["worker_id"]] = {
            "phase": "training" if self.training_ids else "quiz",
            "index": 0, "quiz_responses": [],
        }

    def _apply_training_response(self, event: dict) -> None:
        if event["advance"]:
            progress = self.qual_progress[event["worker_id"]]
            progress["index"] += 1
            if progress["index"] >= len(self.training_ids):
                progress["phase"] = "quiz"
                progress["index"] = 0

    def _apply_quiz_response(self, event: dict) -> None:
        progress = self.qual_progress[event["worker_id"]]
        progress["quiz_responses"].append(event)
        progress["index"] += 1

    def _apply_quiz_result(self, event: dict) -> None:
        if event["passed"]:
            self._worker(event["worker_id"]).transition(WorkerState.QUALIFIED)

    def _apply_hit_assigned(self, event: dict) -> None:
        hit = self.state.apply_assignment(
            event["worker_id"], event["template_id"], event["hit_id"],
            gold_ref=event["gold_ref"], gold_position=event["gold_position"],
        )
        self.open_hits[event["hit_id"]] = OpenHit(
            hit_id=event["hit_id"], worker_id=event["worker_id"],
            template_id=event["template_id"], items=hit.items,
        )

    def _apply_response(self, event: dict) -> None:
        open_hit = self.open_hits.get(event["hit_id"])
        if open_hit is None:
            return
        open_hit.responses[event["image_ref"]] = event
        if event.get("is_gold"):
            open_hit.gold_validation = event.get("gold")

    def _apply_hit_completed(self, event: dict) -> None:
        open_hit = self.open_hits.pop(event["hit_id"], None)
        if open_hit is None:
            return
        self.state.complete_hit(event["hit_id"])
        gv = open_hit.gold_validation or {"pjnd_ok": False, "hits": 0}
        from .goldgen import GoldValidation

        protocol.on_study_hit_completed(
            self.workers[event["worker_id"]],
            GoldValidation(pjnd_ok=gv["pjnd_ok"], hits=gv["hits"]),
        )

    # -- helpers --------------------------------------------------------

    def session_for(self, token: str | None) -> Session:
        if not token or token not in self.sessions:
            raise HTTPException(status_code=401, detail="missing or unknown session token")
        session = self.sessions[token]
        if session.expired(self.clock()):
            raise HTTPException(status_code=401, detail="session expired")
        return session

    def qual_item_for(self, worker_id: str):
        progress = self.qual_progress.get(worker_id)
        if progress is None:
            return None
        ids = self.training_ids if progress["phase"] == "training" else self.quiz_ids
        if progress["index"] >= len(ids):
            return None
        return progress["phase"], progress["index"], self.gold_specs[ids[progress["index"]]]

    def rejected_worker_ids(self) -> set:
        return {
            w for w, rec in self.workers.items() if rec.state == WorkerState.REJECTED
        }


def create_app(study_dir, admin_token: str = "admin") -> FastAPI:
    server = StudyServer(study_dir, admin_token=admin_token)
    app = FastAPI(title="jndcrowd study server")
    app.state.server = server

    def error(status: int, detail: str):
        raise HTTPException(status_code=status, detail=detail)

    @app.post("/v1/session", status_code=201)
    async def create_session(payload: dict):
        worker_id = payload.get("worker_id")
        ppi = payload.get("ppi")
        confirmed = bool(payload.get("confirmed_distance", False))
        if not worker_id or not isinstance(ppi, (int, float)):
            error(422, "worker_id and numeric ppi required")
        if not PPI_MIN <= ppi <= PPI_MAX:
            error(422, f"ppi {ppi} outside plausible range [{PPI_MIN}, {PPI_MAX}]")
        with server.lock:
            existing = server.workers.get(worker_id)
            if existing and existing.state in (WorkerState.REVOKED, WorkerState.REJECTED):
                error(409, f"worker is {existing.state.value}")
            now = server.clock()
            token = secrets.token_hex(16)
            server.record({
                "type": "session", "token": token, "worker_id": worker_id,
                "ppi": float(ppi), "confirmed_distance": confirmed,
                "created_at": now, "expires_at": now + SESSION_TTL_S,
            })
            return {"token": token, "worker_state": server.workers[worker_id].state.value}

    @app.get("/v1/qualification/next")
    async def qualification_next(x_session_token: str | None = Header(default=None)):
        with server.lock:
            session = server.session_for(x_session_token)
            worker = server._worker(session.worker_id)
            if worker.state == WorkerState.NEW:
                server.record({"type": "qualification_started",
                               "worker_id": session.worker_id})
            if worker.state not in (WorkerState.IN_QUALIFICATION,):
                if worker.state == WorkerState.QUALIFIED:
                    return {"done": True, "passed": True}
                error(403, f"worker is {worker.state.value}")
            item = server.qual_item_for(session.worker_id)
            if item is None:
                progress = server.qual_progress[session.worker_id]
                done = len(progress["quiz_responses"]) >= QUIZ_ITEMS
                return {"done": done, "passed": False}
            phase, index, spec = item
            width, height = server.image_dims.get(
                spec.gold_id, server.image_dims.get(spec.source_id, (0, 0))
            )
            return {
                "phase": phase, "index": index,
                "item": {"image_ref": spec.gold_id, "codec": spec.codec.value,
                         "width": width, "height": height},
            }

    @app.post("/v1/qualification/response")
    async def qualification_response(payload: dict,
                                     x_session_token: str | None = Header(default=None)):
        with server.lock:
            session = server.session_for(x_session_token)
            worker = server._worker(session.worker_id)
            if worker.state != WorkerState.IN_QUALIFICATION:
                error(403, f"worker is {worker.state.value}")
            item = server.qual_item_for(session.worker_id)
            if item is None:
                error(403, "no pending qualification item")
            phase, index, spec = item
            if payload.get("image_ref") != spec.gold_id:
                error(422, f"expected response for {spec.gold_id}")
            try:
                resp = StudyResponse(
                    worker_id=session.worker_id, hit_id=f"qual-{phase}",
                    image_ref=spec.gold_id,
                    level=payload["level"], clicks=payload["clicks"],
                    started_at=payload.get("started_at", 0.0),
                    submitted_at=payload.get("submitted_at", 0.0),
                )
                validation = validate_gold_response(resp, spec)
            except (KeyError, TypeError, ResponseValidationError, DomainError) as exc:
                error(422, f"malformed response: {exc}")

            if phase == "training":
                outcome = protocol.training_step(resp, spec)
                server.record({
                    "type": "training_response", "worker_id": session.worker_id,
                    "image_ref": spec.gold_id, "level": resp.level,
                    "clicks": [list(c) for c in resp.clicks],
                    "advance": outcome.advance,
                })
                body = {"advance": outcome.advance,
                        "pjnd_ok": outcome.validation.pjnd_ok,
                        "hits": outcome.validation.hits}
                if not outcome.advance:
                    body["gt_range"] = list(outcome.gt_range)
                    body["heatmap_url"] = f"/v1/qualification/heatmap/{spec.gold_id}"
                    # clicks are gated on an accepted threshold: on a wrong
                    # threshold the click grading is withheld entirely
                    if not outcome.validation.pjnd_ok:
                        body["hits"] = None
                        body["clicks_locked"] = True
                return body

            server.record({
                "type": "quiz_response", "worker_id": session.worker_id,
                "image_ref": spec.gold_id, "level": resp.level,
                "clicks": [list(c) for c in resp.clicks],
                "started_at": resp.started_at, "submitted_at": resp.submitted_at,
            })
            progress = server.qual_progress[session.worker_id]
            if len(progress["quiz_responses"]) >= QUIZ_ITEMS:
                quiz_responses = [
                    StudyResponse(
                        worker_id=session.worker_id, hit_id="quiz",
                        image_ref=e["image_ref"], level=e["level"],
                        clicks=[tuple(c) for c in e["clicks"]],
                        started_at=e.get("started_at", 0.0),
                        submitted_at=e.get("submitted_at", 0.0),
                    )
                    for e in progress["quiz_responses"]
                ]
                specs = {gid: server.gold_specs[gid] for gid in server.quiz_ids}
                result = protocol.grade_quiz(quiz_responses, specs, session.worker_id)
                server.record({
                    "type": "quiz_result", "worker_id": session.worker_id,
                    "a": result.a, "b": result.b, "c": result.c,
                    "accuracy": result.accuracy, "passed": result.passed,
                })
                return {"accepted": True,
                        "quiz": {"accuracy": result.accuracy, "passed": result.passed}}
            return {"accepted": True}

    @app.get("/v1/qualification/heatmap/{image_ref}")
    async def qualification_heatmap(image_ref: str):
        spec = server.gold_specs.get(image_ref)
        if spec is None:
            error(404, "unknown gold item")
        width, height = server.image_dims.get(
            image_ref, server.image_dims.get(spec.source_id, (0, 0))
        )
        if not width:
            error(404, "no dimensions recorded for this item")
        field_values = blend_weight_field(spec.centers, spec.sigma_region, width, height)
        from PIL import Image

        buf = io.BytesIO()
        Image.fromarray(
            np.round(field_values * 255).astype(np.uint8), mode="L"
        ).save(buf, format="PNG")
        return HttpResponse(content=buf.getvalue(), media_type="image/png")

    @app.get("/v1/hit/next")
    async def hit_next(x_session_token: str | None = Header(default=None)):
        with server.lock:
            session = server.session_for(x_session_token)
            worker = server._worker(session.worker_id)
            if worker.state != WorkerState.QUALIFIED:
                error(403, f"worker is {worker.state.value}")
            # one open HIT per worker at a time
            for oh in server.open_hits.values():
                if oh.worker_id == session.worker_id:
                    return _hit_descriptor(oh)
            try:
                template_id, gold_ref, gold_position, hit_id = server.state.plan_assignment(
                    session.worker_id, server.rng
                )
            except DomainError as exc:
                error(409, f"no HIT available: {exc}")
            server.record({
                "type": "hit_assigned", "worker_id": session.worker_id,
                "hit_id": hit_id, "template_id": template_id,
                "gold_ref": gold_ref, "gold_position": gold_position,
            })
            return _hit_descriptor(server.open_hits[hit_id])

    def _hit_descriptor(open_hit: OpenHit) -> dict:
        # the gold flag stays server-side; the client sees a plain item list
        return {
            "hit_id": open_hit.hit_id,
            "items": [
                {
                    "image_ref": it.image_ref,
                    "codec": it.codec,
                    "width": server.image_dims.get(it.image_ref, (0, 0))[0],
                    "height": server.image_dims.get(it.image_ref, (0, 0))[1],
                    "answered": it.image_ref in open_hit.responses,
                }
                for it in open_hit.items
            ],
        }

    @app.get("/v1/frame/{image_ref}/{d}")
    async def get_frame(image_ref: str, d: int):
        codec_name = server.codec_by_image.get(image_ref)
        if codec_name is None or not 0 <= d <= 100:
            error(404, "unknown frame")
        path = server.cache.frame_path(image_ref, Codec(codec_name), d)
        if not path.exists():
            error(404, "frame not cached")
        return HttpResponse(content=path.read_bytes(), media_type="image/png")

    @app.post("/v1/hit/{hit_id}/response")
    async def hit_response(hit_id: str, payload: dict,
                           x_session_token: str | None = Header(default=None)):
        with server.lock:
            session = server.session_for(x_session_token)
            worker = server._worker(session.worker_id)
            if worker.state not in (WorkerState.QUALIFIED,):
                error(403, f"worker is {worker.state.value}")
            open_hit = server.open_hits.get(hit_id)
            if open_hit is None or open_hit.worker_id != session.worker_id:
                error(404, "unknown HIT")
            image_ref = payload.get("image_ref")
            if image_ref not in {it.image_ref for it in open_hit.items}:
                error(422, "image is not part of this HIT")
            if image_ref in open_hit.responses:
                error(409, "duplicate submission for this item")
            width, height = server.image_dims.get(image_ref, (0, 0))
            try:
                resp = StudyResponse(
                    worker_id=session.worker_id, hit_id=hit_id, image_ref=image_ref,
                    level=payload["level"], clicks=payload["clicks"],
                    started_at=payload.get("started_at", 0.0),
                    submitted_at=payload.get("submitted_at", 0.0),
                )
            except (KeyError, TypeError, ResponseValidationError) as exc:
                error(422, f"malformed response: {exc}")
            if width and any(
                not (0 <= x < width and 0 <= y < height) for x, y in resp.clicks
            ):
                error(422, "clicks must lie inside the source image")

            item = next(it for it in open_hit.items if it.image_ref == image_ref)
            gold = None
            if item.is_gold:
                validation = validate_gold_response(resp, server.gold_specs[image_ref])
                gold = {"pjnd_ok": validation.pjnd_ok, "hits": validation.hits,
                        "correct": validation.correct}
            server.record(response_event(
                worker_id=session.worker_id, hit_id=hit_id, image_ref=image_ref,
                level=resp.level, clicks=resp.clicks,
                started_at=resp.started_at, submitted_at=resp.submitted_at,
                template_id=open_hit.template_id, is_gold=item.is_gold, gold=gold,
            ))
            body = {"accepted": True, "hit_complete": False}
            if len(open_hit.responses) >= protocol.HIT_SIZE:
                server.record({
                    "type": "hit_completed", "worker_id": session.worker_id,
                    "hit_id": hit_id,
                })
                body["hit_complete"] = True
            body["worker_state"] = worker.state.value
            return body

    def _check_admin(token: str | None):
        if token != server.admin_token:
            error(401, "admin credential required")

    @app.get("/v1/admin/stats")
    async def admin_stats(x_admin_token: str | None = Header(default=None)):
        _check_admin(x_admin_token)
        with server.lock:
            return {
                "workers": {
                    state.value: sum(
                        1 for w in server.workers.values() if w.state == state
                    )
                    for state in WorkerState
                },
                "image_responses": {
                    im.image_id: im.completions for im in server.state.images.values()
                },
                "image_assignments": {
                    im.image_id: im.assignments for im in server.state.images.values()
                },
                "open_hits": len(server.open_hits),
            }

    @app.get("/v1/admin/export")
    async def admin_export(x_admin_token: str | None = Header(default=None)):
        _check_admin(x_admin_token)
        with server.lock:
            events = EventLog.read(server.log.path)
            rejected = server.rejected_worker_ids()
        responses, report = qc.run_qc(events, rejected)
        return report.to_dict()

    return app
