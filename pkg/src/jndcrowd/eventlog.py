"""Append-only JSON-lines event log.

One JSON object per line; the ``type`` field discriminates. The study
server funnels every state mutation through this log, which makes worker
state reconstructible by replay and gives the analytics pipeline a single
immutable input. Events of type ``response`` follow the wire schema of the
response intake endpoint plus bookkeeping fields (``template_id``,
``is_gold``, ``gold`` validation result).
"""

from __future__ import annotations

import json
import os
from pathlib import Path


def encode_event(event: dict) -> str:
    return json.dumps(event, sort_keys=True, separators=(",", ":"))


class EventLog:
    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "a", encoding="utf-8")

    def append(self, event: dict) -> None:
        """Write and fsync one event; callers must not ack before this returns."""
        self._fh.write(encode_event(event) + "\n")
        self._fh.flush()
        os.fsync(self._fh.fileno())

    def close(self) -> None:
        self._fh.close()

    @staticmethod
    def read(path) -> list:
        path = Path(path)
        if not path.exists():
            return []
        events = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    events.append(json.loads(line))
        return events


def response_event(worker_id: str, hit_id: str, image_ref: str, level: int,
                   clicks, started_at: float, submitted_at: float,
                   template_id: int = -1, is_gold: bool = False,
                   gold: dict | None = None) -> dict:
    event = {
        "type": "response",
        "worker_id": worker_id,
        "hit_id": hit_id,
        "image_ref": image_ref,
        "level": int(level),
        "clicks": [[float(x), float(y)] for x, y in clicks],
        "started_at": started_at,
        "submitted_at": submitted_at,
        "template_id": template_id,
        "is_gold": is_gold,
    }
    if gold is not None:
        event["gold"] = gold
    return event


def write_events(path, events) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for event in events:
            fh.write(encode_event(event) + "\n")
