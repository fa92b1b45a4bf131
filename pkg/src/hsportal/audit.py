"""Append-only audit trail of consent and query activity.

One JSONL line per event; sequence numbers are assigned at append time
and preserved across restarts so ordering is provable after replay.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path

from .timeutil import Clock, SystemClock, format_utc


@dataclass(frozen=True)
class AuditEvent:
    seq: int
    at: str
    kind: str
    actor: str
    user_id: str | None
    details: dict

    def to_doc(self) -> dict:
        return {
            "seq": self.seq,
            "at": self.at,
            "kind": self.kind,
            "actor": self.actor,
            "user_id": self.user_id,
            "details": self.details,
        }


class AuditLog:
    def __init__(self, path: Path | None = None, clock: Clock | None = None):
        self._path = Path(path) if path is not None else None
        self._clock = clock or SystemClock()
        self._events: list[AuditEvent] = []
        self._lock = threading.Lock()
        if self._path is not None and self._path.exists():
            self._replay()

    def _replay(self) -> None:
        assert self._path is not None
        with self._path.open() as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                doc = json.loads(line)
                self._events.append(
                    AuditEvent(
                        seq=doc["seq"],
                        at=doc["at"],
                        kind=doc["kind"],
                        actor=doc["actor"],
                        user_id=doc.get("user_id"),
                        details=doc.get("details", {}),
                    )
                )

    def append(
        self,
        kind: str,
        actor: str,
        *,
        user_id: str | None = None,
        details: dict | None = None,
    ) -> AuditEvent:
        with self._lock:
            event = AuditEvent(
                seq=len(self._events) + 1,
                at=format_utc(self._clock.now()),
                kind=kind,
                actor=actor,
                user_id=user_id,
                details=details or {},
            )
            self._events.append(event)
            if self._path is not None:
                with self._path.open("a") as fh:
                    fh.write(json.dumps(event.to_doc()) + "\n")
                    fh.flush()
        return event

    def events(self, user_id: str | None = None) -> list[AuditEvent]:
        """All events in append order, optionally scoped to one user."""
        with self._lock:
            snapshot = list(self._events)
        if user_id is None:
            return snapshot
        return [e for e in snapshot if e.user_id == user_id]
