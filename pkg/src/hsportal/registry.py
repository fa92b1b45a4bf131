"""Versioned registry of Data Access Blocks.

Controllers own source apps and publish DABs for them. Every accepted
registration appends to a JSONL event log from which the registry state
is fully reconstructible; versions are monotone per (source_app, dab id)
and deprecation is a tombstone, never a deletion.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from datetime import datetime
from hashlib import sha256
from pathlib import Path
from typing import Iterable, Mapping

from .dab import DataAccessBlock, ValidationReport, decode_dab, validate_dab
from .errors import AuthorizationFailed, PortalError
from .schema import SchemaCatalog, default_catalog
from .timeutil import Clock, SystemClock, format_utc, parse_utc


class InvalidDab(PortalError):
    code = "invalid-dab"

    def __init__(self, report: ValidationReport):
        super().__init__("document failed validation")
        self.report = report


class DabNotFound(PortalError):
    code = "dab-not-found"


class UnknownController(PortalError):
    code = "unknown-controller"


@dataclass(frozen=True)
class ControllerRecord:
    controller_id: str
    display_name: str
    api_key_sha256: str
    source_apps: tuple[str, ...]

    def to_doc(self) -> dict:
        return {
            "controller_id": self.controller_id,
            "display_name": self.display_name,
            "source_apps": list(self.source_apps),
        }


@dataclass(frozen=True)
class DabEntry:
    dab: DataAccessBlock
    doc: dict
    version: int
    status: str  # active | deprecated
    registered_at: datetime

    def to_doc(self) -> dict:
        return {
            "dab": self.doc,
            "version": self.version,
            "status": self.status,
            "registered_at": format_utc(self.registered_at),
        }


def hash_secret(secret: str) -> str:
    return sha256(secret.encode()).hexdigest()


class Registry:
    def __init__(
        self,
        log_path: Path | None = None,
        clock: Clock | None = None,
        catalog: SchemaCatalog | None = None,
    ):
        self._path = Path(log_path) if log_path is not None else None
        self._clock = clock or SystemClock()
        self.catalog = catalog or default_catalog()
        self._controllers: dict[str, ControllerRecord] = {}
        self._by_key: dict[str, str] = {}  # api key sha -> controller_id
        self._versions: dict[tuple[str, str], list[DabEntry]] = {}
        self._lock = threading.RLock()
        if self._path is not None and self._path.exists():
            self._replay()

    # -- persistence ------------------------------------------------------

    def _append(self, event: dict) -> None:
        if self._path is None:
            return
        with self._path.open("a") as fh:
            fh.write(json.dumps(event) + "\n")
            fh.flush()

    def _replay(self) -> None:
        assert self._path is not None
        with self._path.open() as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                event = json.loads(line)
                kind = event["event"]
                if kind == "controller_onboarded":
                    self._apply_controller(
                        ControllerRecord(
                            controller_id=event["controller_id"],
                            display_name=event["display_name"],
                            api_key_sha256=event["api_key_sha256"],
                            source_apps=tuple(event["source_apps"]),
                        )
                    )
                elif kind == "dab_registered":
                    self._apply_registration(
                        event["doc"], event["version"], parse_utc(event["at"])
                    )
                elif kind == "dab_deprecated":
                    self._apply_deprecation(
                        event["source_app"], event["dab_id"], event["version"]
                    )
                else:
                    raise ValueError(f"unknown registry event {kind!r}")

    # -- controllers ------------------------------------------------------

    def _apply_controller(self, record: ControllerRecord) -> None:
        self._controllers[record.controller_id] = record
        self._by_key[record.api_key_sha256] = record.controller_id

    def onboard_controller(
        self, controller_id: str, display_name: str, api_key: str, source_apps: Iterable[str]
    ) -> ControllerRecord:
        with self._lock:
            if controller_id in self._controllers:
                raise PortalError(
                    f"controller {controller_id!r} already onboarded",
                    code="duplicate-controller",
                )
            record = ControllerRecord(
                controller_id=controller_id,
                display_name=display_name,
                api_key_sha256=hash_secret(api_key),
                source_apps=tuple(source_apps),
            )
            self._apply_controller(record)
            self._append(
                {
                    "event": "controller_onboarded",
                    "at": format_utc(self._clock.now()),
                    **record.to_doc(),
                    "api_key_sha256": record.api_key_sha256,
                }
            )
            return record

    def controller_by_key(self, api_key: str) -> ControllerRecord | None:
        with self._lock:
            controller_id = self._by_key.get(hash_secret(api_key))
            return self._controllers.get(controller_id) if controller_id else None

    def controller(self, controller_id: str) -> ControllerRecord | None:
        with self._lock:
            return self._controllers.get(controller_id)

    # -- registration -----------------------------------------------------

    def _apply_registration(
        self, doc: dict, version: int, at: datetime
    ) -> DabEntry:
        dab = decode_dab(doc)
        entry = DabEntry(dab=dab, doc=doc, version=version, status="active", registered_at=at)
        self._versions.setdefault((dab.source_app, dab.id), []).append(entry)
        return entry

    def register_dab(self, controller_id: str, raw: bytes | str | Mapping) -> DabEntry:
        """Validate and publish; a repeat id bumps the version."""
        with self._lock:
            controller = self._controllers.get(controller_id)
            if controller is None:
                raise UnknownController(f"no controller {controller_id!r}")
            report = validate_dab(raw, self.catalog)
            if not report.ok:
                raise InvalidDab(report)
            doc = json.loads(raw) if isinstance(raw, (bytes, str)) else dict(raw)
            if doc["controller_id"] != controller_id:
                raise AuthorizationFailed("document names a different controller")
            if doc["source_app"] not in controller.source_apps:
                raise AuthorizationFailed(
                    f"controller {controller_id!r} does not own {doc['source_app']!r}"
                )
            history = self._versions.get((doc["source_app"], doc["id"]), [])
            version = history[-1].version + 1 if history else 1
            at = self._clock.now()
            entry = self._apply_registration(doc, version, at)
            self._append(
                {
                    "event": "dab_registered",
                    "at": format_utc(at),
                    "controller_id": controller_id,
                    "version": version,
                    "doc": doc,
                }
            )
            return entry

    def deprecate(self, controller_id: str, source_app: str, dab_id: str, version: int) -> None:
        """Tombstone one version; repeating the call is a no-op."""
        with self._lock:
            controller = self._controllers.get(controller_id)
            if controller is None:
                raise UnknownController(f"no controller {controller_id!r}")
            if source_app not in controller.source_apps:
                raise AuthorizationFailed(
                    f"controller {controller_id!r} does not own {source_app!r}"
                )
            history = self._versions.get((source_app, dab_id))
            if not history:
                raise DabNotFound(f"no versions of {source_app}/{dab_id}")
            if not any(e.version == version for e in history):
                raise DabNotFound(f"{source_app}/{dab_id} has no version {version}")
            already = any(
                e.version == version and e.status == "deprecated" for e in history
            )
            self._apply_deprecation(source_app, dab_id, version)
            if not already:
                self._append(
                    {
                        "event": "dab_deprecated",
                        "at": format_utc(self._clock.now()),
                        "controller_id": controller_id,
                        "source_app": source_app,
                        "dab_id": dab_id,
                        "version": version,
                    }
                )

    def _apply_deprecation(self, source_app: str, dab_id: str, version: int) -> None:
        history = self._versions.get((source_app, dab_id), [])
        for i, entry in enumerate(history):
            if entry.version == version and entry.status != "deprecated":
                history[i] = DabEntry(
                    dab=entry.dab,
                    doc=entry.doc,
                    version=entry.version,
                    status="deprecated",
                    registered_at=entry.registered_at,
                )

    # -- queries ----------------------------------------------------------

    def _active_entries(self) -> list[DabEntry]:
        latest: list[DabEntry] = []
        for history in self._versions.values():
            for entry in reversed(history):
                if entry.status == "active":
                    latest.append(entry)
                    break
        return latest

    def lookup(
        self,
        domain: str,
        metrics: Iterable[str] | None = None,
        source_apps: Iterable[str] | None = None,
    ) -> list[DabEntry]:
        """Latest active entries for a domain, newest registration last."""
        wanted_metrics = set(metrics) if metrics else None
        wanted_apps = set(source_apps) if source_apps else None
        with self._lock:
            found = []
            for entry in self._active_entries():
                if entry.dab.domain != domain:
                    continue
                if wanted_apps is not None and entry.dab.source_app not in wanted_apps:
                    continue
                if wanted_metrics is not None and not (
                    wanted_metrics & set(entry.dab.availability.metrics)
                ):
                    continue
                found.append(entry)
            return sorted(found, key=lambda e: (e.dab.source_app, e.dab.id))

    def entry_for(self, source_app: str, domain: str) -> DabEntry | None:
        """The silo's current offering for a domain, if any."""
        with self._lock:
            candidates = [
                e
                for e in self._active_entries()
                if e.dab.source_app == source_app and e.dab.domain == domain
            ]
        if not candidates:
            return None
        return sorted(candidates, key=lambda e: e.dab.id)[0]

    def known_source_apps(self) -> set[str]:
        with self._lock:
            return {app for app, _ in self._versions}

    def versions(self, source_app: str, dab_id: str) -> list[DabEntry]:
        with self._lock:
            return list(self._versions.get((source_app, dab_id), []))
