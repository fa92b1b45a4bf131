"""Shared service state: component wiring, principals, response recording.

State lives in append-only JSONL logs under one directory, so a restart
replays everything and a test can point three consecutive processes at
the same files.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from pathlib import Path

from ..audit import AuditLog
from ..consent import ConsentStore
from ..errors import AuthorizationFailed
from ..federation import FederationConfig, FederationEngine
from ..registry import Registry
from ..timeutil import Clock, SystemClock
from ..tokens import TokenMinter
from ..transport import HttpTransport, Transport


@dataclass(frozen=True)
class ApiPrincipal:
    kind: str  # user | hsapp | controller
    id: str

    def require(self, kind: str) -> "ApiPrincipal":
        if self.kind != kind:
            raise AuthorizationFailed(f"endpoint is limited to {kind} principals")
        return self


@dataclass
class PortalState:
    clock: Clock
    audit: AuditLog
    registry: Registry
    consent: ConsentStore
    minter: TokenMinter
    transport: Transport
    engine: FederationEngine
    config: FederationConfig
    # every byte ever served to a developer principal, for leak scanning
    recorded: list[tuple[str, bytes]] = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock)

    def authenticate(self, authorization: str | None) -> ApiPrincipal | None:
        if not authorization or not authorization.startswith("Bearer "):
            return None
        secret = authorization[len("Bearer ") :].strip()
        if not secret:
            return None
        principal = self.consent.authenticate(secret)
        if principal is not None:
            return ApiPrincipal(principal.kind, principal.id)
        controller = self.registry.controller_by_key(secret)
        if controller is not None:
            return ApiPrincipal("controller", controller.controller_id)
        return None

    def record(self, path: str, payload: bytes) -> None:
        with self._lock:
            self.recorded.append((path, payload))

    def recorded_bodies(self) -> list[tuple[str, bytes]]:
        with self._lock:
            return list(self.recorded)


def build_state(
    master_key: bytes,
    token_key: bytes,
    *,
    state_dir: Path | str | None = None,
    clock: Clock | None = None,
    transport: Transport | None = None,
    config: FederationConfig | None = None,
) -> PortalState:
    """Wire every component; with a state dir, logs persist and replay."""
    clock = clock or SystemClock()
    config = config or FederationConfig()
    audit_path = registry_path = consent_path = callback_dir = None
    if state_dir is not None:
        root = Path(state_dir)
        root.mkdir(parents=True, exist_ok=True)
        audit_path = root / "audit.jsonl"
        registry_path = root / "registry.jsonl"
        consent_path = root / "consent.jsonl"
        callback_dir = root / "callbacks"

    audit = AuditLog(audit_path, clock=clock)
    registry = Registry(registry_path, clock=clock)
    consent = ConsentStore(
        master_key, audit, log_path=consent_path, clock=clock, callback_dir=callback_dir
    )
    minter = TokenMinter(token_key, clock)
    transport = transport or HttpTransport(timeout_seconds=5.0)
    engine = FederationEngine(registry, consent, audit, minter, transport, clock, config)
    return PortalState(
        clock=clock,
        audit=audit,
        registry=registry,
        consent=consent,
        minter=minter,
        transport=transport,
        engine=engine,
        config=config,
    )
