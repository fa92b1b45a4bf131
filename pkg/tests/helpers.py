"""Shared fixtures-by-hand: document factories, a full assembled world,
and record comparison."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from hsportal.audit import AuditLog
from hsportal.consent import ConsentStore
from hsportal.federation import FederationConfig, FederationEngine
from hsportal.registry import Registry
from hsportal.schema import CanonicalRecord
from hsportal.silo.profiles import PROFILES, build_dab_doc
from hsportal.silo.server import SiloServer, build_fleet
from hsportal.timeutil import SimClock, parse_utc
from hsportal.tokens import TokenMinter
from hsportal.transport import InProcessTransport

TOKEN_KEY = b"t" * 32
MASTER_KEY = b"m" * 32
WINDOW_START = "2024-01-01T00:00:00Z"
WINDOW_END = "2024-01-31T23:59:59Z"
NOW = "2024-02-01T00:00:00Z"

# silo credentials the demo user has on file
CREDENTIALS = {app: f"secret-{app}" for app in PROFILES}

DOMAINS = ("health", "messages", "social", "finance", "iot")


@dataclass
class World:
    """Everything wired together over the in-process transport."""

    clock: SimClock
    audit: AuditLog
    registry: Registry
    consent: ConsentStore
    minter: TokenMinter
    transport: InProcessTransport
    fleet: dict[str, SiloServer]
    engine: FederationEngine
    user_id: str
    user_token: str
    hsapp_id: str
    hsapp_token: str
    pseudonym: str
    grants: dict[str, Any]

    def portal_state(self):
        from hsportal.portal import PortalState

        return PortalState(
            clock=self.clock,
            audit=self.audit,
            registry=self.registry,
            consent=self.consent,
            minter=self.minter,
            transport=self.transport,
            engine=self.engine,
            config=self.engine.config,
        )


def build_world(
    seed: int = 7,
    *,
    fee_waivers: dict | None = None,
    grant_domains: tuple[str, ...] = DOMAINS,
    credentials_for: tuple[str, ...] | None = None,
    config: FederationConfig | None = None,
) -> World:
    """Assemble silos, registry, consent state, and the engine.

    One user, one hsApp, every silo designated for its domain, grants for
    ``grant_domains``, credentials on file for ``credentials_for`` (all
    silos when None).
    """
    clock = SimClock(parse_utc(NOW))
    audit = AuditLog(clock=clock)
    registry = Registry(clock=clock)
    consent = ConsentStore(MASTER_KEY, audit, clock=clock)
    minter = TokenMinter(TOKEN_KEY, clock)

    fleet = build_fleet(
        PROFILES,
        seed,
        WINDOW_START,
        WINDOW_END,
        token_key=TOKEN_KEY,
        clock=clock,
        fee_waiver_codes=fee_waivers,
    )
    transport = InProcessTransport()
    for server in fleet.values():
        transport.register(server.base_url, server)

    controllers: dict[str, list[str]] = {}
    for app, profile in PROFILES.items():
        controllers.setdefault(profile.controller_id, []).append(app)
    for controller_id, apps in controllers.items():
        registry.onboard_controller(controller_id, controller_id, f"key-{controller_id}", apps)
        for app in apps:
            server = fleet[app]
            registry.register_dab(
                controller_id, build_dab_doc(PROFILES[app], server.earliest(), server.latest())
            )

    user_token = consent.create_user("u-alice")
    token = consent.onboard_hsapp("coach-app", "Coach")
    by_domain: dict[str, list[str]] = {}
    for app, profile in PROFILES.items():
        by_domain.setdefault(profile.domain, []).append(app)
    for domain, apps in by_domain.items():
        consent.designate_sources(
            "u-alice", domain, sorted(apps), known_apps=lambda a: a in registry.known_source_apps()
        )
    for app in credentials_for if credentials_for is not None else PROFILES:
        consent.set_credential("u-alice", app, CREDENTIALS[app])
        fleet[app].accept_credential(CREDENTIALS[app])

    grants = {}
    for domain in grant_domains:
        grants[domain] = consent.grant_access(
            "u-alice", "coach-app", domain, parse_utc(WINDOW_START), parse_utc(WINDOW_END)
        )

    if config is None:
        config = FederationConfig(fee_waivers=dict(fee_waivers or {}))
    engine = FederationEngine(registry, consent, audit, minter, transport, clock, config)
    return World(
        clock=clock,
        audit=audit,
        registry=registry,
        consent=consent,
        minter=minter,
        transport=transport,
        fleet=fleet,
        engine=engine,
        user_id="u-alice",
        user_token=user_token,
        hsapp_id="coach-app",
        hsapp_token=token,
        pseudonym=consent.pseudonym_for("u-alice", "coach-app"),
        grants=grants,
    )


def oracle_records(
    app: str,
    seed: int,
    pseudonym: str,
    start: Any = None,
    end: Any = None,
    metrics: tuple[str, ...] | None = None,
) -> list[CanonicalRecord]:
    """Expected canonical records straight from the generator, no parsing."""
    from hsportal.schema import default_catalog
    from hsportal.silo.seed import canonical_value, generate_rows

    profile = PROFILES[app]
    schema = default_catalog().get(profile.domain, 1)
    start = parse_utc(start) if isinstance(start, str) else start
    end = parse_utc(end) if isinstance(end, str) else end
    records = []
    for row in generate_rows(profile, seed, WINDOW_START, WINDOW_END):
        if metrics is not None and row.metric not in metrics:
            continue
        if start is not None and row.timestamp < start:
            continue
        if end is not None and row.timestamp > end:
            continue
        records.append(
            CanonicalRecord(
                pseudonym=pseudonym,
                source_app=app,
                metric=row.metric,
                timestamp=row.timestamp,
                value=canonical_value(profile, row),
                unit=schema.metrics[row.metric].unit,
            )
        )
    return records


def spawn_demo(state_dir, port: int, seed: int = 42, phase_default: int | None = None):
    """Start `demo` in a child process and wait for its ready line.

    Returns (process, env dict from demo-env.json). Caller terminates.
    """
    import json
    import subprocess
    import sys
    import time

    cmd = [
        sys.executable,
        "-m",
        "hsportal.cli",
        "demo",
        "--seed",
        str(seed),
        "--listen",
        f"127.0.0.1:{port}",
        "--state-dir",
        str(state_dir),
    ]
    if phase_default is not None:
        cmd += ["--phase-default", str(phase_default)]
    proc = subprocess.Popen(
        cmd, stdout=subprocess.PIPE, stderr=subprocess.STDOUT, text=True, bufsize=1
    )
    deadline = time.monotonic() + 30
    lines = []
    while True:
        if time.monotonic() > deadline:
            proc.kill()
            raise AssertionError("demo never became ready:\n" + "".join(lines))
        line = proc.stdout.readline()
        if line:
            lines.append(line)
            if line.strip() == "ready":
                break
        elif proc.poll() is not None:
            raise AssertionError(
                f"demo exited with {proc.returncode}:\n" + "".join(lines)
            )
    env = json.loads((Path(state_dir) / "demo-env.json").read_text())
    return proc, env


def stop_demo(proc) -> int:
    import signal

    proc.send_signal(signal.SIGTERM)
    try:
        return proc.wait(timeout=10)
    except Exception:
        proc.kill()
        raise


def make_dab_doc(**overrides: Any) -> dict:
    """A valid phase-3 document for a csv heart-rate export."""
    doc = {
        "id": "fitsim-health",
        "source_app": "fitsim",
        "controller_id": "fitcorp",
        "phase": 3,
        "domain": "health",
        "availability": {
            "metrics": ["heart_rate"],
            "earliest": "2024-01-01T00:00:00Z",
            "latest": "2024-12-31T23:00:00Z",
        },
        "template": {
            "id": "fitsim-health-export",
            "domain": "health",
            "metrics": ["heart_rate"],
            "granularity": "date_range",
            "parameters": [
                {"name": "credential", "kind": "credential"},
                {"name": "date_start", "kind": "date_start"},
                {"name": "date_end", "kind": "date_end"},
            ],
            "instruction": {
                "method": "GET",
                "url_template": "http://fitsim.sim/export?from={date_start}&to={date_end}",
                "headers": {"Authorization": "Bearer {credential}"},
                "response_format": "csv",
            },
        },
        "mapping": {
            "response_format": "csv",
            "record_root": "",
            "entries": [
                {"path": "Timestamp", "target": "timestamp"},
                {"path": "HeartRate", "target": "value"},
            ],
            "constants": {"metric": "heart_rate"},
        },
        "schema_version": 1,
    }
    doc = copy.deepcopy(doc)
    doc.update(copy.deepcopy(overrides))
    return doc


def set_in(doc: dict, pointer: str, value: Any) -> dict:
    """Return a deep copy with the value at a ``/``-joined pointer replaced."""
    out = copy.deepcopy(doc)
    node = out
    parts = pointer.strip("/").split("/")
    for part in parts[:-1]:
        node = node[int(part)] if isinstance(node, list) else node[part]
    last = parts[-1]
    if isinstance(node, list):
        node[int(last)] = value
    else:
        node[last] = value
    return out


def drop_key(doc: dict, pointer: str) -> dict:
    out = copy.deepcopy(doc)
    node = out
    parts = pointer.strip("/").split("/")
    for part in parts[:-1]:
        node = node[int(part)] if isinstance(node, list) else node[part]
    del node[parts[-1]]
    return out


def records_equal(
    a: list[CanonicalRecord], b: list[CanonicalRecord], tol: float = 1e-9
) -> bool:
    """Multiset equality on identity, values compared within tolerance."""
    if len(a) != len(b):
        return False
    for left, right in zip(
        sorted(a, key=CanonicalRecord.identity), sorted(b, key=CanonicalRecord.identity)
    ):
        if left.identity() != right.identity() or left.unit != right.unit:
            return False
        if isinstance(left.value, str) or isinstance(right.value, str):
            if left.value != right.value:
                return False
        elif not math.isclose(left.value, right.value, rel_tol=0, abs_tol=tol):
            return False
    return True


def explain_mismatch(a: list[CanonicalRecord], b: list[CanonicalRecord]) -> str:
    ids_a = {r.identity() for r in a}
    ids_b = {r.identity() for r in b}
    lines = [f"left={len(a)} right={len(b)}"]
    for identity in sorted(ids_a - ids_b)[:5]:
        lines.append(f"only left: {identity}")
    for identity in sorted(ids_b - ids_a)[:5]:
        lines.append(f"only right: {identity}")
    return "\n".join(lines)
