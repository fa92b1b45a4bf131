"""Plan and execute federated queries across designated silos.

Planning resolves consent and designation; execution fans out per silo
with hard failure isolation: one silo's outcome can never change what
another silo contributes. Depending on the effective phase per silo the
portal either executes the access itself (phase 3) or hands the app an
executable document plus a delegated token (phases 1 and 2).
"""

from __future__ import annotations

import itertools
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime

from .access import AccessError, fetch_records
from .audit import AuditLog
from .consent import ConsentStore
from .dab import phase1_view
from .errors import ConsentDenied, NoCredentialOnFile, NoDesignation
from .mapping import filter_range
from .registry import DabEntry, Registry
from .schema import CanonicalRecord, merge_sorted
from .timeutil import Clock, format_utc
from .tokens import TokenMinter
from .transport import Transport


@dataclass(frozen=True)
class FederatedQuery:
    pseudonym: str
    domain: str
    metrics: tuple[str, ...]
    start: datetime | None = None
    end: datetime | None = None
    phase: int | None = None


@dataclass(frozen=True)
class FederationConfig:
    default_phase: int = 3
    execute_phase2_server_side: bool = True
    fee_waivers: dict = field(default_factory=dict)  # source_app -> waiver code
    max_workers: int = 8


@dataclass(frozen=True)
class PlanItem:
    source_app: str
    entry: DabEntry
    metrics: tuple[str, ...]
    effective_phase: int


@dataclass(frozen=True)
class Plan:
    user_id: str
    hsapp_id: str
    pseudonym: str
    domain: str
    metrics: tuple[str, ...]
    start: datetime
    end: datetime
    items: tuple[PlanItem, ...]
    skipped: tuple[dict, ...]  # per-silo failures decided at plan time


class FederationEngine:
    def __init__(
        self,
        registry: Registry,
        consent: ConsentStore,
        audit: AuditLog,
        minter: TokenMinter,
        transport: Transport,
        clock: Clock,
        config: FederationConfig | None = None,
    ):
        self.registry = registry
        self.consent = consent
        self.audit = audit
        self.minter = minter
        self.transport = transport
        self.clock = clock
        self.config = config or FederationConfig()
        self._query_seq = itertools.count(1)
        self._seq_lock = threading.Lock()

    # -- planning -----------------------------------------------------------

    def _effective_phase(self, requested: int, entry: DabEntry) -> int:
        if requested == 1:
            return 1
        if not entry.dab.executable:
            return 0  # cannot serve data at phase 2 or 3
        if requested == 2:
            return 2
        if entry.dab.phase >= 3 or self.config.execute_phase2_server_side:
            return 3
        return 2

    def plan(self, hsapp_id: str, query: FederatedQuery) -> Plan:
        """Resolve consent and designation into per-silo work items.

        Raises ConsentDenied when the pseudonym, grant, ownership, or
        bounds refuse the query, NoDesignation when the user never
        designated silos for the domain.
        """
        owner = self.consent.owner_of_pseudonym(query.pseudonym)
        if owner is None or owner[1] != hsapp_id:
            # a pseudonym minted for another app must be indistinguishable
            # from an unknown one
            raise ConsentDenied("unknown pseudonym")
        user_id = owner[0]

        designated = self.consent.designated(user_id, query.domain)
        if designated is None:
            raise NoDesignation(f"user never designated silos for {query.domain!r}")

        grant = self.consent.active_grant(user_id, hsapp_id, query.domain)
        if grant is None:
            raise ConsentDenied(f"no active grant for domain {query.domain!r}")
        start = query.start if query.start is not None else grant.start
        end = query.end if query.end is not None else grant.end
        self.consent.check_access(query.pseudonym, query.domain, start, end)

        requested_phase = query.phase or self.config.default_phase
        items: list[PlanItem] = []
        skipped: list[dict] = []
        for app in designated:
            entry = self.registry.entry_for(app, query.domain)
            if entry is None:
                if app in self.registry.known_source_apps():
                    skipped.append(
                        _failure(app, "domain-mismatch", "silo serves a different domain")
                    )
                else:
                    skipped.append(_failure(app, "no-dab", "silo offers nothing for this domain"))
                continue
            offered = set(entry.dab.availability.metrics)
            if query.metrics:
                wanted = tuple(m for m in query.metrics if m in offered)
                if not wanted:
                    skipped.append(
                        _failure(
                            app,
                            "no-matching-metrics",
                            "silo offers none of the requested metrics",
                        )
                    )
                    continue
            else:
                wanted = tuple(entry.dab.availability.metrics)
            effective = self._effective_phase(requested_phase, entry)
            if effective == 0:
                skipped.append(
                    _failure(
                        app,
                        "unsupported-phase",
                        "document is descriptive only and cannot be executed",
                    )
                )
                continue
            # even token hand-off presumes the user holds an account there
            if not self.consent.has_credential(user_id, app):
                skipped.append(
                    _failure(app, "no-credential", "user stored no credential for this silo")
                )
                continue
            items.append(PlanItem(app, entry, wanted, effective))
        return Plan(
            user_id=user_id,
            hsapp_id=hsapp_id,
            pseudonym=query.pseudonym,
            domain=query.domain,
            metrics=query.metrics,
            start=start,
            end=end,
            items=tuple(items),
            skipped=tuple(skipped),
        )

    # -- execution ----------------------------------------------------------

    def query(self, hsapp_id: str, query: FederatedQuery) -> dict:
        """Full query lifecycle; returns the wire-shaped result document."""
        with self._seq_lock:
            query_id = f"q-{next(self._query_seq):06d}"
        try:
            plan = self.plan(hsapp_id, query)
            # consent is rechecked at execution start: a revoke landing
            # after planning but before this line still wins
            self.consent.check_access(query.pseudonym, plan.domain, plan.start, plan.end)
        except (ConsentDenied, NoDesignation) as exc:
            owner = self.consent.owner_of_pseudonym(query.pseudonym)
            self.audit.append(
                "query_denied",
                actor=hsapp_id,
                user_id=owner[0] if owner else None,
                details={
                    "query_id": query_id,
                    "domain": query.domain,
                    "reason": exc.code,
                },
            )
            raise

        outcomes: dict[str, dict] = {}
        executable = [item for item in plan.items if item.effective_phase == 3]
        handed_off = [item for item in plan.items if item.effective_phase != 3]

        for item in handed_off:
            outcomes[item.source_app] = self._hand_off(item, plan, query_id)

        if executable:
            with ThreadPoolExecutor(max_workers=self.config.max_workers) as pool:
                futures = {
                    item.source_app: pool.submit(self._execute, item, plan, query_id)
                    for item in executable
                }
                for app, future in futures.items():
                    outcomes[app] = future.result()

        per_silo = [outcomes[item.source_app] for item in plan.items]
        per_silo += list(plan.skipped)

        records: list[CanonicalRecord] = []
        for outcome in per_silo:
            records.extend(outcome.pop("_records", []))
        merged = merge_sorted(records)

        self.audit.append(
            "query_executed",
            actor=hsapp_id,
            user_id=plan.user_id,
            details={
                "query_id": query_id,
                "domain": plan.domain,
                "metrics": list(plan.metrics),
                "start": format_utc(plan.start),
                "end": format_utc(plan.end),
                "silos": {
                    o["source_app"]: o.get("error", {}).get("code", "ok") for o in per_silo
                },
            },
        )
        return {
            "query_id": query_id,
            "domain": plan.domain,
            "start": format_utc(plan.start),
            "end": format_utc(plan.end),
            "records": [r.to_doc() for r in merged],
            "per_silo": per_silo,
        }

    def _mint(self, item: PlanItem, plan: Plan) -> str:
        return self.minter.mint(
            item.source_app,
            plan.domain,
            plan.start,
            plan.end,
            fee_waived=item.source_app in self.config.fee_waivers,
        )

    def _hand_off(self, item: PlanItem, plan: Plan, query_id: str) -> dict:
        """Phases 1 and 2: return executable material, never data."""
        token = self._mint(item, plan)
        if item.effective_phase == 1:
            return {
                "source_app": item.source_app,
                "phase": 1,
                "dab": phase1_view(item.entry.dab).to_doc(),
                "token": token,
            }
        bindings = {"credential": token}
        template = item.entry.dab.template
        if any(p.kind == "date_start" for p in template.parameters):
            bindings["date_start"] = format_utc(plan.start)
            bindings["date_end"] = format_utc(plan.end)
        return {
            "source_app": item.source_app,
            "phase": 2,
            "dab": item.entry.doc,
            "bindings": bindings,
        }

    def _execute(self, item: PlanItem, plan: Plan, query_id: str) -> dict:
        """Phase 3: the portal resolves the credential and runs the access."""
        dab = item.entry.dab
        try:
            credential = self.consent.resolve_credential(
                plan.user_id, item.source_app, purpose=query_id
            )
        except NoCredentialOnFile as exc:
            return _failure(item.source_app, exc.code, exc.message)

        bindings = {"credential": credential}
        if any(p.kind == "date_start" for p in dab.template.parameters):
            bindings["date_start"] = format_utc(plan.start)
            bindings["date_end"] = format_utc(plan.end)
        headers = {}
        waiver = self.config.fee_waivers.get(item.source_app)
        if waiver is not None:
            headers["X-Fee-Waiver"] = waiver
        try:
            records = fetch_records(
                _HeaderInjector(self.transport, headers) if headers else self.transport,
                dab,
                bindings,
                self.registry.catalog.get(dab.domain, dab.schema_version),
                plan.pseudonym,
            )
        except AccessError as exc:
            return _failure(item.source_app, exc.code, str(exc))
        records = filter_range(records, plan.start, plan.end)
        if plan.metrics:
            wanted = set(item.metrics)
            records = [r for r in records if r.metric in wanted]
        return {
            "source_app": item.source_app,
            "phase": 3,
            "records": [r.to_doc() for r in records],
            "_records": records,
        }


class _HeaderInjector:
    """Adds portal-held headers (fee waivers) to every outbound request."""

    def __init__(self, inner: Transport, headers: dict[str, str]):
        self._inner = inner
        self._headers = headers

    def send(self, request):
        from dataclasses import replace

        merged = dict(request.headers)
        merged.update(self._headers)
        return self._inner.send(replace(request, headers=merged))


def _failure(source_app: str, code: str, message: str) -> dict:
    return {"source_app": source_app, "error": {"code": code, "message": message}}
