"""Developer-side client: one call returns normalized records no matter
which phase each silo is at.

Phase-3 entries arrive as ready records. For phase-2 and phase-1 entries
the client renders the returned document and executes it against the silo
itself, then runs the exact same mapping code the portal uses, so the
result multiset cannot depend on the phase mix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime
from typing import Any

import httpx

from .access import AccessError, fetch_records
from .dab import decode_dab
from .errors import ConsentDenied, MalformedRequest, NoDesignation, PortalError
from .mapping import filter_range
from .schema import CanonicalRecord, SchemaCatalog, default_catalog, merge_sorted
from .timeutil import format_utc, parse_utc
from .transport import HttpTransport, Transport


class SdkError(Exception):
    code = "sdk-error"

    def __init__(self, message: str, *, code: str | None = None):
        super().__init__(message)
        if code is not None:
            self.code = code


class PortalUnreachable(SdkError):
    code = "unreachable-portal"


class InvalidToken(SdkError):
    code = "invalid-token"


@dataclass
class QueryOutcome:
    """Success-with-failures shape; partial results are not exceptions."""

    records: list[CanonicalRecord]
    failures: list[dict]
    phases: dict[str, int] = field(default_factory=dict)


@dataclass
class UserHandle:
    endpoint: str
    token: str
    pseudonym: str
    _http: Any
    _silos: Transport
    _catalog: SchemaCatalog

    def close(self) -> None:
        close = getattr(self._http, "close", None)
        if close is not None:
            close()


def _raise_for_error(response) -> dict:
    try:
        doc = response.json()
    except ValueError:
        doc = {}
    code = doc.get("error", "portal-error")
    message = doc.get("message", f"portal returned status {response.status_code}")
    if code == "consent-denied":
        raise ConsentDenied(message)
    if code == "no-designation":
        raise NoDesignation(message)
    if code == "malformed-request":
        raise MalformedRequest(message, fields=doc.get("fields"))
    if response.status_code == 401:
        raise InvalidToken(message)
    raise PortalError(message, code=code)


def create_user_handle(
    endpoint: str,
    developer_token: str,
    pseudonym: str,
    *,
    http_client: Any | None = None,
    silo_transport: Transport | None = None,
    catalog: SchemaCatalog | None = None,
) -> UserHandle:
    """Validate the triple with a portal ping and return a live handle."""
    http = http_client if http_client is not None else httpx.Client(base_url=endpoint)
    headers = {"Authorization": f"Bearer {developer_token}"}
    try:
        response = http.request("GET", "/v1/ping", headers=headers)
    except httpx.HTTPError as exc:
        raise PortalUnreachable(str(exc)) from None
    if response.status_code == 401:
        raise InvalidToken("portal rejected the developer token")
    if response.status_code != 200:
        raise PortalUnreachable(f"ping returned status {response.status_code}")
    principal = response.json().get("principal", {})
    if principal.get("kind") != "hsapp":
        raise InvalidToken("token does not belong to a developer")
    return UserHandle(
        endpoint=endpoint,
        token=developer_token,
        pseudonym=pseudonym,
        _http=http,
        _silos=silo_transport if silo_transport is not None else HttpTransport(),
        _catalog=catalog or default_catalog(),
    )


def _post_query(handle: UserHandle, body: dict) -> dict:
    try:
        response = handle._http.request(
            "POST",
            "/v1/query",
            json=body,
            headers={"Authorization": f"Bearer {handle.token}"},
        )
    except httpx.HTTPError as exc:
        raise PortalUnreachable(str(exc)) from None
    if response.status_code != 200:
        _raise_for_error(response)
    return response.json()


def _run_locally(
    handle: UserHandle, entry: dict, start: datetime, end: datetime
) -> list[CanonicalRecord]:
    dab = decode_dab(entry["dab"])
    if entry["phase"] == 2:
        bindings = dict(entry["bindings"])
    else:
        bindings = {"credential": entry["token"]}
        if any(p.kind == "date_start" for p in dab.template.parameters):
            bindings["date_start"] = format_utc(start)
            bindings["date_end"] = format_utc(end)
    schema = handle._catalog.get(dab.domain, dab.schema_version)
    if schema is None:
        raise AccessError("mapping-failure", f"no schema for {dab.domain} v{dab.schema_version}")
    return fetch_records(handle._silos, dab, bindings, schema, handle.pseudonym)


def query_function(
    handle: UserHandle,
    domain: str,
    metrics: tuple[str, ...] | list[str] = (),
    start: str | datetime | None = None,
    end: str | datetime | None = None,
    phase: int | None = None,
) -> QueryOutcome:
    """Query one life domain; output is invariant to each silo's phase."""
    body: dict[str, Any] = {"pseudonym": handle.pseudonym, "domain": domain}
    if metrics:
        body["metrics"] = list(metrics)
    if start is not None:
        body["start"] = start if isinstance(start, str) else format_utc(start)
    if end is not None:
        body["end"] = end if isinstance(end, str) else format_utc(end)
    if phase is not None:
        body["phase"] = phase
    result = _post_query(handle, body)

    effective_start = parse_utc(result["start"])
    effective_end = parse_utc(result["end"])
    records = [CanonicalRecord.from_doc(doc) for doc in result["records"]]
    failures: list[dict] = []
    phases: dict[str, int] = {}
    for entry in result["per_silo"]:
        app = entry["source_app"]
        if "error" in entry:
            failures.append(entry)
            continue
        phases[app] = entry["phase"]
        if entry["phase"] == 3:
            continue  # already merged by the portal
        try:
            fetched = _run_locally(handle, entry, effective_start, effective_end)
        except AccessError as exc:
            failures.append({"source_app": app, "error": {"code": exc.code, "message": str(exc)}})
            continue
        fetched = filter_range(fetched, effective_start, effective_end)
        if metrics:
            wanted = set(metrics)
            fetched = [r for r in fetched if r.metric in wanted]
        records.extend(fetched)
    return QueryOutcome(records=merge_sorted(records), failures=failures, phases=phases)


def list_availability(handle: UserHandle, domain: str) -> list[dict]:
    """Declared metrics and windows per designated silo; no data values."""
    result = _post_query(handle, {"pseudonym": handle.pseudonym, "domain": domain, "phase": 1})
    summaries = []
    for entry in result["per_silo"]:
        if "error" in entry:
            summaries.append(
                {"source_app": entry["source_app"], "error": entry["error"]}
            )
            continue
        dab = entry["dab"]
        summaries.append(
            {
                "source_app": entry["source_app"],
                "metrics": list(dab["availability"]["metrics"]),
                "earliest": dab["availability"]["earliest"],
                "latest": dab["availability"]["latest"],
                "description": dab["template"].get("description", ""),
            }
        )
    return summaries
