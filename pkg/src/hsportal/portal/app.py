"""HTTP face of the portal: developer queries, controller registration,
user consent management, and the per-user audit view.

Bodies are parsed as plain dicts and validated by hand so every failure
path lands in the shared error shape; no endpoint can produce an empty
500. Responses served to developer principals are recorded byte-for-byte
on the state object so tests can scan them for secret leakage.
"""

from __future__ import annotations

import base64
import binascii
import json
from datetime import datetime
from typing import Any

from fastapi import Body, FastAPI, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from .. import __version__
from ..dab import phase1_view
from ..errors import MalformedRequest, NotOwner, PortalError
from ..federation import FederatedQuery
from ..registry import InvalidDab
from ..timeutil import TimestampError, parse_utc
from .state import ApiPrincipal, PortalState

AUDIT_PAGE_SIZE = 50

STATUS_BY_CODE = {
    "malformed-request": 400,
    "unauthorized": 401,
    "invalid-token": 401,
    "authorization-failed": 403,
    "not-owner": 403,
    "consent-denied": 403,
    "no-designation": 404,
    "grant-not-found": 404,
    "unknown-user": 404,
    "unknown-controller": 404,
    "dab-not-found": 404,
    "no-credential-on-file": 404,
    "duplicate-grant": 409,
    "duplicate-controller": 409,
    "invalid-dab": 422,
    "unknown-source-app": 422,
    "unknown-hsapp": 422,
}


def _error_doc(exc: PortalError) -> dict:
    doc: dict[str, Any] = {"error": exc.code, "message": exc.message}
    if isinstance(exc, MalformedRequest) and exc.fields:
        doc["fields"] = exc.fields
    if isinstance(exc, InvalidDab):
        doc["report"] = exc.report.to_doc()
    grant_id = getattr(exc, "grant_id", None)
    if grant_id is not None:
        doc["grant_id"] = grant_id
    return doc


def _require_str(body: dict, name: str) -> str:
    value = body.get(name)
    if not isinstance(value, str) or not value.strip():
        raise MalformedRequest(
            f"field {name!r} is required", fields={name: "expected a non-empty string"}
        )
    return value


def _optional_ts(body: dict, name: str) -> datetime | None:
    value = body.get(name)
    if value is None:
        return None
    if not isinstance(value, str):
        raise MalformedRequest(
            f"field {name!r} must be a UTC timestamp string",
            fields={name: "expected an ISO-8601 UTC string"},
        )
    try:
        return parse_utc(value)
    except TimestampError as exc:
        raise MalformedRequest(
            f"field {name!r} is not a valid timestamp", fields={name: str(exc)}
        ) from None


def _optional_str_list(body: dict, name: str) -> tuple[str, ...]:
    value = body.get(name)
    if value is None:
        return ()
    if not isinstance(value, list) or any(not isinstance(v, str) for v in value):
        raise MalformedRequest(
            f"field {name!r} must be a list of strings",
            fields={name: "expected a list of strings"},
        )
    return tuple(value)


def _optional_phase(body: dict) -> int | None:
    value = body.get("phase")
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, int) or value not in (1, 2, 3):
        raise MalformedRequest(
            "field 'phase' must be 1, 2, or 3", fields={"phase": "expected 1, 2, or 3"}
        )
    return value


def _encode_cursor(seq: int) -> str:
    return base64.urlsafe_b64encode(f"before:{seq}".encode()).decode()


def _decode_cursor(cursor: str) -> int:
    try:
        text = base64.urlsafe_b64decode(cursor.encode()).decode()
        label, _, seq = text.partition(":")
        if label != "before":
            raise ValueError(text)
        return int(seq)
    except (ValueError, binascii.Error, UnicodeDecodeError):
        raise MalformedRequest(
            "unrecognized cursor", fields={"cursor": "opaque value from a previous page"}
        ) from None


def create_app(state: PortalState) -> FastAPI:
    app = FastAPI(title="hsportal", version=__version__, docs_url=None, redoc_url=None)
    app.state.portal = state

    def me(request: Request) -> ApiPrincipal:
        principal = state.authenticate(request.headers.get("Authorization"))
        if principal is None:
            raise PortalError("bearer token missing or unknown", code="unauthorized")
        if principal.kind == "hsapp":
            request.state.developer = True
        return principal

    def own_user(request: Request, user_id: str) -> ApiPrincipal:
        principal = me(request).require("user")
        if principal.id != user_id:
            raise NotOwner("token does not belong to this user")
        return principal

    def reply(request: Request, doc: dict, status: int = 200) -> Response:
        payload = json.dumps(doc).encode()
        if getattr(request.state, "developer", False):
            state.record(request.url.path, payload)
        return Response(payload, status_code=status, media_type="application/json")

    @app.exception_handler(PortalError)
    async def portal_error(request: Request, exc: PortalError):
        payload = json.dumps(_error_doc(exc)).encode()
        if getattr(request.state, "developer", False):
            state.record(request.url.path, payload)
        return Response(
            payload,
            status_code=STATUS_BY_CODE.get(exc.code, 500),
            media_type="application/json",
        )

    @app.exception_handler(RequestValidationError)
    async def invalid_request(request: Request, exc: RequestValidationError):
        return JSONResponse(
            {"error": "malformed-request", "message": "body must be a JSON object"},
            status_code=400,
        )

    @app.exception_handler(Exception)
    async def unhandled(request: Request, exc: Exception):
        return JSONResponse(
            {"error": "internal", "message": "unexpected portal failure"}, status_code=500
        )

    # -- health ----------------------------------------------------------

    @app.get("/v1/ping")
    def ping(request: Request) -> Response:
        principal = me(request)
        return reply(
            request,
            {
                "service": "hsportal",
                "version": __version__,
                "principal": {"kind": principal.kind, "id": principal.id},
            },
        )

    # -- developer queries -------------------------------------------------

    @app.post("/v1/query")
    def query(request: Request, body: dict = Body(...)) -> Response:
        principal = me(request).require("hsapp")
        federated = FederatedQuery(
            pseudonym=_require_str(body, "pseudonym"),
            domain=_require_str(body, "domain"),
            metrics=_optional_str_list(body, "metrics"),
            start=_optional_ts(body, "start"),
            end=_optional_ts(body, "end"),
            phase=_optional_phase(body),
        )
        if (
            federated.start is not None
            and federated.end is not None
            and federated.start > federated.end
        ):
            raise MalformedRequest(
                "range start is after end", fields={"start": "must not exceed 'end'"}
            )
        result = state.engine.query(principal.id, federated)
        return reply(request, result)

    @app.get("/v1/dabs")
    def list_dabs(request: Request, domain: str = "", source_app: str = "") -> Response:
        me(request)
        if not domain:
            raise MalformedRequest(
                "query parameter 'domain' is required",
                fields={"domain": "expected a domain name"},
            )
        entries = state.registry.lookup(
            domain, source_apps=[source_app] if source_app else None
        )
        return reply(
            request,
            {
                "domain": domain,
                "dabs": [
                    {
                        "source_app": entry.dab.source_app,
                        "dab_id": entry.dab.id,
                        "version": entry.version,
                        "phase": entry.dab.phase,
                        "dab": phase1_view(entry.dab).to_doc(),
                    }
                    for entry in entries
                ],
            },
        )

    @app.get("/v1/callbacks")
    def callbacks(request: Request) -> Response:
        principal = me(request).require("hsapp")
        return reply(request, {"callbacks": state.consent.callbacks_for(principal.id)})

    # -- controller registration -------------------------------------------

    @app.post("/v1/controllers/{controller_id}/dabs")
    def register_dab(
        request: Request, controller_id: str, body: dict = Body(...)
    ) -> Response:
        principal = me(request).require("controller")
        if principal.id != controller_id:
            raise NotOwner("api key does not belong to this controller")
        entry = state.registry.register_dab(controller_id, body)
        state.audit.append(
            "register_dab",
            actor=controller_id,
            details={
                "source_app": entry.dab.source_app,
                "dab_id": entry.dab.id,
                "version": entry.version,
            },
        )
        return reply(
            request,
            {
                "source_app": entry.dab.source_app,
                "dab_id": entry.dab.id,
                "version": entry.version,
                "status": "active",
            },
            status=201,
        )

    @app.delete("/v1/controllers/{controller_id}/dabs/{source_app}/{dab_id}/{version}")
    def deprecate_dab(
        request: Request, controller_id: str, source_app: str, dab_id: str, version: int
    ) -> Response:
        principal = me(request).require("controller")
        if principal.id != controller_id:
            raise NotOwner("api key does not belong to this controller")
        state.registry.deprecate(controller_id, source_app, dab_id, version)
        return reply(
            request,
            {"source_app": source_app, "dab_id": dab_id, "version": version, "status": "deprecated"},
        )

    # -- user consent --------------------------------------------------------

    @app.post("/v1/users/{user_id}/designations")
    def designate(request: Request, user_id: str, body: dict = Body(...)) -> Response:
        own_user(request, user_id)
        domain = _require_str(body, "domain")
        apps = _optional_str_list(body, "source_apps")
        known = state.registry.known_source_apps()
        designated = state.consent.designate_sources(
            user_id, domain, list(apps), known_apps=lambda a: a in known
        )
        return reply(request, {"domain": domain, "source_apps": list(designated)})

    @app.get("/v1/users/{user_id}/designations")
    def designations(request: Request, user_id: str) -> Response:
        own_user(request, user_id)
        listing = state.consent.designations_for(user_id)
        return reply(
            request,
            {"designations": {domain: list(apps) for domain, apps in sorted(listing.items())}},
        )

    @app.post("/v1/users/{user_id}/credentials")
    def store_credential(request: Request, user_id: str, body: dict = Body(...)) -> Response:
        own_user(request, user_id)
        source_app = _require_str(body, "source_app")
        state.consent.set_credential(user_id, source_app, _require_str(body, "credential"))
        return reply(request, {"source_app": source_app, "status": "stored"})

    @app.post("/v1/users/{user_id}/grants")
    def grant(request: Request, user_id: str, body: dict = Body(...)) -> Response:
        own_user(request, user_id)
        hsapp_id = _require_str(body, "hsapp_id")
        created = state.consent.grant_access(
            user_id,
            hsapp_id,
            _require_str(body, "domain"),
            _optional_ts(body, "start"),
            _optional_ts(body, "end"),
        )
        doc = created.to_doc()
        doc["pseudonym"] = state.consent.pseudonym_for(user_id, hsapp_id)
        return reply(request, doc, status=201)

    @app.get("/v1/users/{user_id}/grants")
    def grants(request: Request, user_id: str) -> Response:
        own_user(request, user_id)
        return reply(
            request, {"grants": [g.to_doc() for g in state.consent.grants_for(user_id)]}
        )

    @app.delete("/v1/users/{user_id}/grants/{grant_id}")
    def revoke(request: Request, user_id: str, grant_id: str) -> Response:
        own_user(request, user_id)
        revoked = state.consent.revoke_grant(user_id, grant_id)
        return reply(request, revoked.to_doc())

    @app.get("/v1/users/{user_id}/audit")
    def audit_view(request: Request, user_id: str, cursor: str = "") -> Response:
        own_user(request, user_id)
        events = state.audit.events(user_id)
        events.reverse()  # newest first
        if cursor:
            before = _decode_cursor(cursor)
            events = [e for e in events if e.seq < before]
        page = events[:AUDIT_PAGE_SIZE]
        next_cursor = (
            _encode_cursor(page[-1].seq) if len(events) > AUDIT_PAGE_SIZE else None
        )
        return reply(
            request,
            {"events": [e.to_doc() for e in page], "next_cursor": next_cursor},
        )

    return app
