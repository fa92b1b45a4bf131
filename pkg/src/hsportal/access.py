"""Run one silo access end to end: render, send, paginate, map.

The portal's phase-3 executor and the SDK's phase-1/2 client share this
code path, which is what guarantees the same bytes yield the same
records no matter where execution happens.
"""

from __future__ import annotations

import json
from typing import Mapping

from .dab.model import DataAccessBlock, QueryTemplate
from .dab.render import RenderError, render_template
from .mapping import MappingError, PayloadSyntaxError, map_payload, parse_payload, resolve_path
from .mapping.tree import PathError
from .schema import CanonicalRecord, DomainSchema
from .transport import Transport, TransportError, TransportResponse

DEFAULT_PAGE_SIZE = 200
MAX_PAGES = 1000


class AccessError(Exception):
    """A silo access failed; ``code`` is the per-silo failure class."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def _send_with_retry(transport: Transport, request) -> TransportResponse:
    # one retry, connection-level failures only
    try:
        return transport.send(request)
    except TransportError:
        try:
            return transport.send(request)
        except TransportError as exc:
            raise AccessError("silo-unreachable", str(exc)) from None


def _raise_for_status(response: TransportResponse) -> None:
    if response.status == 200:
        return
    code_by_status = {
        401: "auth-failed",
        402: "fee-required",
        403: "scope-violation",
        404: "not-found",
        429: "rate-limited",
    }
    code = code_by_status.get(response.status, "silo-error")
    message = f"silo returned {response.status}"
    try:
        body = json.loads(response.body)
        if isinstance(body, dict):
            code = body.get("error", code)
            message = body.get("message", message)
    except (json.JSONDecodeError, UnicodeDecodeError):
        pass
    raise AccessError(code, message)


def fetch_pages(
    transport: Transport, template: QueryTemplate, bindings: Mapping[str, str]
) -> list[bytes]:
    """All payload pages for one access; handles cursor pagination."""
    instruction = template.instruction
    if instruction is None:
        raise AccessError("unsupported-phase", "document is descriptive only")
    pagination = instruction.pagination
    try:
        if pagination is None:
            response = _send_with_retry(transport, render_template(template, bindings))
            _raise_for_status(response)
            return [response.body]

        pages: list[bytes] = []
        cursor = ""
        for _ in range(MAX_PAGES):
            page_bindings = dict(bindings)
            page_bindings.setdefault(pagination.page_size_param, str(DEFAULT_PAGE_SIZE))
            page_bindings["cursor"] = cursor
            response = _send_with_retry(
                transport, render_template(template, page_bindings)
            )
            _raise_for_status(response)
            pages.append(response.body)
            tree = parse_payload(response.body, instruction.response_format)
            try:
                next_cursor = resolve_path(tree.root, pagination.cursor_field_path)
            except PathError:
                next_cursor = None
            if not next_cursor:
                return pages
            cursor = str(next_cursor)
        raise AccessError("pagination-loop", f"cursor never ended after {MAX_PAGES} pages")
    except RenderError as exc:
        raise AccessError("render-failed", str(exc)) from None
    except PayloadSyntaxError as exc:
        raise AccessError("mapping-failure", str(exc)) from None


def fetch_records(
    transport: Transport,
    dab: DataAccessBlock,
    bindings: Mapping[str, str],
    schema: DomainSchema,
    pseudonym: str,
) -> list[CanonicalRecord]:
    """Execute a DAB and map every page into canonical records."""
    if dab.mapping is None:
        raise AccessError("unsupported-phase", "document carries no mapping")
    pages = fetch_pages(transport, dab.template, bindings)
    records: list[CanonicalRecord] = []
    try:
        for page in pages:
            records.extend(
                map_payload(page, dab.mapping, schema, pseudonym, dab.source_app)
            )
    except (MappingError, PayloadSyntaxError) as exc:
        raise AccessError("mapping-failure", str(exc)) from None
    records.sort(key=lambda r: (r.timestamp, r.metric))
    seen = set()
    for record in records:
        identity = record.identity()
        if identity in seen:
            raise AccessError("mapping-failure", f"pages overlap at {identity}")
        seen.add(identity)
    return records
