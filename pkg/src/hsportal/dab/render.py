"""Render a query template into a concrete HTTP request.

Substitution is a single pass: placeholder syntax inside bound values is
inert, so rendering is total for any complete, well-typed binding set.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Mapping
from urllib.parse import quote

from ..timeutil import TimestampError, parse_utc
from .model import QueryTemplate

_PLACEHOLDER_RE = re.compile(r"\{([a-z_][a-z0-9_]*)\}")


class RenderError(ValueError):
    """Raised when bindings do not satisfy the template contract."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


@dataclass(frozen=True)
class ConcreteRequest:
    method: str
    url: str
    headers: Mapping[str, str] = field(default_factory=dict)
    body: str | None = None


def _substitute(text: str, bindings: Mapping[str, str], *, encode: bool) -> str:
    def replace(match: re.Match) -> str:
        name = match.group(1)
        if name not in bindings:
            raise RenderError(
                "undeclared-placeholder",
                f"template uses {{{name}}} which is not a declared parameter",
            )
        value = bindings[name]
        return quote(value, safe="") if encode else value

    return _PLACEHOLDER_RE.sub(replace, text)


def render_template(
    template: QueryTemplate, bindings: Mapping[str, str]
) -> ConcreteRequest:
    """Bind parameter values and produce the request to send.

    Bindings must cover the declared parameters exactly; date-kind values
    must be ISO 8601 UTC instants. URL substitutions are percent-encoded,
    header and body substitutions are verbatim.
    """
    if template.instruction is None:
        raise RenderError("not-executable", "template has no access instruction")
    declared = template.parameter_names()
    missing = declared - set(bindings)
    if missing:
        raise RenderError(
            "missing-binding", f"no value bound for: {', '.join(sorted(missing))}"
        )
    extra = set(bindings) - declared
    if extra:
        raise RenderError(
            "extra-binding", f"bindings for undeclared parameters: {', '.join(sorted(extra))}"
        )
    for param in template.parameters:
        value = bindings[param.name]
        if not isinstance(value, str):
            raise RenderError(
                "type-mismatch", f"binding {param.name!r} must be a string"
            )
        if param.kind in ("date_start", "date_end"):
            try:
                parse_utc(value)
            except TimestampError as exc:
                raise RenderError(
                    "type-mismatch", f"binding {param.name!r}: {exc}"
                ) from None

    instr = template.instruction
    url = _substitute(instr.url_template, bindings, encode=True)
    headers = {
        name: _substitute(value, bindings, encode=False)
        for name, value in instr.headers.items()
    }
    body = (
        _substitute(instr.body_template, bindings, encode=False)
        if instr.body_template is not None
        else None
    )
    return ConcreteRequest(method=instr.method, url=url, headers=headers, body=body)
