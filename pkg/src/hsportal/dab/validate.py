"""Structural validation of DAB documents.

Validation never raises on bad input; every problem becomes a coded
violation with a pointer path so controllers can fix documents from the
report alone.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Any, Mapping

from ..schema import SchemaCatalog, default_catalog
from ..timeutil import TimestampError, parse_utc
from .model import (
    CONSTANT_KEYS,
    GRANULARITIES,
    MAPPING_TARGETS,
    METHODS,
    PARAM_KINDS,
    PHASES,
    RESPONSE_FORMATS,
)

_ID_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")
_PARAM_NAME_RE = re.compile(r"^[a-z_][a-z0-9_]*$")
_PLACEHOLDER_RE = re.compile(r"\{([a-z_][a-z0-9_]*)\}")

_TOP_KEYS = {
    "id",
    "source_app",
    "controller_id",
    "phase",
    "domain",
    "availability",
    "template",
    "mapping",
    "schema_version",
}
_TEMPLATE_KEYS = {
    "id",
    "domain",
    "metrics",
    "granularity",
    "parameters",
    "instruction",
    "description",
}
_EXEC_TEMPLATE_KEYS = _TEMPLATE_KEYS - {"description"}
_INSTRUCTION_KEYS = {
    "method",
    "url_template",
    "headers",
    "body_template",
    "response_format",
    "pagination",
}
_MAPPING_KEYS = {"response_format", "record_root", "entries", "constants"}


@dataclass(frozen=True)
class Violation:
    code: str
    path: str
    message: str

    def to_doc(self) -> dict:
        return {"code": self.code, "path": self.path, "message": self.message}


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def codes(self) -> set[str]:
        return {v.code for v in self.violations}

    def to_doc(self) -> dict:
        return {"ok": self.ok, "violations": [v.to_doc() for v in self.violations]}


def _is_str(value: Any) -> bool:
    return isinstance(value, str)


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _is_num(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


class _Checker:
    def __init__(self) -> None:
        self.violations: list[Violation] = []

    def add(self, code: str, path: str, message: str) -> None:
        self.violations.append(Violation(code, path, message))

    def unexpected_keys(self, obj: Mapping, allowed: set[str], path: str) -> None:
        for key in obj:
            if key not in allowed:
                self.add("unexpected-key", f"{path}/{key}", f"key {key!r} not allowed")

    def require(self, obj: Mapping, key: str, path: str) -> bool:
        if key not in obj or obj[key] is None:
            self.add("missing-field", f"{path}/{key}", f"{key!r} is mandatory")
            return False
        return True

    def require_str(self, obj: Mapping, key: str, path: str) -> str | None:
        if not self.require(obj, key, path):
            return None
        if not _is_str(obj[key]) or not obj[key]:
            self.add("invalid-value", f"{path}/{key}", "expected a non-empty string")
            return None
        return obj[key]

    def require_timestamp(self, obj: Mapping, key: str, path: str):
        raw = self.require_str(obj, key, path)
        if raw is None:
            return None
        try:
            return parse_utc(raw)
        except TimestampError as exc:
            self.add("bad-timestamp", f"{path}/{key}", str(exc))
            return None


def _placeholders(text: str) -> set[str]:
    return set(_PLACEHOLDER_RE.findall(text))


def _check_identifier(check: _Checker, doc: Mapping, key: str) -> None:
    value = check.require_str(doc, key, "")
    if value is not None and not _ID_RE.match(value):
        check.add("invalid-value", f"/{key}", f"{key!r} is not a valid identifier")


def _check_availability(
    check: _Checker, doc: Mapping, schema_metrics: set[str] | None
) -> list[str]:
    path = "/availability"
    if not check.require(doc, "availability", ""):
        return []
    avail = doc["availability"]
    if not isinstance(avail, Mapping):
        check.add("invalid-value", path, "expected an object")
        return []
    check.unexpected_keys(avail, {"metrics", "earliest", "latest"}, path)
    metrics: list[str] = []
    if check.require(avail, "metrics", path):
        raw = avail["metrics"]
        if not isinstance(raw, list) or not raw:
            check.add("bad-availability", f"{path}/metrics", "expected a non-empty list")
        else:
            for i, metric in enumerate(raw):
                if not _is_str(metric):
                    check.add("invalid-value", f"{path}/metrics/{i}", "expected a string")
                elif schema_metrics is not None and metric not in schema_metrics:
                    check.add(
                        "unknown-metric",
                        f"{path}/metrics/{i}",
                        f"metric {metric!r} not in domain schema",
                    )
                elif metric in metrics:
                    check.add(
                        "duplicate-entry", f"{path}/metrics/{i}", f"metric {metric!r} repeated"
                    )
                else:
                    metrics.append(metric)
    earliest = check.require_timestamp(avail, "earliest", path)
    latest = check.require_timestamp(avail, "latest", path)
    if earliest is not None and latest is not None and earliest > latest:
        check.add("bad-availability", path, "earliest is after latest")
    return metrics


def _check_parameters(check: _Checker, params: Any, granularity: str | None, path: str) -> set[str]:
    names: set[str] = set()
    kind_counts = {k: 0 for k in PARAM_KINDS}
    if not isinstance(params, list):
        check.add("invalid-value", path, "expected a list")
        return names
    for i, param in enumerate(params):
        ppath = f"{path}/{i}"
        if not isinstance(param, Mapping):
            check.add("invalid-value", ppath, "expected an object")
            continue
        check.unexpected_keys(param, {"name", "kind"}, ppath)
        name = check.require_str(param, "name", ppath)
        kind = check.require_str(param, "kind", ppath)
        if name is not None:
            if not _PARAM_NAME_RE.match(name):
                check.add("invalid-value", f"{ppath}/name", f"bad parameter name {name!r}")
            elif name in names:
                check.add("duplicate-entry", f"{ppath}/name", f"parameter {name!r} repeated")
            else:
                names.add(name)
        if kind is not None:
            if kind not in PARAM_KINDS:
                check.add("invalid-value", f"{ppath}/kind", f"unknown kind {kind!r}")
            else:
                kind_counts[kind] += 1
    if kind_counts["credential"] > 1:
        check.add("duplicate-entry", path, "more than one credential parameter")
    if granularity == "date_range":
        if kind_counts["date_start"] != 1 or kind_counts["date_end"] != 1:
            check.add(
                "date-params-mismatch",
                path,
                "date_range templates declare exactly one date_start and one date_end",
            )
    elif granularity == "full_history":
        if kind_counts["date_start"] or kind_counts["date_end"]:
            check.add(
                "date-params-mismatch",
                path,
                "full_history templates declare no date parameters",
            )
    return names


def _check_instruction(check: _Checker, instr: Any, path: str) -> tuple[str | None, set[str]]:
    """Returns (response_format, placeholders used)."""
    placeholders: set[str] = set()
    if not isinstance(instr, Mapping):
        check.add("invalid-value", path, "expected an object")
        return None, placeholders
    check.unexpected_keys(instr, _INSTRUCTION_KEYS, path)
    method = check.require_str(instr, "method", path)
    if method is not None and method not in METHODS:
        check.add("invalid-value", f"{path}/method", f"method must be one of {METHODS}")
    url = check.require_str(instr, "url_template", path)
    if url is not None:
        if not (url.startswith("http://") or url.startswith("https://")):
            check.add("invalid-value", f"{path}/url_template", "expected an http(s) URL")
        placeholders |= _placeholders(url)
    headers = instr.get("headers", {})
    if not isinstance(headers, Mapping):
        check.add("invalid-value", f"{path}/headers", "expected an object")
    else:
        for name, value in headers.items():
            if not _is_str(value):
                check.add("invalid-value", f"{path}/headers/{name}", "expected a string")
            else:
                placeholders |= _placeholders(value)
    body = instr.get("body_template")
    if body is not None:
        if not _is_str(body):
            check.add("invalid-value", f"{path}/body_template", "expected a string")
        else:
            placeholders |= _placeholders(body)
    response_format = check.require_str(instr, "response_format", path)
    if response_format is not None and response_format not in RESPONSE_FORMATS:
        check.add(
            "invalid-value",
            f"{path}/response_format",
            f"response_format must be one of {RESPONSE_FORMATS}",
        )
        response_format = None
    pagination = instr.get("pagination")
    if pagination is not None:
        ppath = f"{path}/pagination"
        if not isinstance(pagination, Mapping):
            check.add("invalid-value", ppath, "expected an object or null")
        else:
            check.unexpected_keys(
                pagination, {"cursor_field_path", "page_size_param"}, ppath
            )
            check.require_str(pagination, "cursor_field_path", ppath)
            check.require_str(pagination, "page_size_param", ppath)
    return response_format, placeholders


def _check_template(
    check: _Checker,
    doc: Mapping,
    domain: str | None,
    phase: int | None,
    schema_metrics: set[str] | None,
) -> tuple[list[str], str | None, bool]:
    """Returns (template metrics, instruction response_format, executable)."""
    path = "/template"
    if not check.require(doc, "template", ""):
        return [], None, False
    template = doc["template"]
    if not isinstance(template, Mapping):
        check.add("invalid-value", path, "expected an object")
        return [], None, False
    check.unexpected_keys(template, _TEMPLATE_KEYS, path)

    executable = any(k in template for k in _EXEC_TEMPLATE_KEYS)
    description = template.get("description")
    if description is not None and (not _is_str(description) or not description.strip()):
        check.add("invalid-value", f"{path}/description", "expected a non-empty string")
        description = None
    if phase == 1 and description is None:
        check.add(
            "missing-description",
            f"{path}/description",
            "phase 1 documents must describe access in prose",
        )
    if phase in (2, 3) and not executable:
        check.add(
            "missing-template",
            path,
            "phase 2 and 3 documents must carry an executable template",
        )
        return [], None, False
    if not executable:
        return [], None, False

    for key in ("id", "domain", "metrics", "granularity", "parameters", "instruction"):
        check.require(template, key, path)
    template_id = template.get("id")
    if template_id is not None and (not _is_str(template_id) or not _ID_RE.match(template_id)):
        check.add("invalid-value", f"{path}/id", "not a valid identifier")
    template_domain = template.get("domain")
    if template_domain is not None and domain is not None and template_domain != domain:
        check.add(
            "invalid-value",
            f"{path}/domain",
            f"template domain {template_domain!r} differs from document domain",
        )

    metrics: list[str] = []
    raw_metrics = template.get("metrics")
    if raw_metrics is not None:
        if not isinstance(raw_metrics, list) or not raw_metrics:
            check.add("invalid-value", f"{path}/metrics", "expected a non-empty list")
        else:
            for i, metric in enumerate(raw_metrics):
                if not _is_str(metric):
                    check.add("invalid-value", f"{path}/metrics/{i}", "expected a string")
                elif schema_metrics is not None and metric not in schema_metrics:
                    check.add(
                        "unknown-metric",
                        f"{path}/metrics/{i}",
                        f"metric {metric!r} not in domain schema",
                    )
                elif metric in metrics:
                    check.add(
                        "duplicate-entry", f"{path}/metrics/{i}", f"metric {metric!r} repeated"
                    )
                else:
                    metrics.append(metric)

    granularity = template.get("granularity")
    if granularity is not None and granularity not in GRANULARITIES:
        check.add(
            "invalid-value",
            f"{path}/granularity",
            f"granularity must be one of {GRANULARITIES}",
        )
        granularity = None

    declared = _check_parameters(
        check, template.get("parameters", []), granularity, f"{path}/parameters"
    )

    response_format = None
    if template.get("instruction") is not None:
        response_format, used = _check_instruction(
            check, template["instruction"], f"{path}/instruction"
        )
        for name in sorted(used - declared):
            check.add(
                "undeclared-placeholder",
                f"{path}/instruction",
                f"placeholder {{{name}}} is not a declared parameter",
            )
    return metrics, response_format, True


def _check_mapping(
    check: _Checker,
    doc: Mapping,
    phase: int | None,
    executable: bool,
    instruction_format: str | None,
    schema_metrics: set[str] | None,
    template_metrics: list[str],
) -> None:
    path = "/mapping"
    mapping = doc.get("mapping")
    if mapping is None:
        if phase in (2, 3):
            check.add(
                "missing-mapping", path, "phase 2 and 3 documents must carry a mapping"
            )
        return
    if not isinstance(mapping, Mapping):
        check.add("invalid-value", path, "expected an object")
        return
    if not executable:
        check.add("invalid-value", path, "mapping requires an executable template")
    check.unexpected_keys(mapping, _MAPPING_KEYS, path)

    response_format = check.require_str(mapping, "response_format", path)
    if response_format is not None:
        if response_format not in RESPONSE_FORMATS:
            check.add(
                "invalid-value",
                f"{path}/response_format",
                f"response_format must be one of {RESPONSE_FORMATS}",
            )
        elif instruction_format is not None and response_format != instruction_format:
            check.add(
                "format-mismatch",
                f"{path}/response_format",
                f"mapping parses {response_format} but the instruction yields {instruction_format}",
            )

    if check.require(mapping, "record_root", path):
        root = mapping["record_root"]
        if not _is_str(root):
            check.add("invalid-value", f"{path}/record_root", "expected a string")
        elif response_format == "txt":
            try:
                compiled = re.compile(root)
            except re.error as exc:
                check.add("invalid-value", f"{path}/record_root", f"bad regex: {exc}")
            else:
                if not compiled.groupindex:
                    check.add(
                        "invalid-value",
                        f"{path}/record_root",
                        "txt record_root regex needs named groups",
                    )
        elif root != "" and not root.startswith("/"):
            check.add(
                "invalid-value",
                f"{path}/record_root",
                "record_root is a pointer: empty or starting with '/'",
            )

    targets_seen: set[str] = set()
    entries = mapping.get("entries")
    if not isinstance(entries, list) or not entries:
        check.add("missing-field", f"{path}/entries", "expected a non-empty list")
        entries = []
    for i, entry in enumerate(entries):
        epath = f"{path}/entries/{i}"
        if not isinstance(entry, Mapping):
            check.add("invalid-value", epath, "expected an object")
            continue
        check.unexpected_keys(entry, {"path", "target", "scale", "offset"}, epath)
        check.require_str(entry, "path", epath)
        target = check.require_str(entry, "target", epath)
        if target is not None:
            if target not in MAPPING_TARGETS:
                check.add(
                    "invalid-value",
                    f"{epath}/target",
                    f"target must be one of {MAPPING_TARGETS}",
                )
            elif target in targets_seen:
                check.add("duplicate-entry", f"{epath}/target", f"target {target!r} repeated")
            else:
                targets_seen.add(target)
        has_conversion = "scale" in entry or "offset" in entry
        if has_conversion and target is not None and target != "value":
            check.add(
                "invalid-value", epath, "scale/offset only apply to the value target"
            )
        if "scale" in entry:
            if not _is_num(entry["scale"]):
                check.add("invalid-value", f"{epath}/scale", "expected a number")
            elif entry["scale"] == 0:
                check.add(
                    "non-invertible-conversion",
                    f"{epath}/scale",
                    "scale 0 destroys the source value",
                )
        if "offset" in entry and not _is_num(entry["offset"]):
            check.add("invalid-value", f"{epath}/offset", "expected a number")

    constants = mapping.get("constants", {})
    if not isinstance(constants, Mapping):
        check.add("invalid-value", f"{path}/constants", "expected an object")
        constants = {}
    check.unexpected_keys(constants, set(CONSTANT_KEYS), f"{path}/constants")
    constant_metric = constants.get("metric")
    if constant_metric is not None:
        if not _is_str(constant_metric):
            check.add("invalid-value", f"{path}/constants/metric", "expected a string")
        elif schema_metrics is not None and constant_metric not in schema_metrics:
            check.add(
                "unknown-metric",
                f"{path}/constants/metric",
                f"metric {constant_metric!r} not in domain schema",
            )
        elif template_metrics and constant_metric not in template_metrics:
            check.add(
                "invalid-value",
                f"{path}/constants/metric",
                "constant metric is not offered by the template",
            )
        if "metric" in targets_seen:
            check.add(
                "duplicate-entry",
                f"{path}/constants/metric",
                "metric is produced by both an entry and a constant",
            )
    if "utc_offset_minutes" in constants and not _is_int(constants["utc_offset_minutes"]):
        check.add(
            "invalid-value", f"{path}/constants/utc_offset_minutes", "expected an integer"
        )

    if "timestamp" not in targets_seen:
        check.add("missing-field", f"{path}/entries", "no entry produces the timestamp")
    if "value" not in targets_seen:
        check.add("missing-field", f"{path}/entries", "no entry produces the value")
    if "metric" not in targets_seen and constant_metric is None:
        check.add(
            "missing-field", path, "metric must come from an entry or a constant"
        )


def validate_dab(
    raw: bytes | str | Mapping, catalog: SchemaCatalog | None = None
) -> ValidationReport:
    """Validate a DAB document given as JSON bytes/text or a decoded object."""
    catalog = catalog or default_catalog()
    check = _Checker()

    if isinstance(raw, (bytes, str)):
        try:
            doc = json.loads(raw)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            check.add("malformed-encoding", "", f"not valid JSON: {exc}")
            return ValidationReport(tuple(check.violations))
    else:
        doc = raw
    if not isinstance(doc, Mapping):
        check.add("malformed-encoding", "", "top level must be a JSON object")
        return ValidationReport(tuple(check.violations))

    check.unexpected_keys(doc, _TOP_KEYS, "")
    for key in ("id", "source_app", "controller_id"):
        _check_identifier(check, doc, key)

    phase = None
    if check.require(doc, "phase", ""):
        if not _is_int(doc["phase"]) or doc["phase"] not in PHASES:
            check.add("bad-phase", "/phase", f"phase must be one of {PHASES}")
        else:
            phase = doc["phase"]

    domain = check.require_str(doc, "domain", "")
    schema_metrics: set[str] | None = None
    if domain is not None:
        latest = catalog.latest(domain)
        if latest is None:
            check.add("unknown-domain", "/domain", f"no schema for domain {domain!r}")
        else:
            schema_metrics = set(latest.metrics)

    if check.require(doc, "schema_version", ""):
        version = doc["schema_version"]
        if not _is_int(version) or version < 1:
            check.add("invalid-value", "/schema_version", "expected a positive integer")
        elif domain is not None and schema_metrics is not None:
            schema = catalog.get(domain, version)
            if schema is None:
                check.add(
                    "invalid-value",
                    "/schema_version",
                    f"domain {domain!r} has no schema version {version}",
                )
            else:
                schema_metrics = set(schema.metrics)

    avail_metrics = _check_availability(check, doc, schema_metrics)
    template_metrics, instruction_format, executable = _check_template(
        check, doc, domain, phase, schema_metrics
    )
    if executable and template_metrics:
        for metric in avail_metrics:
            if metric not in template_metrics:
                check.add(
                    "invalid-value",
                    "/availability/metrics",
                    f"metric {metric!r} is not offered by the template",
                )
    _check_mapping(
        check, doc, phase, executable, instruction_format, schema_metrics, template_metrics
    )
    return ValidationReport(tuple(check.violations))
