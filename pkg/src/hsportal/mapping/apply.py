"""Apply a field mapping to a parsed payload, yielding canonical records.

The same functions run inside the portal (phase 3) and inside the SDK
(phases 1 and 2); record equality across phases falls out of that.
"""

from __future__ import annotations

import re
from datetime import datetime
from typing import Any

from ..dab.model import FieldMapping, MappingEntry
from ..schema import CanonicalRecord, DomainSchema, NUMERIC
from ..timeutil import TimestampError, parse_naive_local, parse_utc
from .tree import ParsedTree, PathError, parse_payload, resolve_path


class MappingError(ValueError):
    """Mapping application failed; ``code`` names the failure class."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def _entry_path(entry: MappingEntry) -> str:
    return entry.path if entry.path.startswith("/") else "/" + entry.path


def _resolve_entry(node: Any, entry: MappingEntry, index: int) -> Any:
    try:
        return resolve_path(node, _entry_path(entry))
    except PathError as exc:
        raise MappingError(
            "path-not-found", f"record {index}: {entry.target} entry: {exc}"
        ) from None


def _record_nodes(tree: ParsedTree, mapping: FieldMapping) -> list[Any]:
    if mapping.response_format == "txt":
        if not isinstance(tree.root, list):
            raise MappingError("record-root-not-found", "txt tree must be lines")
        pattern = re.compile(mapping.record_root)
        # Lines that do not match the record shape (banners, system
        # notices) are skipped, not errors.
        return [
            match.groupdict()
            for line in tree.root
            if (match := pattern.match(line)) is not None
        ]
    try:
        root = resolve_path(tree.root, mapping.record_root)
    except PathError as exc:
        raise MappingError("record-root-not-found", str(exc)) from None
    if not isinstance(root, list):
        raise MappingError(
            "record-root-not-a-sequence",
            f"record_root {mapping.record_root!r} is not a sequence",
        )
    return root


def _parse_timestamp(raw: Any, constants: dict, index: int) -> datetime:
    if not isinstance(raw, str):
        raise MappingError("bad-timestamp", f"record {index}: timestamp must be a string")
    try:
        if "utc_offset_minutes" in constants:
            return parse_naive_local(raw, constants["utc_offset_minutes"])
        return parse_utc(raw)
    except TimestampError as exc:
        raise MappingError("bad-timestamp", f"record {index}: {exc}") from None


def _parse_value(
    raw: Any, entry: MappingEntry, numeric: bool, index: int
) -> float | str:
    if numeric:
        if isinstance(raw, bool) or not isinstance(raw, (int, float, str)):
            raise MappingError(
                "conversion-error", f"record {index}: value {raw!r} is not numeric"
            )
        try:
            value = float(raw)
        except ValueError:
            raise MappingError(
                "conversion-error", f"record {index}: value {raw!r} is not numeric"
            ) from None
        if entry.has_conversion:
            value = value * (entry.scale if entry.scale is not None else 1.0) + (
                entry.offset if entry.offset is not None else 0.0
            )
        return value
    if entry.has_conversion:
        raise MappingError(
            "conversion-error", f"record {index}: text metrics take no conversion"
        )
    if not isinstance(raw, str):
        raise MappingError(
            "conversion-error", f"record {index}: value {raw!r} is not text"
        )
    return raw


def apply_mapping(
    tree: ParsedTree,
    mapping: FieldMapping,
    schema: DomainSchema,
    pseudonym: str,
    source_app: str,
) -> list[CanonicalRecord]:
    """Translate a parsed payload into sorted canonical records.

    One record per node under ``record_root``; duplicate identities are a
    hard error because a silo never exports two values for one instant.
    """
    constants = dict(mapping.constants)
    ts_entry = mapping.entry_for("timestamp")
    value_entry = mapping.entry_for("value")
    metric_entry = mapping.entry_for("metric")
    if ts_entry is None or value_entry is None:
        raise MappingError("missing-entry", "mapping lacks timestamp or value entry")

    records: list[CanonicalRecord] = []
    for index, node in enumerate(_record_nodes(tree, mapping)):
        if metric_entry is not None:
            metric = _resolve_entry(node, metric_entry, index)
        else:
            metric = constants.get("metric")
        if not isinstance(metric, str):
            raise MappingError("unknown-metric", f"record {index}: metric {metric!r}")
        spec = schema.metric(metric)
        if spec is None:
            raise MappingError(
                "unknown-metric",
                f"record {index}: metric {metric!r} not in {schema.domain} schema",
            )
        timestamp = _parse_timestamp(_resolve_entry(node, ts_entry, index), constants, index)
        value = _parse_value(
            _resolve_entry(node, value_entry, index),
            value_entry,
            spec.value_kind == NUMERIC,
            index,
        )
        records.append(
            CanonicalRecord(
                pseudonym=pseudonym,
                source_app=source_app,
                metric=metric,
                timestamp=timestamp,
                value=value,
                unit=spec.unit,
            )
        )

    records.sort(key=lambda r: (r.timestamp, r.metric))
    seen: set[tuple] = set()
    for record in records:
        identity = record.identity()
        if identity in seen:
            raise MappingError("duplicate-record", f"duplicate identity {identity}")
        seen.add(identity)
    return records


def map_payload(
    payload: bytes,
    mapping: FieldMapping,
    schema: DomainSchema,
    pseudonym: str,
    source_app: str,
) -> list[CanonicalRecord]:
    """Parse-and-map convenience used by both the portal and the SDK."""
    tree = parse_payload(payload, mapping.response_format)
    return apply_mapping(tree, mapping, schema, pseudonym, source_app)


def filter_range(
    records: list[CanonicalRecord], start: datetime, end: datetime
) -> list[CanonicalRecord]:
    """Keep records with ``start <= timestamp <= end``, order preserved."""
    return [r for r in records if start <= r.timestamp <= end]
