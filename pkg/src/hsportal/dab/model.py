"""Data Access Block model.

A DAB is the unit a data controller registers with the portal: where a
silo's export lives, how to call it, and how to map the native payload
into canonical records. Phase 1 documents only describe access in prose;
phase 2 documents are executable by the querying app; phase 3 documents
are additionally blessed for execution by the portal itself.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from datetime import datetime
from typing import Any, Mapping

from ..timeutil import format_utc, parse_utc

RESPONSE_FORMATS = ("csv", "json", "xml", "txt")
GRANULARITIES = ("date_range", "full_history")
PARAM_KINDS = ("credential", "date_start", "date_end", "public")
PHASES = (1, 2, 3)
METHODS = ("GET", "POST")

MAPPING_TARGETS = ("timestamp", "value", "metric")
CONSTANT_KEYS = ("metric", "utc_offset_minutes")


@dataclass(frozen=True)
class Pagination:
    cursor_field_path: str  # where the next-page cursor sits in a response page
    page_size_param: str  # request parameter carrying the page size

    def to_doc(self) -> dict:
        return {
            "cursor_field_path": self.cursor_field_path,
            "page_size_param": self.page_size_param,
        }


@dataclass(frozen=True)
class AccessInstruction:
    method: str
    url_template: str
    headers: Mapping[str, str] = field(default_factory=dict)
    body_template: str | None = None
    response_format: str = "json"
    pagination: Pagination | None = None

    def to_doc(self) -> dict:
        doc: dict[str, Any] = {
            "method": self.method,
            "url_template": self.url_template,
            "headers": dict(self.headers),
            "response_format": self.response_format,
        }
        if self.body_template is not None:
            doc["body_template"] = self.body_template
        if self.pagination is not None:
            doc["pagination"] = self.pagination.to_doc()
        return doc


@dataclass(frozen=True)
class TemplateParameter:
    name: str
    kind: str  # one of PARAM_KINDS

    def to_doc(self) -> dict:
        return {"name": self.name, "kind": self.kind}


@dataclass(frozen=True)
class QueryTemplate:
    """Parameterized request recipe plus what it yields.

    ``granularity`` declares the silo's retrieval model: date_range
    exports accept a window, full_history exports always dump everything.
    """

    id: str
    domain: str
    metrics: tuple[str, ...]
    granularity: str
    parameters: tuple[TemplateParameter, ...]
    instruction: AccessInstruction | None
    description: str | None = None

    def parameter_names(self) -> set[str]:
        return {p.name for p in self.parameters}

    def parameters_of_kind(self, kind: str) -> list[TemplateParameter]:
        return [p for p in self.parameters if p.kind == kind]

    @property
    def executable(self) -> bool:
        return self.instruction is not None

    def to_doc(self) -> dict:
        doc: dict[str, Any] = {}
        if self.description is not None:
            doc["description"] = self.description
        if self.instruction is None:
            return doc
        doc.update(
            {
                "id": self.id,
                "domain": self.domain,
                "metrics": list(self.metrics),
                "granularity": self.granularity,
                "parameters": [p.to_doc() for p in self.parameters],
                "instruction": self.instruction.to_doc(),
            }
        )
        return doc


@dataclass(frozen=True)
class MappingEntry:
    path: str  # pointer into one record node (regex group name for txt)
    target: str  # one of MAPPING_TARGETS
    scale: float | None = None
    offset: float | None = None

    @property
    def has_conversion(self) -> bool:
        return self.scale is not None or self.offset is not None

    def to_doc(self) -> dict:
        doc: dict[str, Any] = {"path": self.path, "target": self.target}
        if self.scale is not None:
            doc["scale"] = self.scale
        if self.offset is not None:
            doc["offset"] = self.offset
        return doc


@dataclass(frozen=True)
class FieldMapping:
    """Declarative payload-to-canonical translation.

    ``record_root`` addresses the sequence of record nodes in a parsed
    payload; for txt payloads it is instead an anchored regex with named
    groups, applied line by line.
    """

    response_format: str
    record_root: str
    entries: tuple[MappingEntry, ...]
    constants: Mapping[str, Any] = field(default_factory=dict)

    def entry_for(self, target: str) -> MappingEntry | None:
        for entry in self.entries:
            if entry.target == target:
                return entry
        return None

    def to_doc(self) -> dict:
        return {
            "response_format": self.response_format,
            "record_root": self.record_root,
            "entries": [e.to_doc() for e in self.entries],
            "constants": dict(self.constants),
        }


@dataclass(frozen=True)
class Availability:
    metrics: tuple[str, ...]
    earliest: datetime
    latest: datetime

    def to_doc(self) -> dict:
        return {
            "metrics": list(self.metrics),
            "earliest": format_utc(self.earliest),
            "latest": format_utc(self.latest),
        }


@dataclass(frozen=True)
class DataAccessBlock:
    id: str
    source_app: str
    controller_id: str
    phase: int
    domain: str
    availability: Availability
    template: QueryTemplate
    mapping: FieldMapping | None
    schema_version: int

    @property
    def executable(self) -> bool:
        return self.template.executable and self.mapping is not None

    def to_doc(self) -> dict:
        doc: dict[str, Any] = {
            "id": self.id,
            "source_app": self.source_app,
            "controller_id": self.controller_id,
            "phase": self.phase,
            "domain": self.domain,
            "availability": self.availability.to_doc(),
            "template": self.template.to_doc(),
        }
        if self.mapping is not None:
            doc["mapping"] = self.mapping.to_doc()
        doc["schema_version"] = self.schema_version
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_doc(), indent=2) + "\n"


def _decode_instruction(doc: Mapping) -> AccessInstruction:
    pagination = None
    if doc.get("pagination") is not None:
        p = doc["pagination"]
        pagination = Pagination(
            cursor_field_path=p["cursor_field_path"],
            page_size_param=p["page_size_param"],
        )
    return AccessInstruction(
        method=doc["method"],
        url_template=doc["url_template"],
        headers=dict(doc.get("headers", {})),
        body_template=doc.get("body_template"),
        response_format=doc["response_format"],
        pagination=pagination,
    )


def _decode_template(doc: Mapping, dab_domain: str) -> QueryTemplate:
    if "instruction" not in doc:
        return QueryTemplate(
            id="",
            domain=dab_domain,
            metrics=(),
            granularity="full_history",
            parameters=(),
            instruction=None,
            description=doc.get("description"),
        )
    return QueryTemplate(
        id=doc["id"],
        domain=doc["domain"],
        metrics=tuple(doc["metrics"]),
        granularity=doc["granularity"],
        parameters=tuple(
            TemplateParameter(p["name"], p["kind"]) for p in doc["parameters"]
        ),
        instruction=_decode_instruction(doc["instruction"]),
        description=doc.get("description"),
    )


def _decode_mapping(doc: Mapping) -> FieldMapping:
    return FieldMapping(
        response_format=doc["response_format"],
        record_root=doc["record_root"],
        entries=tuple(
            MappingEntry(
                path=e["path"],
                target=e["target"],
                scale=e.get("scale"),
                offset=e.get("offset"),
            )
            for e in doc["entries"]
        ),
        constants=dict(doc.get("constants", {})),
    )


def decode_dab(doc: Mapping) -> DataAccessBlock:
    """Build the typed model from a JSON document.

    Assumes the document already passed ``validate_dab``; raises plain
    ``KeyError``/``ValueError`` on structurally broken input rather than
    producing a second diagnostic channel.
    """
    availability = doc["availability"]
    mapping = _decode_mapping(doc["mapping"]) if doc.get("mapping") else None
    return DataAccessBlock(
        id=doc["id"],
        source_app=doc["source_app"],
        controller_id=doc["controller_id"],
        phase=doc["phase"],
        domain=doc["domain"],
        availability=Availability(
            metrics=tuple(availability["metrics"]),
            earliest=parse_utc(availability["earliest"]),
            latest=parse_utc(availability["latest"]),
        ),
        template=_decode_template(doc["template"], doc["domain"]),
        mapping=mapping,
        schema_version=doc["schema_version"],
    )


def phase1_view(dab: DataAccessBlock) -> DataAccessBlock:
    """Relabel a DAB as a phase-1 offering without dropping capability.

    The executable parts stay intact so a recipient holding a delegated
    token can still run the access itself; only the phase marker and a
    guaranteed human-readable description change.
    """
    description = dab.template.description or (
        f"{dab.source_app} {dab.domain} export covering "
        f"{', '.join(dab.availability.metrics)}"
    )
    return replace(
        dab, phase=1, template=replace(dab.template, description=description)
    )
