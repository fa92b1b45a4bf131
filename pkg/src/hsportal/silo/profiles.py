"""Catalog of simulated silo profiles.

Each profile captures one real-world access pattern: export format,
retrieval granularity (windowed vs full dump), fees, pagination, auth
placement, and how native fields map into the canonical schema. The
catalog deliberately spans all four wire formats and all five domains.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

DEFAULT_RATE_LIMIT = 60


@dataclass(frozen=True)
class MetricStream:
    """One generated series: raw integer values in the silo's native unit."""

    metric: str
    cadence_seconds: int
    lo: int
    hi: int
    text: bool = False


@dataclass(frozen=True)
class SiloProfile:
    source_app: str
    controller_id: str
    domain: str
    response_format: str
    granularity: str
    streams: tuple[MetricStream, ...]
    fee_required: bool = False
    programmatic: bool = True
    paginated: bool = False
    value_scale: float | None = None  # canonical = raw * scale + offset
    value_offset: float | None = None
    utc_offset_minutes: int | None = None  # exports naive local time
    auth_in_header: bool = True
    rate_limit_per_minute: int = DEFAULT_RATE_LIMIT
    columns: dict[str, str] = field(default_factory=dict)  # shape hints

    @property
    def metrics(self) -> tuple[str, ...]:
        return tuple(s.metric for s in self.streams)

    @property
    def export_path(self) -> str:
        return "/export" if self.programmatic else "/dump"

    def default_base_url(self) -> str:
        return f"http://{self.source_app}.sim"


PROFILES: dict[str, SiloProfile] = {
    p.source_app: p
    for p in [
        # windowed csv wearable: the plainest shape
        SiloProfile(
            source_app="fitsim",
            controller_id="fitcorp",
            domain="health",
            response_format="csv",
            granularity="date_range",
            streams=(MetricStream("heart_rate", 3600, 50, 110),),
            columns={"timestamp": "Timestamp", "value": "HeartRate"},
        ),
        # json ring: two metrics distinguished by a payload field
        SiloProfile(
            source_app="ourasim",
            controller_id="ouracorp",
            domain="health",
            response_format="json",
            granularity="date_range",
            streams=(
                MetricStream("sleep_duration", 86400, 300, 560),
                MetricStream("heart_rate", 14400, 45, 100),
            ),
        ),
        # xml phone-health dump: kJ integers, naive local timestamps
        SiloProfile(
            source_app="healthkitsim",
            controller_id="fruitcorp",
            domain="health",
            response_format="xml",
            granularity="date_range",
            streams=(MetricStream("caloric_intake", 21600, 400, 4000),),
            value_scale=0.239006,  # kJ -> kcal
            utc_offset_minutes=60,
        ),
        # paginated json workspace chat that charges for API access
        SiloProfile(
            source_app="slacksim",
            controller_id="slackcorp",
            domain="messages",
            response_format="json",
            granularity="date_range",
            streams=(MetricStream("message", 5400, 0, 0, text=True),),
            fee_required=True,
            paginated=True,
        ),
        # personal chat: user-triggered full-history text dump only
        SiloProfile(
            source_app="whatsim",
            controller_id="whatcorp",
            domain="messages",
            response_format="txt",
            granularity="full_history",
            streams=(MetricStream("message", 7200, 0, 0, text=True),),
            programmatic=False,
        ),
        # social feed
        SiloProfile(
            source_app="tweetsim",
            controller_id="birdcorp",
            domain="social",
            response_format="json",
            granularity="date_range",
            streams=(MetricStream("post", 10800, 0, 0, text=True),),
        ),
        # card statements: signed amounts in minor units, csv
        SiloProfile(
            source_app="banksim",
            controller_id="amexsim",
            domain="finance",
            response_format="csv",
            granularity="date_range",
            streams=(MetricStream("transaction", 43200, -20000, 20000),),
            columns={"timestamp": "Date", "value": "AmountMinorUnits"},
        ),
        # home sensors: full-history csv, query-string auth
        SiloProfile(
            source_app="smartsim",
            controller_id="samsungsim",
            domain="iot",
            response_format="csv",
            granularity="full_history",
            streams=(MetricStream("sensor_reading", 1800, 0, 1000),),
            auth_in_header=False,
            columns={"timestamp": "time", "value": "reading"},
        ),
    ]
}


def profile(source_app: str) -> SiloProfile:
    return PROFILES[source_app]


def build_template_doc(p: SiloProfile, base_url: str | None = None) -> dict:
    base = (base_url or p.default_base_url()).rstrip("/")
    parameters: list[dict] = [{"name": "credential", "kind": "credential"}]
    query: list[str] = []
    if p.granularity == "date_range":
        parameters += [
            {"name": "date_start", "kind": "date_start"},
            {"name": "date_end", "kind": "date_end"},
        ]
        query += ["from={date_start}", "to={date_end}"]
    if p.paginated:
        parameters += [
            {"name": "limit", "kind": "public"},
            {"name": "cursor", "kind": "public"},
        ]
        query += ["limit={limit}", "cursor={cursor}"]
    headers: dict[str, str] = {}
    if p.auth_in_header:
        headers["Authorization"] = "Bearer {credential}"
    else:
        query.append("tok={credential}")
    url = f"{base}{p.export_path}"
    if query:
        url += "?" + "&".join(query)
    instruction: dict[str, Any] = {
        "method": "GET",
        "url_template": url,
        "headers": headers,
        "response_format": p.response_format,
    }
    if p.paginated:
        instruction["pagination"] = {
            "cursor_field_path": "/next_cursor",
            "page_size_param": "limit",
        }
    return {
        "id": f"{p.source_app}-{p.domain}-export",
        "domain": p.domain,
        "metrics": list(p.metrics),
        "granularity": p.granularity,
        "parameters": parameters,
        "instruction": instruction,
    }


def build_mapping_doc(p: SiloProfile) -> dict:
    constants: dict[str, Any] = {}
    if p.utc_offset_minutes is not None:
        constants["utc_offset_minutes"] = p.utc_offset_minutes

    if p.response_format == "csv":
        entries = [
            {"path": p.columns["timestamp"], "target": "timestamp"},
            {"path": p.columns["value"], "target": "value"},
        ]
        record_root = ""
    elif p.response_format == "xml":
        entries = [
            {"path": "@t", "target": "timestamp"},
            {"path": "@kJ", "target": "value"},
        ]
        record_root = "/HealthExport/Record"
    elif p.response_format == "txt":
        entries = [
            {"path": "ts", "target": "timestamp"},
            {"path": "body", "target": "value"},
        ]
        record_root = r"^\[(?P<ts>[^\]]+)\] (?P<body>.+)$"
    elif p.source_app == "slacksim":
        entries = [
            {"path": "ts", "target": "timestamp"},
            {"path": "text", "target": "value"},
        ]
        record_root = "/messages"
    elif p.source_app == "tweetsim":
        entries = [
            {"path": "created_at", "target": "timestamp"},
            {"path": "text", "target": "value"},
        ]
        record_root = "/tweets"
    else:  # ourasim: metric carried per row
        entries = [
            {"path": "ts", "target": "timestamp"},
            {"path": "val", "target": "value"},
            {"path": "kind", "target": "metric"},
        ]
        record_root = "/data"

    if len(p.metrics) == 1:
        constants["metric"] = p.metrics[0]
    value_entry = next(e for e in entries if e["target"] == "value")
    if p.value_scale is not None:
        value_entry["scale"] = p.value_scale
    if p.value_offset is not None:
        value_entry["offset"] = p.value_offset
    return {
        "response_format": p.response_format,
        "record_root": record_root,
        "entries": entries,
        "constants": constants,
    }


def build_dab_doc(
    p: SiloProfile,
    earliest: str,
    latest: str,
    *,
    base_url: str | None = None,
    phase: int = 3,
    description: str | None = None,
) -> dict:
    """The document a controller would register for this silo."""
    template = build_template_doc(p, base_url)
    if description is not None:
        template = {"description": description, **template}
    doc: dict[str, Any] = {
        "id": f"{p.source_app}-{p.domain}",
        "source_app": p.source_app,
        "controller_id": p.controller_id,
        "phase": phase,
        "domain": p.domain,
        "availability": {
            "metrics": list(p.metrics),
            "earliest": earliest,
            "latest": latest,
        },
        "template": template,
        "mapping": build_mapping_doc(p),
        "schema_version": 1,
    }
    if phase == 1 and "description" not in template:
        template["description"] = (
            f"{p.source_app} offers a {p.granularity} {p.response_format} "
            f"export of {', '.join(p.metrics)}"
        )
    return doc
