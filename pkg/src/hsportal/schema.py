"""Canonical per-domain schemas and the normalized record type.

A domain schema fixes the metric vocabulary every silo export is mapped
into. Schemas are versioned; new versions may add metrics but never
remove or retype ones an older reader depends on.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime
from typing import Final, Iterable, Mapping

from .timeutil import format_utc, parse_utc

NUMERIC: Final = "numeric"
TEXT: Final = "text"


@dataclass(frozen=True)
class MetricSpec:
    name: str
    unit: str
    value_kind: str  # NUMERIC or TEXT

    def __post_init__(self) -> None:
        if self.value_kind not in (NUMERIC, TEXT):
            raise ValueError(f"bad value_kind {self.value_kind!r}")


@dataclass(frozen=True)
class DomainSchema:
    domain: str
    version: int
    metrics: Mapping[str, MetricSpec]

    def metric(self, name: str) -> MetricSpec | None:
        return self.metrics.get(name)


class SchemaCatalog:
    """Versioned registry of domain schemas.

    Older versions stay readable after newer ones are added: a version,
    once registered, is immutable, and a newer version must be a superset
    of every prior version's metrics with identical units and kinds.
    """

    def __init__(self) -> None:
        self._by_domain: dict[str, dict[int, DomainSchema]] = {}

    def register(self, schema: DomainSchema) -> None:
        versions = self._by_domain.setdefault(schema.domain, {})
        if schema.version in versions:
            raise ValueError(
                f"schema {schema.domain} v{schema.version} already registered"
            )
        for prior in versions.values():
            if prior.version > schema.version:
                raise ValueError("schema versions must be registered in order")
            for name, spec in prior.metrics.items():
                if schema.metrics.get(name) != spec:
                    raise ValueError(
                        f"schema {schema.domain} v{schema.version} drops or "
                        f"changes metric {name!r} from v{prior.version}"
                    )
        versions[schema.version] = schema

    def domains(self) -> list[str]:
        return sorted(self._by_domain)

    def latest(self, domain: str) -> DomainSchema | None:
        versions = self._by_domain.get(domain)
        if not versions:
            return None
        return versions[max(versions)]

    def get(self, domain: str, version: int) -> DomainSchema | None:
        return self._by_domain.get(domain, {}).get(version)


def _domain(domain: str, version: int, metrics: Iterable[MetricSpec]) -> DomainSchema:
    return DomainSchema(domain, version, {m.name: m for m in metrics})


def default_catalog() -> SchemaCatalog:
    """The shipped v1 schemas: five domains mirroring common silo kinds."""
    catalog = SchemaCatalog()
    catalog.register(
        _domain(
            "health",
            1,
            [
                MetricSpec("heart_rate", "bpm", NUMERIC),
                MetricSpec("caloric_intake", "kcal", NUMERIC),
                MetricSpec("sleep_duration", "minutes", NUMERIC),
            ],
        )
    )
    catalog.register(_domain("messages", 1, [MetricSpec("message", "none", TEXT)]))
    catalog.register(_domain("social", 1, [MetricSpec("post", "none", TEXT)]))
    catalog.register(
        _domain(
            "finance", 1, [MetricSpec("transaction", "currency-minor-units", NUMERIC)]
        )
    )
    catalog.register(_domain("iot", 1, [MetricSpec("sensor_reading", "none", NUMERIC)]))
    return catalog


@dataclass(frozen=True)
class CanonicalRecord:
    """One normalized observation, independent of the silo's native shape."""

    pseudonym: str
    source_app: str
    metric: str
    timestamp: datetime  # always aware UTC
    value: float | str
    unit: str

    def identity(self) -> tuple[str, str, str, str]:
        """Uniqueness key: a silo never exports two values for one instant."""
        return (self.pseudonym, self.source_app, self.metric, format_utc(self.timestamp))

    def to_doc(self) -> dict:
        return {
            "pseudonym": self.pseudonym,
            "source_app": self.source_app,
            "metric": self.metric,
            "timestamp": format_utc(self.timestamp),
            "value": self.value,
            "unit": self.unit,
        }

    @staticmethod
    def from_doc(doc: Mapping) -> "CanonicalRecord":
        value = doc["value"]
        if not isinstance(value, (int, float, str)) or isinstance(value, bool):
            raise ValueError(f"bad record value {value!r}")
        if isinstance(value, int):
            value = float(value)
        return CanonicalRecord(
            pseudonym=str(doc["pseudonym"]),
            source_app=str(doc["source_app"]),
            metric=str(doc["metric"]),
            timestamp=parse_utc(doc["timestamp"]),
            value=value,
            unit=str(doc["unit"]),
        )


def merge_sorted(records: Iterable[CanonicalRecord]) -> list[CanonicalRecord]:
    """Deterministic cross-silo ordering: time, then source, then metric."""
    return sorted(records, key=lambda r: (r.timestamp, r.source_app, r.metric))
