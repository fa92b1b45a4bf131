"""Deterministic dataset generation for simulated silos.

Every row is a pure function of (seed, source_app, metric, grid slot):
regenerating any window of a stream yields byte-identical rows, which is
what makes windowed and full-history retrieval reconcilable and repeated
demo runs byte-stable. Values are raw integers in the silo's native
export unit; canonical values come from the declared linear conversion.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timezone
from hashlib import sha256

from ..timeutil import parse_utc
from .profiles import MetricStream, SiloProfile

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15

_WORDS = (
    "ok", "sure", "later", "running", "coffee", "meeting", "done", "soon",
    "thanks", "maybe", "tonight", "early", "lunch", "call", "ready", "home",
    "train", "busy", "great", "tomorrow", "ping", "sent", "check", "yes",
)


def _mix(state: int) -> int:
    z = (state + _GAMMA) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def stream_seed(seed: int, source_app: str, metric: str) -> int:
    digest = sha256(f"{seed}|{source_app}|{metric}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass(frozen=True)
class RawRow:
    metric: str
    timestamp: datetime  # aware UTC
    int_value: int | None
    text_value: str | None

    @property
    def raw(self) -> int | str:
        return self.text_value if self.text_value is not None else self.int_value


def _row_at(stream: MetricStream, base: int, slot: int) -> RawRow:
    at = datetime.fromtimestamp(slot * stream.cadence_seconds, tz=timezone.utc)
    word = _mix(base ^ (slot & _MASK64))
    if stream.text:
        picks = []
        state = word
        for _ in range(3):
            picks.append(_WORDS[state % len(_WORDS)])
            state = _mix(state)
        return RawRow(stream.metric, at, None, " ".join(picks))
    span = stream.hi - stream.lo + 1
    return RawRow(stream.metric, at, stream.lo + word % span, None)


def generate_rows(
    profile: SiloProfile, seed: int, start: str | datetime, end: str | datetime
) -> list[RawRow]:
    """All rows on the absolute grid inside [start, end], sorted."""
    start_at = parse_utc(start) if isinstance(start, str) else start
    end_at = parse_utc(end) if isinstance(end, str) else end
    rows: list[RawRow] = []
    for stream in profile.streams:
        base = stream_seed(seed, profile.source_app, stream.metric)
        cadence = stream.cadence_seconds
        first = int(start_at.timestamp() + cadence - 1) // cadence  # ceil
        last = int(end_at.timestamp()) // cadence
        rows.extend(_row_at(stream, base, slot) for slot in range(first, last + 1))
    rows.sort(key=lambda r: (r.timestamp, r.metric))
    return rows


def canonical_value(profile: SiloProfile, row: RawRow) -> float | str:
    """The value the mapping engine must produce for this raw row."""
    if row.text_value is not None:
        return row.text_value
    value = float(row.int_value)
    if profile.value_scale is not None or profile.value_offset is not None:
        scale = profile.value_scale if profile.value_scale is not None else 1.0
        offset = profile.value_offset if profile.value_offset is not None else 0.0
        value = value * scale + offset
    return value
