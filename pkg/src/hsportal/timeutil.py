"""Timestamp parsing and the injectable clock used across the portal.

All timestamps inside the system are timezone-aware UTC datetimes; the
wire format is ISO 8601 with a trailing ``Z``.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone


class TimestampError(ValueError):
    """Raised for strings that do not parse as ISO 8601 UTC instants."""


def parse_utc(value: str) -> datetime:
    """Parse an ISO 8601 timestamp into an aware UTC datetime.

    Accepts a trailing ``Z`` or an explicit offset; naive inputs are
    rejected because the caller cannot know which zone produced them.
    """
    if not isinstance(value, str) or not value:
        raise TimestampError(f"not a timestamp: {value!r}")
    text = value[:-1] + "+00:00" if value.endswith("Z") else value
    try:
        parsed = datetime.fromisoformat(text)
    except ValueError as exc:
        raise TimestampError(f"bad timestamp {value!r}: {exc}") from None
    if parsed.tzinfo is None:
        raise TimestampError(f"timestamp {value!r} has no UTC offset")
    return parsed.astimezone(timezone.utc)


def parse_naive_local(value: str, utc_offset_minutes: int) -> datetime:
    """Interpret a naive local timestamp exported at a fixed UTC offset."""
    try:
        parsed = datetime.fromisoformat(value)
    except (TypeError, ValueError) as exc:
        raise TimestampError(f"bad timestamp {value!r}: {exc}") from None
    if parsed.tzinfo is not None:
        return parsed.astimezone(timezone.utc)
    shifted = parsed.replace(tzinfo=timezone.utc)
    from datetime import timedelta

    return shifted - timedelta(minutes=utc_offset_minutes)


def format_utc(instant: datetime) -> str:
    """Render an aware datetime as ISO 8601 UTC with a ``Z`` suffix."""
    if instant.tzinfo is None:
        raise TimestampError("refusing to format a naive datetime")
    normalized = instant.astimezone(timezone.utc).replace(tzinfo=None)
    return normalized.isoformat() + "Z"


class Clock:
    """Time source interface so tests can drive expiry deterministically."""

    def now(self) -> datetime:
        raise NotImplementedError


class SystemClock(Clock):
    def now(self) -> datetime:
        return datetime.now(timezone.utc)


@dataclass
class SimClock(Clock):
    """Manually advanced clock; starts at a fixed instant."""

    current: datetime = field(
        default_factory=lambda: datetime(2025, 1, 1, tzinfo=timezone.utc)
    )
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def now(self) -> datetime:
        with self._lock:
            return self.current

    def advance(self, seconds: float) -> None:
        from datetime import timedelta

        with self._lock:
            self.current = self.current + timedelta(seconds=seconds)
