"""In-process silo servers: serialize generated rows per native format
and enforce the silo-side contract (auth, scope, fees, rate limits,
granularity, pagination)."""

from __future__ import annotations

import csv
import io
import json
import threading
from dataclasses import dataclass
from datetime import timedelta
from typing import Iterable
from urllib.parse import parse_qs, urlsplit
from xml.sax.saxutils import quoteattr

from ..dab.render import ConcreteRequest
from ..timeutil import Clock, SystemClock, TimestampError, format_utc, parse_utc
from ..tokens import TokenError, check_token, decode_token
from ..transport import TransportResponse
from .profiles import SiloProfile
from .seed import RawRow, generate_rows

DEFAULT_PAGE_LIMIT = 50
MAX_PAGE_LIMIT = 500

_CONTENT_TYPES = {
    "csv": "text/csv",
    "json": "application/json",
    "xml": "application/xml",
    "txt": "text/plain",
}


def _ts_for_export(profile: SiloProfile, row: RawRow) -> str:
    if profile.utc_offset_minutes is not None:
        local = row.timestamp + timedelta(minutes=profile.utc_offset_minutes)
        return local.replace(tzinfo=None).isoformat()
    return format_utc(row.timestamp)


def serialize_rows(profile: SiloProfile, rows: Iterable[RawRow]) -> bytes:
    """Payload body in the silo's native shape (single page)."""
    rows = list(rows)
    fmt = profile.response_format
    if fmt == "csv":
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow([profile.columns["timestamp"], profile.columns["value"]])
        for row in rows:
            writer.writerow([_ts_for_export(profile, row), row.int_value])
        return out.getvalue().encode()
    if fmt == "xml":
        parts = ["<HealthExport>"]
        for row in rows:
            parts.append(
                f"  <Record t={quoteattr(_ts_for_export(profile, row))}"
                f" kJ={quoteattr(str(row.int_value))}/>"
            )
        parts.append("</HealthExport>")
        return "\n".join(parts).encode()
    if fmt == "txt":
        lines = [
            f"{profile.source_app} chat export",
            "messages are end-to-end encrypted",
        ]
        lines += [f"[{_ts_for_export(profile, row)}] {row.text_value}" for row in rows]
        return "\n".join(lines).encode()
    # json shapes differ per silo
    if profile.source_app == "tweetsim":
        doc = {
            "tweets": [
                {"created_at": _ts_for_export(profile, r), "text": r.text_value}
                for r in rows
            ]
        }
    elif profile.source_app == "slacksim":
        raise ValueError("slacksim pages are built by the server")
    else:
        doc = {
            "data": [
                {
                    "ts": _ts_for_export(profile, r),
                    "kind": r.metric,
                    "val": r.int_value,
                }
                for r in rows
            ]
        }
    return json.dumps(doc).encode()


def _slack_page(profile: SiloProfile, rows: list[RawRow], offset: int, limit: int) -> bytes:
    page = rows[offset : offset + limit]
    next_cursor = str(offset + limit) if offset + limit < len(rows) else None
    doc = {
        "messages": [
            {"ts": _ts_for_export(profile, r), "text": r.text_value} for r in page
        ],
        "next_cursor": next_cursor,
    }
    return json.dumps(doc).encode()


@dataclass
class _RateWindow:
    minute: int
    count: int


class SiloServer:
    """One simulated silo: a generated dataset behind its native API."""

    def __init__(
        self,
        profile: SiloProfile,
        seed: int,
        window_start: str,
        window_end: str,
        *,
        token_key: bytes,
        clock: Clock | None = None,
        accepted_credentials: Iterable[str] = (),
        fee_waiver_code: str | None = None,
        rate_limit_per_minute: int | None = None,
        base_url: str | None = None,
    ):
        self.profile = profile
        self.seed = seed
        self.base_url = (base_url or profile.default_base_url()).rstrip("/")
        self.rows = generate_rows(profile, seed, window_start, window_end)
        if not self.rows:
            raise ValueError(f"{profile.source_app}: empty dataset window")
        self.clock = clock or SystemClock()
        self.down = False
        self._token_key = token_key
        self._credentials = set(accepted_credentials)
        self._fee_waiver_code = fee_waiver_code
        self._rate_limit = (
            rate_limit_per_minute
            if rate_limit_per_minute is not None
            else profile.rate_limit_per_minute
        )
        self._rate: dict[str, _RateWindow] = {}
        self._lock = threading.Lock()

    # availability derives from the actual dataset
    def earliest(self) -> str:
        return format_utc(self.rows[0].timestamp)

    def latest(self) -> str:
        return format_utc(self.rows[-1].timestamp)

    def accept_credential(self, credential: str) -> None:
        with self._lock:
            self._credentials.add(credential)

    # -- request handling --------------------------------------------------

    def handle(self, request: ConcreteRequest) -> TransportResponse:
        parts = urlsplit(request.url)
        params = {k: v[-1] for k, v in parse_qs(parts.query).items()}
        if parts.path != self.profile.export_path:
            return self._error(404, "not-found", f"no route {parts.path}")

        secret = self._presented_secret(request, params)
        if secret is None:
            return self._error(401, "auth-required", "no credential presented")

        limited = self._rate_limited(secret)
        if limited is not None:
            return TransportResponse(
                429,
                json.dumps({"error": "rate-limited", "retry_after": limited}).encode(),
                {"Content-Type": "application/json", "Retry-After": str(limited)},
            )

        fee_waived = (
            self._fee_waiver_code is not None
            and request.headers.get("X-Fee-Waiver") == self._fee_waiver_code
        )
        if secret not in self._credentials:
            try:
                token = decode_token(secret, self._token_key)
            except TokenError as err:
                return self._error(401, err.code, str(err))
            start, end = self._requested_window(params)
            try:
                check_token(
                    token,
                    self.clock.now(),
                    self.profile.source_app,
                    self.profile.domain,
                    start=start,
                    end=end,
                )
            except TokenError as err:
                status = 401 if err.code == "token-expired" else 403
                return self._error(status, err.code, str(err))
            fee_waived = fee_waived or token.fee_waived

        if self.profile.fee_required and not fee_waived:
            return self._error(
                402,
                "fee-required",
                f"{self.profile.source_app} charges for programmatic export",
            )

        rows = self.rows
        if self.profile.granularity == "date_range":
            if "from" not in params or "to" not in params:
                return self._error(400, "bad-request", "from and to are required")
            try:
                start = parse_utc(params["from"])
                end = parse_utc(params["to"])
            except TimestampError as exc:
                return self._error(400, "bad-request", str(exc))
            rows = [r for r in rows if start <= r.timestamp <= end]

        if self.profile.paginated:
            return self._paged_response(rows, params)
        return TransportResponse(
            200,
            serialize_rows(self.profile, rows),
            {"Content-Type": _CONTENT_TYPES[self.profile.response_format]},
        )

    def _paged_response(self, rows: list[RawRow], params: dict) -> TransportResponse:
        try:
            limit = int(params.get("limit") or DEFAULT_PAGE_LIMIT)
            offset = int(params.get("cursor") or 0)
        except ValueError:
            return self._error(400, "bad-request", "limit and cursor must be integers")
        if limit < 1 or offset < 0:
            return self._error(400, "bad-request", "limit and cursor must be positive")
        limit = min(limit, MAX_PAGE_LIMIT)
        return TransportResponse(
            200,
            _slack_page(self.profile, rows, offset, limit),
            {"Content-Type": "application/json"},
        )

    def _presented_secret(self, request: ConcreteRequest, params: dict) -> str | None:
        header = request.headers.get("Authorization", "")
        if header.startswith("Bearer "):
            return header[len("Bearer ") :]
        return params.get("tok")

    def _requested_window(self, params: dict):
        try:
            start = parse_utc(params["from"]) if "from" in params else None
            end = parse_utc(params["to"]) if "to" in params else None
        except TimestampError:
            return None, None  # date errors surface as 400 later
        return start, end

    def _rate_limited(self, secret: str) -> int | None:
        """Returns seconds to wait, or None when within the limit."""
        now = self.clock.now()
        minute = int(now.timestamp()) // 60
        with self._lock:
            window = self._rate.get(secret)
            if window is None or window.minute != minute:
                window = _RateWindow(minute, 0)
                self._rate[secret] = window
            window.count += 1
            if window.count > self._rate_limit:
                return 60 - int(now.timestamp()) % 60
        return None

    def _error(self, status: int, code: str, message: str) -> TransportResponse:
        body = json.dumps({"error": code, "message": message}).encode()
        return TransportResponse(status, body, {"Content-Type": "application/json"})


def build_fleet(
    source_apps: Iterable[str],
    seed: int,
    window_start: str,
    window_end: str,
    *,
    token_key: bytes,
    clock: Clock | None = None,
    rate_limit_per_minute: int | None = None,
    fee_waiver_codes: dict[str, str] | None = None,
    base_urls: dict[str, str] | None = None,
) -> dict[str, SiloServer]:
    """Build servers for the named profiles over one data window."""
    from .profiles import PROFILES

    fleet = {}
    for app in source_apps:
        fleet[app] = SiloServer(
            PROFILES[app],
            seed,
            window_start,
            window_end,
            token_key=token_key,
            clock=clock,
            fee_waiver_code=(fee_waiver_codes or {}).get(app),
            rate_limit_per_minute=rate_limit_per_minute,
            base_url=(base_urls or {}).get(app),
        )
    return fleet
