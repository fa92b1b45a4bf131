"""Delegated access tokens the portal mints for querying apps.

A token scopes one silo, one domain, and a time window, and it expires.
Silos verify the HMAC with a key shared with the portal; the token never
equals (or contains) the user's vault credential, so handing it to an
app does not hand over the account.
"""

from __future__ import annotations

import base64
import hmac
import json
from dataclasses import dataclass
from datetime import datetime, timedelta
from hashlib import sha256

from .timeutil import Clock, format_utc, parse_utc

TOKEN_LIFETIME_SECONDS = 600


class TokenError(ValueError):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


@dataclass(frozen=True)
class DelegatedToken:
    source_app: str
    domain: str
    start: datetime
    end: datetime
    expires_at: datetime
    fee_waived: bool = False

    def payload(self) -> dict:
        return {
            "source_app": self.source_app,
            "domain": self.domain,
            "start": format_utc(self.start),
            "end": format_utc(self.end),
            "expires_at": format_utc(self.expires_at),
            "fee_waived": self.fee_waived,
        }


def _b64(data: bytes) -> str:
    return base64.urlsafe_b64encode(data).rstrip(b"=").decode()


def _unb64(text: str) -> bytes:
    padding = "=" * (-len(text) % 4)
    return base64.urlsafe_b64decode(text + padding)


def encode_token(token: DelegatedToken, key: bytes) -> str:
    payload = json.dumps(token.payload(), sort_keys=True).encode()
    signature = hmac.new(key, payload, sha256).digest()
    return f"{_b64(payload)}.{_b64(signature)}"


def decode_token(text: str, key: bytes) -> DelegatedToken:
    """Verify signature and shape; raises ``TokenError('invalid-token')``."""
    try:
        payload_b64, signature_b64 = text.split(".")
        payload = _unb64(payload_b64)
        signature = _unb64(signature_b64)
    except (ValueError, TypeError):
        raise TokenError("invalid-token", "token is not in payload.signature form") from None
    expected = hmac.new(key, payload, sha256).digest()
    if not hmac.compare_digest(signature, expected):
        raise TokenError("invalid-token", "bad signature")
    try:
        doc = json.loads(payload)
        return DelegatedToken(
            source_app=doc["source_app"],
            domain=doc["domain"],
            start=parse_utc(doc["start"]),
            end=parse_utc(doc["end"]),
            expires_at=parse_utc(doc["expires_at"]),
            fee_waived=bool(doc.get("fee_waived", False)),
        )
    except (KeyError, ValueError, TypeError):
        raise TokenError("invalid-token", "token payload is malformed") from None


class TokenMinter:
    def __init__(self, key: bytes, clock: Clock, lifetime_seconds: int = TOKEN_LIFETIME_SECONDS):
        self._key = key
        self._clock = clock
        self._lifetime = lifetime_seconds

    def mint(
        self,
        source_app: str,
        domain: str,
        start: datetime,
        end: datetime,
        *,
        fee_waived: bool = False,
    ) -> str:
        token = DelegatedToken(
            source_app=source_app,
            domain=domain,
            start=start,
            end=end,
            expires_at=self._clock.now() + timedelta(seconds=self._lifetime),
            fee_waived=fee_waived,
        )
        return encode_token(token, self._key)


def check_token(
    token: DelegatedToken,
    now: datetime,
    source_app: str,
    domain: str,
    start: datetime | None = None,
    end: datetime | None = None,
) -> None:
    """Enforce expiry and scope; raises ``TokenError`` with a precise code."""
    if now > token.expires_at:
        raise TokenError("token-expired", "token lifetime elapsed")
    if token.source_app != source_app or token.domain != domain:
        raise TokenError("scope-violation", "token was minted for a different silo scope")
    if start is not None and start < token.start:
        raise TokenError("scope-violation", "requested window starts before token scope")
    if end is not None and end > token.end:
        raise TokenError("scope-violation", "requested window ends after token scope")
