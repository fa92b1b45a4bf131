"""Users, hsApps, designations, the credential vault, and consent grants.

Identity rules: a querying app never learns a user_id; it gets a
per-(user, app) pseudonym derived by keyed HMAC. Vault credentials are
stored encrypted and leave the store only for silo calls, never in
responses. All state replays from an append-only JSONL log; pseudonyms
are recomputed at replay, so rotating the master key atomically rewrites
every pseudonym without touching the log.
"""

from __future__ import annotations

import hmac
import json
import secrets
import threading
from base64 import urlsafe_b64encode
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from hashlib import sha256
from pathlib import Path
from typing import Callable

from cryptography.fernet import Fernet, InvalidToken as FernetInvalidToken

from .audit import AuditLog
from .errors import (
    ConsentDenied,
    DuplicateGrant,
    GrantNotFound,
    NoCredentialOnFile,
    NotOwner,
    PortalError,
    UnknownHsApp,
    UnknownSourceApp,
    UnknownUser,
)
from .timeutil import Clock, SystemClock, format_utc, parse_utc

GRANT_START_FLOOR = datetime(1970, 1, 1, tzinfo=timezone.utc)
GRANT_END_CEILING = datetime(9999, 12, 31, 23, 59, 59, tzinfo=timezone.utc)

PSEUDONYM_LENGTH = 32


def derive_key(master: bytes, label: str) -> bytes:
    return hmac.new(master, label.encode(), sha256).digest()


def hash_secret(secret: str) -> str:
    return sha256(secret.encode()).hexdigest()


@dataclass(frozen=True)
class Principal:
    kind: str  # user | hsapp | controller
    id: str


@dataclass(frozen=True)
class Grant:
    grant_id: str
    user_id: str
    hsapp_id: str
    domain: str
    start: datetime
    end: datetime
    status: str  # active | revoked
    created_at: datetime
    revoked_at: datetime | None = None

    def to_doc(self) -> dict:
        return {
            "grant_id": self.grant_id,
            "hsapp_id": self.hsapp_id,
            "domain": self.domain,
            "start": format_utc(self.start),
            "end": format_utc(self.end),
            "status": self.status,
            "created_at": format_utc(self.created_at),
            "revoked_at": format_utc(self.revoked_at) if self.revoked_at else None,
        }


class ConsentStore:
    def __init__(
        self,
        master_key: bytes,
        audit: AuditLog,
        log_path: Path | None = None,
        clock: Clock | None = None,
        callback_dir: Path | None = None,
    ):
        if len(master_key) < 32:
            raise ValueError("master key must be at least 32 bytes")
        self._pseudonym_key = derive_key(master_key, "pseudonym")
        self._fernet = Fernet(urlsafe_b64encode(derive_key(master_key, "vault")))
        self._audit = audit
        self._clock = clock or SystemClock()
        self._path = Path(log_path) if log_path is not None else None
        self._callback_dir = Path(callback_dir) if callback_dir is not None else None
        self._lock = threading.RLock()

        self._users: dict[str, datetime] = {}
        self._hsapps: dict[str, str] = {}  # id -> display name
        self._tokens: dict[str, Principal] = {}  # sha256 -> principal
        self._designations: dict[tuple[str, str], tuple[str, ...]] = {}
        self._vault: dict[tuple[str, str], str] = {}  # ciphertext, base64 text
        self._grants: dict[str, Grant] = {}
        self._callbacks: dict[str, list[dict]] = {}
        self._pseudonyms: dict[tuple[str, str], str] = {}
        self._pseudonym_owner: dict[str, tuple[str, str]] = {}

        if self._path is not None and self._path.exists():
            self._replay()

    # -- pseudonyms ---------------------------------------------------------

    def pseudonym_for(self, user_id: str, hsapp_id: str) -> str:
        """Stable per-(user, app) alias; collision-free by keyed hashing."""
        with self._lock:
            pair = (user_id, hsapp_id)
            cached = self._pseudonyms.get(pair)
            if cached is not None:
                return cached
            digest = hmac.new(
                self._pseudonym_key,
                user_id.encode() + b"\x1f" + hsapp_id.encode(),
                sha256,
            ).hexdigest()[:PSEUDONYM_LENGTH]
            self._pseudonyms[pair] = digest
            self._pseudonym_owner[digest] = pair
            return digest

    def owner_of_pseudonym(self, pseudonym: str) -> tuple[str, str] | None:
        with self._lock:
            return self._pseudonym_owner.get(pseudonym)

    # -- persistence ----------------------------------------------------------

    def _append(self, event: dict) -> None:
        if self._path is None:
            return
        with self._path.open("a") as fh:
            fh.write(json.dumps(event) + "\n")
            fh.flush()

    def _replay(self) -> None:
        assert self._path is not None
        with self._path.open() as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                event = json.loads(line)
                kind = event["event"]
                if kind == "user_created":
                    self._users[event["user_id"]] = parse_utc(event["at"])
                    self._tokens[event["token_sha256"]] = Principal("user", event["user_id"])
                elif kind == "hsapp_onboarded":
                    self._hsapps[event["hsapp_id"]] = event["display_name"]
                    self._tokens[event["token_sha256"]] = Principal("hsapp", event["hsapp_id"])
                elif kind == "designation_set":
                    self._designations[(event["user_id"], event["domain"])] = tuple(
                        event["source_apps"]
                    )
                elif kind == "credential_stored":
                    self._vault[(event["user_id"], event["source_app"])] = event["ciphertext"]
                elif kind == "grant_created":
                    grant = Grant(
                        grant_id=event["grant_id"],
                        user_id=event["user_id"],
                        hsapp_id=event["hsapp_id"],
                        domain=event["domain"],
                        start=parse_utc(event["start"]),
                        end=parse_utc(event["end"]),
                        status="active",
                        created_at=parse_utc(event["at"]),
                    )
                    self._grants[grant.grant_id] = grant
                    # pseudonym index rebuilt under the *current* key
                    self.pseudonym_for(grant.user_id, grant.hsapp_id)
                elif kind == "grant_revoked":
                    grant = self._grants[event["grant_id"]]
                    self._grants[grant.grant_id] = replace(
                        grant, status="revoked", revoked_at=parse_utc(event["at"])
                    )
                else:
                    raise ValueError(f"unknown consent event {kind!r}")

    # -- principals -----------------------------------------------------------

    def create_user(self, user_id: str, token: str | None = None) -> str:
        with self._lock:
            if user_id in self._users:
                raise PortalError(f"user {user_id!r} exists", code="duplicate-user")
            token = token or secrets.token_urlsafe(24)
            at = self._clock.now()
            self._users[user_id] = at
            self._tokens[hash_secret(token)] = Principal("user", user_id)
            self._append(
                {
                    "event": "user_created",
                    "at": format_utc(at),
                    "user_id": user_id,
                    "token_sha256": hash_secret(token),
                }
            )
            return token

    def onboard_hsapp(self, hsapp_id: str, display_name: str, token: str | None = None) -> str:
        with self._lock:
            if hsapp_id in self._hsapps:
                raise PortalError(f"hsapp {hsapp_id!r} exists", code="duplicate-hsapp")
            token = token or secrets.token_urlsafe(24)
            self._hsapps[hsapp_id] = display_name
            self._tokens[hash_secret(token)] = Principal("hsapp", hsapp_id)
            self._append(
                {
                    "event": "hsapp_onboarded",
                    "at": format_utc(self._clock.now()),
                    "hsapp_id": hsapp_id,
                    "display_name": display_name,
                    "token_sha256": hash_secret(token),
                }
            )
            return token

    def authenticate(self, token: str) -> Principal | None:
        with self._lock:
            return self._tokens.get(hash_secret(token))

    def user_exists(self, user_id: str) -> bool:
        with self._lock:
            return user_id in self._users

    def hsapp_exists(self, hsapp_id: str) -> bool:
        with self._lock:
            return hsapp_id in self._hsapps

    def hsapps(self) -> dict[str, str]:
        with self._lock:
            return dict(self._hsapps)

    # -- designations and vault -------------------------------------------------

    def designate_sources(
        self,
        user_id: str,
        domain: str,
        source_apps: list[str],
        known_apps: Callable[[str], bool] | None = None,
    ) -> tuple[str, ...]:
        """Replace the user's silo list for a domain."""
        with self._lock:
            self._require_user(user_id)
            for app in source_apps:
                if known_apps is not None and not known_apps(app):
                    raise UnknownSourceApp(f"no registered silo {app!r}")
            if len(set(source_apps)) != len(source_apps):
                raise PortalError("duplicate source app", code="malformed-request")
            designated = tuple(source_apps)
            self._designations[(user_id, domain)] = designated
            self._append(
                {
                    "event": "designation_set",
                    "at": format_utc(self._clock.now()),
                    "user_id": user_id,
                    "domain": domain,
                    "source_apps": source_apps,
                }
            )
        self._audit.append(
            "designation_set",
            actor=user_id,
            user_id=user_id,
            details={"domain": domain, "source_apps": source_apps},
        )
        return designated

    def designated(self, user_id: str, domain: str) -> tuple[str, ...] | None:
        with self._lock:
            return self._designations.get((user_id, domain))

    def designations_for(self, user_id: str) -> dict[str, tuple[str, ...]]:
        with self._lock:
            return {
                domain: apps
                for (uid, domain), apps in self._designations.items()
                if uid == user_id
            }

    def set_credential(self, user_id: str, source_app: str, credential: str) -> None:
        with self._lock:
            self._require_user(user_id)
            ciphertext = self._fernet.encrypt(credential.encode()).decode()
            self._vault[(user_id, source_app)] = ciphertext
            self._append(
                {
                    "event": "credential_stored",
                    "at": format_utc(self._clock.now()),
                    "user_id": user_id,
                    "source_app": source_app,
                    "ciphertext": ciphertext,
                }
            )
        self._audit.append(
            "credential_stored",
            actor=user_id,
            user_id=user_id,
            details={"source_app": source_app},
        )

    def has_credential(self, user_id: str, source_app: str) -> bool:
        with self._lock:
            return (user_id, source_app) in self._vault

    def resolve_credential(self, user_id: str, source_app: str, *, purpose: str) -> str:
        """Decrypt for an outbound silo call. Always audited; never exposed
        through any response path."""
        with self._lock:
            ciphertext = self._vault.get((user_id, source_app))
            if ciphertext is None:
                raise NoCredentialOnFile(f"no credential for {source_app!r}")
            try:
                plaintext = self._fernet.decrypt(ciphertext.encode()).decode()
            except FernetInvalidToken:
                raise NoCredentialOnFile(
                    f"credential for {source_app!r} was sealed under a different key"
                ) from None
        self._audit.append(
            "credential_resolved",
            actor="portal",
            user_id=user_id,
            details={"source_app": source_app, "purpose": purpose},
        )
        return plaintext

    # -- grants -------------------------------------------------------------

    def _require_user(self, user_id: str) -> None:
        if user_id not in self._users:
            raise UnknownUser(f"no user {user_id!r}")

    def grant_access(
        self,
        user_id: str,
        hsapp_id: str,
        domain: str,
        start: datetime | None = None,
        end: datetime | None = None,
    ) -> Grant:
        with self._lock:
            self._require_user(user_id)
            if hsapp_id not in self._hsapps:
                raise UnknownHsApp(f"no hsapp {hsapp_id!r}")
            existing = self.active_grant(user_id, hsapp_id, domain)
            if existing is not None:
                raise DuplicateGrant(
                    f"grant {existing.grant_id} already covers this", grant_id=existing.grant_id
                )
            start = start or GRANT_START_FLOOR
            end = end or GRANT_END_CEILING
            if start > end:
                raise PortalError("grant start is after end", code="malformed-request")
            at = self._clock.now()
            grant = Grant(
                grant_id=f"g-{len(self._grants) + 1:06d}",
                user_id=user_id,
                hsapp_id=hsapp_id,
                domain=domain,
                start=start,
                end=end,
                status="active",
                created_at=at,
            )
            self._grants[grant.grant_id] = grant
            pseudonym = self.pseudonym_for(user_id, hsapp_id)
            self._append(
                {
                    "event": "grant_created",
                    "at": format_utc(at),
                    "grant_id": grant.grant_id,
                    "user_id": user_id,
                    "hsapp_id": hsapp_id,
                    "domain": domain,
                    "start": format_utc(grant.start),
                    "end": format_utc(grant.end),
                }
            )
        self._audit.append(
            "grant_created",
            actor=user_id,
            user_id=user_id,
            details={
                "grant_id": grant.grant_id,
                "hsapp_id": hsapp_id,
                "domain": domain,
                "start": format_utc(grant.start),
                "end": format_utc(grant.end),
            },
        )
        # confirmation delivered to the app: pseudonym, never the user_id
        self._deliver_callback(
            hsapp_id,
            {
                "event": "grant_confirmed",
                "at": format_utc(grant.created_at),
                "grant_id": grant.grant_id,
                "pseudonym": pseudonym,
                "domain": domain,
                "start": format_utc(grant.start),
                "end": format_utc(grant.end),
            },
        )
        return grant

    def revoke_grant(self, user_id: str, grant_id: str) -> Grant:
        """Permanent; revoking again is a no-op returning the same state."""
        with self._lock:
            self._require_user(user_id)
            grant = self._grants.get(grant_id)
            if grant is None:
                raise GrantNotFound(f"no grant {grant_id!r}")
            if grant.user_id != user_id:
                raise NotOwner("grant belongs to a different user")
            if grant.status == "revoked":
                return grant
            at = self._clock.now()
            revoked = replace(grant, status="revoked", revoked_at=at)
            self._grants[grant_id] = revoked
            self._append(
                {
                    "event": "grant_revoked",
                    "at": format_utc(at),
                    "grant_id": grant_id,
                    "user_id": user_id,
                }
            )
        self._audit.append(
            "grant_revoked",
            actor=user_id,
            user_id=user_id,
            details={"grant_id": grant_id, "hsapp_id": revoked.hsapp_id,
                     "domain": revoked.domain},
        )
        self._deliver_callback(
            revoked.hsapp_id,
            {
                "event": "grant_revoked",
                "at": format_utc(at),
                "grant_id": grant_id,
                "pseudonym": self.pseudonym_for(user_id, revoked.hsapp_id),
                "domain": revoked.domain,
            },
        )
        return revoked

    def active_grant(self, user_id: str, hsapp_id: str, domain: str) -> Grant | None:
        with self._lock:
            for grant in self._grants.values():
                if (
                    grant.status == "active"
                    and grant.user_id == user_id
                    and grant.hsapp_id == hsapp_id
                    and grant.domain == domain
                ):
                    return grant
            return None

    def grants_for(self, user_id: str) -> list[Grant]:
        with self._lock:
            return [g for g in self._grants.values() if g.user_id == user_id]

    def grant(self, grant_id: str) -> Grant | None:
        with self._lock:
            return self._grants.get(grant_id)

    def check_access(
        self, pseudonym: str, domain: str, start: datetime, end: datetime
    ) -> tuple[str, str, Grant]:
        """Gate every query: pseudonym must resolve, an active grant must
        cover the domain, and the window must sit inside the grant bounds."""
        with self._lock:
            pair = self._pseudonym_owner.get(pseudonym)
            if pair is None:
                raise ConsentDenied("unknown pseudonym")
            user_id, hsapp_id = pair
            grant = self.active_grant(user_id, hsapp_id, domain)
            if grant is None:
                raise ConsentDenied(f"no active grant for domain {domain!r}")
            if start < grant.start or end > grant.end:
                raise ConsentDenied("requested window exceeds the granted bounds")
            return user_id, hsapp_id, grant

    # -- callbacks ------------------------------------------------------------

    def _deliver_callback(self, hsapp_id: str, record: dict) -> None:
        with self._lock:
            self._callbacks.setdefault(hsapp_id, []).append(record)
            if self._callback_dir is not None:
                self._callback_dir.mkdir(parents=True, exist_ok=True)
                path = self._callback_dir / f"{hsapp_id}.jsonl"
                with path.open("a") as fh:
                    fh.write(json.dumps(record) + "\n")

    def callbacks_for(self, hsapp_id: str) -> list[dict]:
        with self._lock:
            return list(self._callbacks.get(hsapp_id, []))
