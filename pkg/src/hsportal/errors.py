"""Error taxonomy shared by the portal, federation engine, and SDK.

Every error carries a stable machine-readable ``code``; HTTP handlers and
the SDK translate codes, never message text.
"""

from __future__ import annotations


class PortalError(Exception):
    """Base for all domain errors; ``code`` is part of the wire contract."""

    code = "internal"

    def __init__(self, message: str, *, code: str | None = None):
        super().__init__(message)
        if code is not None:
            self.code = code

    @property
    def message(self) -> str:
        return str(self)


class MalformedRequest(PortalError):
    code = "malformed-request"

    def __init__(self, message: str, *, fields: dict[str, str] | None = None):
        super().__init__(message)
        self.fields = dict(fields or {})


class AuthorizationFailed(PortalError):
    code = "authorization-failed"


class NotOwner(PortalError):
    code = "not-owner"


class ConsentDenied(PortalError):
    code = "consent-denied"


class NoDesignation(PortalError):
    code = "no-designation"


class UnknownSourceApp(PortalError):
    code = "unknown-source-app"


class DuplicateGrant(PortalError):
    code = "duplicate-grant"

    def __init__(self, message: str, *, grant_id: str):
        super().__init__(message)
        self.grant_id = grant_id


class GrantNotFound(PortalError):
    code = "grant-not-found"


class NoCredentialOnFile(PortalError):
    code = "no-credential-on-file"


class UnknownUser(PortalError):
    code = "unknown-user"


class UnknownHsApp(PortalError):
    code = "unknown-hsapp"
