"""How rendered requests reach silos.

The portal and the SDK both speak through this seam, so tests can run a
whole federation in process while the demo uses real sockets.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Protocol
from urllib.parse import urlsplit

import httpx

from .dab.render import ConcreteRequest


class TransportError(Exception):
    """Connection-level failure: nothing came back from the silo."""


@dataclass(frozen=True)
class TransportResponse:
    status: int
    body: bytes
    headers: Mapping[str, str] = field(default_factory=dict)


class Transport(Protocol):
    def send(self, request: ConcreteRequest) -> TransportResponse: ...


class InProcessTransport:
    """Routes by URL host to in-process silo handlers."""

    def __init__(self) -> None:
        self._hosts: dict[str, object] = {}

    def register(self, base_url: str, server) -> None:
        self._hosts[urlsplit(base_url).netloc] = server

    def send(self, request: ConcreteRequest) -> TransportResponse:
        host = urlsplit(request.url).netloc
        server = self._hosts.get(host)
        if server is None:
            raise TransportError(f"connection to {host} refused")
        if getattr(server, "down", False):
            raise TransportError(f"connection to {host} refused")
        return server.handle(request)


class HttpTransport:
    def __init__(self, timeout_seconds: float = 5.0):
        self._client = httpx.Client(timeout=timeout_seconds)

    def send(self, request: ConcreteRequest) -> TransportResponse:
        try:
            response = self._client.request(
                request.method,
                request.url,
                headers=dict(request.headers),
                content=request.body,
            )
        except httpx.HTTPError as exc:
            raise TransportError(str(exc)) from exc
        return TransportResponse(
            status=response.status_code,
            body=response.content,
            headers=dict(response.headers),
        )

    def close(self) -> None:
        self._client.close()
