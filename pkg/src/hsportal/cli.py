"""Operator front door: validate and register access documents, run the
portal and silos, onboard principals, seed a reproducible demo, query.

Exit codes: 0 ok, 1 bad flag values, 2 invalid document, 3 portal or
network error, 4 consent denied.
"""

from __future__ import annotations

import hashlib
import json
import os
import signal
import socket
import sys
import threading
import time
from datetime import datetime
from pathlib import Path

import click
import httpx

from . import __version__
from .dab.validate import validate_dab
from .errors import ConsentDenied, PortalError
from .federation import FederationConfig
from .portal import build_state, create_app
from .sdk import PortalUnreachable, SdkError, create_user_handle, query_function
from .silo.profiles import PROFILES, build_dab_doc
from .silo.server import SiloServer, build_fleet
from .timeutil import TimestampError, parse_utc
from .transport import HttpTransport

DEMO_WINDOW = ("2024-01-01T00:00:00Z", "2024-01-31T23:59:59Z")
DEFAULT_STATE_DIR = ".hsportal-demo"


def _die(message: str, code: int) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _parse_listen(value: str) -> tuple[str, int]:
    host, _, port = value.rpartition(":")
    if not host or not port.isdigit():
        _die(f"--listen expects host:port, got {value!r}", 1)
    return host, int(port)


def _parse_ts_flag(value: str | None, flag: str) -> datetime | None:
    if value is None:
        return None
    try:
        return parse_utc(value)
    except TimestampError as exc:
        _die(f"{flag}: {exc}", 1)
        raise AssertionError("unreachable")


def _port_free(host: str, port: int) -> bool:
    with socket.socket() as probe:
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            probe.bind((host, port))
        except OSError:
            return False
    return True


def _master_key() -> bytes:
    raw = os.environ.get("HSPORTAL_KEY")
    if not raw:
        _die("HSPORTAL_KEY must hold the master key (any string, 32+ chars)", 1)
    if len(raw) < 32:
        _die("HSPORTAL_KEY must be at least 32 characters", 1)
    return raw.encode()


def _token_key(master: bytes) -> bytes:
    raw = os.environ.get("HSPORTAL_TOKEN_KEY")
    if raw:
        return raw.encode()
    # silo trust channel defaults to a key derived from the master
    return hashlib.sha256(b"token:" + master).digest()


def _start_portal(state, host: str, port: int):
    import uvicorn

    if not _port_free(host, port):
        _die(f"{host}:{port} is already in use", 3)
    config = uvicorn.Config(
        create_app(state), host=host, port=port, log_level="warning", access_log=False
    )
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.monotonic() + 10
    while not server.started:
        if not thread.is_alive() or time.monotonic() > deadline:
            _die(f"portal failed to start on {host}:{port}", 3)
        time.sleep(0.02)
    return server


@click.group()
@click.version_option(__version__)
def main() -> None:
    """Personal-data portal toolkit."""


# -- dab ---------------------------------------------------------------------


@main.group()
def dab() -> None:
    """Work with data access documents."""


@dab.command("validate")
@click.argument("path", type=click.Path(exists=True, dir_okay=False))
def dab_validate(path: str) -> None:
    """Validate a document file; exit 0 only when it is publishable."""
    report = validate_dab(Path(path).read_bytes())
    click.echo(json.dumps(report.to_doc(), indent=2))
    if not report.ok:
        sys.exit(2)


@dab.command("register")
@click.argument("path", type=click.Path(exists=True, dir_okay=False))
@click.option("--portal", default="http://127.0.0.1:8080", show_default=True)
@click.option("--api-key", required=True, help="controller api key")
@click.option("--controller", required=True, help="controller id")
def dab_register(path: str, portal: str, api_key: str, controller: str) -> None:
    """Publish a document through a running portal."""
    try:
        doc = json.loads(Path(path).read_text())
    except ValueError as exc:
        _die(f"not valid JSON: {exc}", 2)
    try:
        response = httpx.post(
            f"{portal}/v1/controllers/{controller}/dabs",
            json=doc,
            headers={"Authorization": f"Bearer {api_key}"},
            timeout=10,
        )
    except httpx.HTTPError as exc:
        _die(f"portal unreachable: {exc}", 3)
    body = response.json()
    click.echo(json.dumps(body, indent=2))
    if response.status_code == 422:
        sys.exit(2)
    if response.status_code != 201:
        sys.exit(3)


# -- long-running services -----------------------------------------------------


@main.group("portal")
def portal_group() -> None:
    """Run the portal service."""


@portal_group.command("run")
@click.option("--listen", default="127.0.0.1:8080", show_default=True)
@click.option("--state-dir", type=click.Path(file_okay=False), required=True)
@click.option("--phase-default", type=click.Choice(["1", "2", "3"]), default="3")
def portal_run(listen: str, state_dir: str, phase_default: str) -> None:
    """Run the portal service against a persistent state directory."""
    host, port = _parse_listen(listen)
    master = _master_key()
    state = build_state(
        master,
        _token_key(master),
        state_dir=state_dir,
        config=FederationConfig(default_phase=int(phase_default)),
    )
    server = _start_portal(state, host, port)
    stop = _arm_stop_signal()
    click.echo(f"portal listening on http://{host}:{port} (state: {state_dir})")
    stop.wait()
    server.should_exit = True


@main.group("silo")
def silo_group() -> None:
    """Run simulated silos."""


@silo_group.command("run")
@click.option("--app", "app_name", type=click.Choice(sorted(PROFILES)), required=True)
@click.option("--listen", default="127.0.0.1:9001", show_default=True)
@click.option("--seed", type=int, default=42, show_default=True)
@click.option("--window", default=f"{DEMO_WINDOW[0]}..{DEMO_WINDOW[1]}", show_default=True)
@click.option("--credential", multiple=True, help="accepted account secret (repeatable)")
@click.option("--token-key", required=True, help="delegated-token trust key")
def silo_run(
    app_name: str, listen: str, seed: int, window: str, credential: tuple[str, ...], token_key: str
) -> None:
    """Serve one simulated silo over HTTP."""
    from .silo.httpd import serve_silo

    host, port = _parse_listen(listen)
    start, _, end = window.partition("..")
    if not end:
        _die("--window expects START..END timestamps", 1)
    _parse_ts_flag(start, "--window")
    _parse_ts_flag(end, "--window")
    silo = SiloServer(
        PROFILES[app_name],
        seed,
        start,
        end,
        token_key=token_key.encode(),
        accepted_credentials=credential,
        base_url=f"http://{host}:{port}",
    )
    if not _port_free(host, port):
        _die(f"{host}:{port} is already in use", 3)
    httpd = serve_silo(silo, host, port)
    stop = _arm_stop_signal()
    click.echo(f"{app_name} listening on http://{host}:{port}{silo.profile.export_path}")
    stop.wait()
    httpd.shutdown()


def _arm_stop_signal() -> threading.Event:
    # Installed before the readiness line is printed, so a consumer that
    # sends SIGTERM the moment it sees the banner still gets a clean exit.
    stop = threading.Event()
    for signum in (signal.SIGINT, signal.SIGTERM):
        signal.signal(signum, lambda *_: stop.set())
    return stop


# -- demo ----------------------------------------------------------------------


def _demo_secret(seed: int, label: str) -> str:
    return hashlib.sha256(f"hsportal-demo-{label}-{seed}".encode()).hexdigest()


@main.command("demo")
@click.option("--seed", type=int, default=42, show_default=True)
@click.option("--listen", default="127.0.0.1:8080", show_default=True)
@click.option(
    "--state-dir", type=click.Path(file_okay=False), default=DEFAULT_STATE_DIR, show_default=True
)
@click.option("--phase-default", type=click.Choice(["1", "2", "3"]), default="3")
def demo(seed: int, listen: str, state_dir: str, phase_default: str) -> None:
    """Boot portal + silo fleet, seed consent state, print the handles.

    Everything (keys, tokens, credentials, data) derives from the seed,
    so two runs with the same seed are byte-identical.
    """
    host, port = _parse_listen(listen)
    root = Path(state_dir)
    if root.exists():
        import shutil

        shutil.rmtree(root)  # a demo is a fresh world every time
    root.mkdir(parents=True)

    master = _demo_secret(seed, "master").encode()
    token_key = _demo_secret(seed, "token-key").encode()

    apps = sorted(PROFILES)
    ports = {app: port + 1 + i for i, app in enumerate(apps)}
    for needed in [port, *ports.values()]:
        if not _port_free(host, needed):
            _die(f"{host}:{needed} is already in use", 3)
    base_urls = {app: f"http://{host}:{ports[app]}" for app in apps}

    fleet = build_fleet(
        apps, seed, DEMO_WINDOW[0], DEMO_WINDOW[1], token_key=token_key, base_urls=base_urls
    )
    from .silo.httpd import serve_silo

    httpds = [serve_silo(fleet[app], host, ports[app]) for app in apps]

    state = build_state(
        master,
        token_key,
        state_dir=root,
        config=FederationConfig(default_phase=int(phase_default)),
    )

    # registry: one controller per brand, fleet documents pinned to real ports
    for app in apps:
        profile = PROFILES[app]
        if state.registry.controller(profile.controller_id) is None:
            state.registry.onboard_controller(
                profile.controller_id,
                profile.controller_id,
                _demo_secret(seed, f"key-{profile.controller_id}"),
                [a for a in apps if PROFILES[a].controller_id == profile.controller_id],
            )
        state.registry.register_dab(
            profile.controller_id,
            build_dab_doc(
                profile, fleet[app].earliest(), fleet[app].latest(), base_url=base_urls[app]
            ),
        )

    # consent state: one user, a querying app, and a spare app with no grant
    user_id = "u-demo"
    user_token = _demo_secret(seed, "user-token")
    hsapp_token = _demo_secret(seed, "hsapp-token")
    spare_token = _demo_secret(seed, "spare-token")
    state.consent.create_user(user_id, token=user_token)
    state.consent.onboard_hsapp("demo-app", "Demo App", token=hsapp_token)
    state.consent.onboard_hsapp("insight-app", "Insight App", token=spare_token)

    domains: dict[str, list[str]] = {}
    for app in apps:
        domains.setdefault(PROFILES[app].domain, []).append(app)
    for domain, domain_apps in sorted(domains.items()):
        state.consent.designate_sources(user_id, domain, domain_apps)
    for app in apps:
        secret = _demo_secret(seed, f"credential-{app}")
        state.consent.set_credential(user_id, app, secret)
        fleet[app].accept_credential(secret)
    for domain in sorted(domains):
        state.consent.grant_access(user_id, "demo-app", domain)

    env = {
        "portal": f"http://{host}:{port}",
        "seed": seed,
        "user_id": user_id,
        "user_token": user_token,
        "hsapp_id": "demo-app",
        "hsapp_token": hsapp_token,
        "pseudonym": state.consent.pseudonym_for(user_id, "demo-app"),
        "spare_hsapp_id": "insight-app",
        "spare_hsapp_token": spare_token,
        "domains": sorted(domains),
        "silos": base_urls,
        "window": {"start": DEMO_WINDOW[0], "end": DEMO_WINDOW[1]},
    }
    env_path = root / "demo-env.json"
    env_path.write_text(json.dumps(env, indent=2) + "\n")

    server = _start_portal(state, host, port)
    stop = _arm_stop_signal()
    width = max(10, max(map(len, apps)) + 2)
    click.echo(f"{'portal':<{width}}http://{host}:{port}")
    for app in apps:
        click.echo(f"{app:<{width}}{base_urls[app]}{PROFILES[app].export_path}")
    click.echo(f"{'env file':<{width}}{env_path}")
    click.echo(f'{"try:":<{width}}hsportal query --domain health --env "{env_path}"')
    click.echo("ready")
    stop.wait()
    server.should_exit = True
    for httpd in httpds:
        httpd.shutdown()


# -- query ----------------------------------------------------------------------


@main.command("query")
@click.option("--domain", required=True)
@click.option("--metrics", default="", help="comma-separated metric names")
@click.option("--start")
@click.option("--end")
@click.option("--phase", type=click.Choice(["1", "2", "3"]), default=None)
@click.option(
    "--env",
    "env_path",
    type=click.Path(exists=True, dir_okay=False),
    default=f"{DEFAULT_STATE_DIR}/demo-env.json",
    show_default=True,
)
@click.option("--output", type=click.Choice(["table", "json"]), default="table")
def query(
    domain: str,
    metrics: str,
    start: str | None,
    end: str | None,
    phase: str | None,
    env_path: str,
    output: str,
) -> None:
    """Query one domain through the portal using the demo environment."""
    env = json.loads(Path(env_path).read_text())
    start_at = _parse_ts_flag(start, "--start")
    end_at = _parse_ts_flag(end, "--end")
    wanted = tuple(m.strip() for m in metrics.split(",") if m.strip())
    try:
        handle = create_user_handle(env["portal"], env["hsapp_token"], env["pseudonym"])
    except SdkError as exc:
        _die(str(exc), 3)
    try:
        outcome = query_function(
            handle,
            domain,
            metrics=wanted,
            start=start_at,
            end=end_at,
            phase=int(phase) if phase else None,
        )
    except ConsentDenied as exc:
        _die(str(exc), 4)
    except PortalUnreachable as exc:
        _die(str(exc), 3)
    except PortalError as exc:
        _die(f"{exc.code}: {exc}", 3)
    finally:
        handle.close()

    if output == "json":
        click.echo(
            json.dumps(
                {
                    "records": [r.to_doc() for r in outcome.records],
                    "failures": outcome.failures,
                },
                indent=2,
            )
        )
        return
    rows = [
        (
            r.to_doc()["timestamp"],
            r.source_app,
            r.metric,
            f"{r.value:.4f}" if isinstance(r.value, float) else str(r.value),
            r.unit,
        )
        for r in outcome.records
    ]
    header = ("timestamp", "source_app", "metric", "value", "unit")
    widths = [
        max(len(header[i]), *(len(row[i]) for row in rows)) if rows else len(header[i])
        for i in range(5)
    ]
    click.echo("  ".join(h.ljust(widths[i]) for i, h in enumerate(header)))
    for row in rows:
        click.echo("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)))
    click.echo(f"{len(rows)} records")
    for failure in outcome.failures:
        click.echo(
            f"warning: {failure['source_app']}: {failure['error']['code']} "
            f"({failure['error']['message']})",
            err=True,
        )


# -- consent operations against a running portal ---------------------------------


def _user_request(portal: str, token: str, method: str, path: str, body: dict | None) -> dict:
    try:
        response = httpx.request(
            method,
            f"{portal}{path}",
            json=body,
            headers={"Authorization": f"Bearer {token}"},
            timeout=10,
        )
    except httpx.HTTPError as exc:
        _die(f"portal unreachable: {exc}", 3)
    doc = response.json()
    click.echo(json.dumps(doc, indent=2))
    if response.status_code >= 400:
        sys.exit(4 if doc.get("error") == "consent-denied" else 3)
    return doc


@main.group()
def user() -> None:
    """Consent operations for a user against a running portal."""


_portal_opt = click.option("--portal", default="http://127.0.0.1:8080", show_default=True)
_token_opt = click.option("--token", required=True, help="user bearer token")
_user_opt = click.option("--user-id", required=True)


@user.command("grant")
@_portal_opt
@_token_opt
@_user_opt
@click.option("--hsapp", required=True)
@click.option("--domain", required=True)
@click.option("--start")
@click.option("--end")
def user_grant(
    portal: str, token: str, user_id: str, hsapp: str, domain: str, start: str | None, end: str | None
) -> None:
    """Allow an app to query one domain; prints the grant and pseudonym."""
    for flag, value in (("--start", start), ("--end", end)):
        _parse_ts_flag(value, flag)
    body = {"hsapp_id": hsapp, "domain": domain}
    if start:
        body["start"] = start
    if end:
        body["end"] = end
    _user_request(portal, token, "POST", f"/v1/users/{user_id}/grants", body)


@user.command("revoke")
@_portal_opt
@_token_opt
@_user_opt
@click.option("--grant-id", required=True)
def user_revoke(portal: str, token: str, user_id: str, grant_id: str) -> None:
    _user_request(portal, token, "DELETE", f"/v1/users/{user_id}/grants/{grant_id}", None)


@user.command("designate")
@_portal_opt
@_token_opt
@_user_opt
@click.option("--domain", required=True)
@click.option("--apps", required=True, help="comma-separated source apps")
def user_designate(portal: str, token: str, user_id: str, domain: str, apps: str) -> None:
    body = {
        "domain": domain,
        "source_apps": [a.strip() for a in apps.split(",") if a.strip()],
    }
    _user_request(portal, token, "POST", f"/v1/users/{user_id}/designations", body)


# -- offline onboarding (writes the state directory directly) --------------------


def _offline_state(state_dir: str):
    master = _master_key()
    return build_state(master, _token_key(master), state_dir=state_dir)


@main.group()
def onboard() -> None:
    """Create principals in a state directory (run while the portal is stopped)."""


@onboard.command("controller")
@click.option("--state-dir", type=click.Path(file_okay=False), required=True)
@click.option("--id", "controller_id", required=True)
@click.option("--name", required=True)
@click.option("--api-key", required=True)
@click.option("--apps", required=True, help="comma-separated source apps it controls")
def onboard_controller(
    state_dir: str, controller_id: str, name: str, api_key: str, apps: str
) -> None:
    state = _offline_state(state_dir)
    record = state.registry.onboard_controller(
        controller_id, name, api_key, [a.strip() for a in apps.split(",") if a.strip()]
    )
    click.echo(json.dumps({"controller_id": record.controller_id, "source_apps": sorted(record.source_apps)}))


@onboard.command("user")
@click.option("--state-dir", type=click.Path(file_okay=False), required=True)
@click.option("--id", "user_id", required=True)
def onboard_user(state_dir: str, user_id: str) -> None:
    state = _offline_state(state_dir)
    token = state.consent.create_user(user_id)
    click.echo(json.dumps({"user_id": user_id, "token": token}))
    click.echo("store the token now; only its hash is kept", err=True)


@onboard.command("hsapp")
@click.option("--state-dir", type=click.Path(file_okay=False), required=True)
@click.option("--id", "hsapp_id", required=True)
@click.option("--name", required=True)
def onboard_hsapp(state_dir: str, hsapp_id: str, name: str) -> None:
    state = _offline_state(state_dir)
    token = state.consent.onboard_hsapp(hsapp_id, name)
    click.echo(json.dumps({"hsapp_id": hsapp_id, "token": token}))
    click.echo("store the token now; only its hash is kept", err=True)


if __name__ == "__main__":
    main()
