// In-memory stand-in for the portal, just enough surface for the views.
// Each instance records every request so tests can assert call order.

import type { FetchLike } from "../src/api.js";
import type { AuditEvent, Designations, Grant } from "../src/types.js";

export interface Recorded {
  method: string;
  path: string;
  body: unknown;
}

function json(status: number, doc: unknown): Response {
  return new Response(JSON.stringify(doc), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

export function errorDoc(
  status: number,
  code: string,
  message: string,
  extra: Record<string, unknown> = {},
): Response {
  return json(status, { error: code, message, ...extra });
}

export class FakePortal {
  requests: Recorded[] = [];
  designations: Designations = {};
  grants: Grant[] = [];
  events: AuditEvent[] = [];
  pageSize = 50;
  knownApps = new Set(["fitsim", "ourasim", "healthkitsim", "whatsim"]);
  principal = { kind: "user", id: "u-demo" };
  private grantSeq = 0;

  /** Optional hook: delay or hijack one request, keyed by "METHOD path". */
  intercept: Map<string, () => Promise<Response | null>> = new Map();

  readonly fetch: FetchLike = async (url, init) => {
    const method = init?.method ?? "GET";
    const { pathname, searchParams } = new URL(url);
    const body = init?.body ? JSON.parse(String(init.body)) : undefined;
    this.requests.push({ method, path: pathname, body });

    const hook = this.intercept.get(`${method} ${pathname}`);
    if (hook) {
      const hijacked = await hook();
      if (hijacked) return hijacked;
    }

    if (method === "GET" && pathname === "/v1/ping") {
      return json(200, { service: "portal", version: "0", principal: this.principal });
    }
    if (pathname === "/v1/users/u-demo/designations") {
      if (method === "GET") return json(200, { designations: this.designations });
      const apps: string[] = body.source_apps;
      const unknown = apps.find((a) => !this.knownApps.has(a));
      if (unknown) {
        return errorDoc(422, "unknown-source-app", `no silo named '${unknown}'`);
      }
      const confirmed = [...apps].sort();
      this.designations[body.domain] = confirmed;
      return json(200, { domain: body.domain, source_apps: confirmed });
    }
    if (pathname === "/v1/users/u-demo/grants" && method === "GET") {
      return json(200, { grants: this.grants });
    }
    if (pathname === "/v1/users/u-demo/grants" && method === "POST") {
      const clash = this.grants.find(
        (g) =>
          g.status === "active" && g.hsapp_id === body.hsapp_id && g.domain === body.domain,
      );
      if (clash) {
        return errorDoc(409, "duplicate-grant", "an active grant already covers this", {
          grant_id: clash.grant_id,
        });
      }
      const grant: Grant = {
        grant_id: `g-${String(++this.grantSeq).padStart(3, "0")}`,
        hsapp_id: body.hsapp_id,
        domain: body.domain,
        start: body.start ?? "1970-01-01T00:00:00Z",
        end: body.end ?? "9999-12-31T23:59:59Z",
        status: "active",
        created_at: "2024-02-01T00:00:00Z",
        revoked_at: null,
      };
      this.grants.push(grant);
      return json(201, { ...grant, pseudonym: "feedfacefeedfacefeedfacefeedface" });
    }
    const revokeMatch = pathname.match(/^\/v1\/users\/u-demo\/grants\/(.+)$/);
    if (revokeMatch && method === "DELETE") {
      const grant = this.grants.find((g) => g.grant_id === revokeMatch[1]);
      if (!grant) return errorDoc(404, "grant-not-found", "no such grant");
      grant.status = "revoked";
      grant.revoked_at = "2024-02-01T01:00:00Z";
      return json(200, grant);
    }
    if (pathname === "/v1/users/u-demo/audit" && method === "GET") {
      const cursor = searchParams.get("cursor");
      const newestFirst = [...this.events].sort((a, b) => b.seq - a.seq);
      const below = cursor
        ? newestFirst.filter((e) => e.seq < Number(cursor))
        : newestFirst;
      const page = below.slice(0, this.pageSize);
      const last = page[page.length - 1];
      const next = below.length > this.pageSize && last ? String(last.seq) : null;
      return json(200, { events: page, next_cursor: next });
    }
    return errorDoc(404, "unknown-route", `no handler for ${method} ${pathname}`);
  };
}

export function auditEvent(seq: number, kind: string, details: Record<string, unknown>): AuditEvent {
  return {
    seq,
    at: `2024-02-01T00:00:${String(seq % 60).padStart(2, "0")}Z`,
    kind,
    actor: (details["hsapp_id"] as string) ?? "u-demo",
    user_id: "u-demo",
    details,
  };
}
