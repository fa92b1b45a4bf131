/**
 * REST client for the portal. This is the UI's only connection to the
 * backend; no consent decision is ever made or cached on this side.
 */

import type {
  AuditPage,
  Designations,
  ErrorBody,
  Grant,
  GrantRequest,
  PingResponse,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/** A non-2xx portal response, decoded. */
export class PortalError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
    readonly fields?: Record<string, string>,
    readonly grantId?: string,
  ) {
    super(message);
    this.name = "PortalError";
  }
}

/** The portal could not be reached at all. */
export class PortalUnreachable extends Error {
  constructor(message: string) {
    super(message);
    this.name = "PortalUnreachable";
  }
}

async function decodeError(response: Response): Promise<never> {
  let body: ErrorBody;
  try {
    body = (await response.json()) as ErrorBody;
  } catch {
    throw new PortalError(response.status, "internal", `HTTP ${response.status}`);
  }
  throw new PortalError(
    response.status,
    body.error,
    body.message,
    body.fields,
    body.grant_id,
  );
}

export class PortalClient {
  constructor(
    private readonly baseUrl: string,
    private readonly token: string,
    private readonly fetchImpl: FetchLike = fetch,
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchImpl(`${this.baseUrl}${path}`, {
        method,
        headers: {
          Authorization: `Bearer ${this.token}`,
          ...(body !== undefined ? { "Content-Type": "application/json" } : {}),
        },
        body: body !== undefined ? JSON.stringify(body) : undefined,
      });
    } catch (err) {
      throw new PortalUnreachable(String(err));
    }
    if (!response.ok) {
      await decodeError(response);
    }
    return (await response.json()) as T;
  }

  ping(): Promise<PingResponse> {
    return this.request("GET", "/v1/ping");
  }

  async designations(userId: string): Promise<Designations> {
    const doc = await this.request<{ designations: Designations }>(
      "GET",
      `/v1/users/${encodeURIComponent(userId)}/designations`,
    );
    return doc.designations;
  }

  async setDesignations(userId: string, domain: string, sourceApps: string[]): Promise<string[]> {
    const doc = await this.request<{ domain: string; source_apps: string[] }>(
      "POST",
      `/v1/users/${encodeURIComponent(userId)}/designations`,
      { domain, source_apps: sourceApps },
    );
    return doc.source_apps;
  }

  async grants(userId: string): Promise<Grant[]> {
    const doc = await this.request<{ grants: Grant[] }>(
      "GET",
      `/v1/users/${encodeURIComponent(userId)}/grants`,
    );
    return doc.grants;
  }

  async createGrant(userId: string, grant: GrantRequest): Promise<Grant> {
    // the response additionally carries the app's pseudonym; the UI
    // deliberately drops it so no user-to-pseudonym pairing can render
    const doc = await this.request<Grant & { pseudonym: string }>(
      "POST",
      `/v1/users/${encodeURIComponent(userId)}/grants`,
      grant,
    );
    const { pseudonym: _discarded, ...rest } = doc;
    return rest;
  }

  revokeGrant(userId: string, grantId: string): Promise<Grant> {
    return this.request(
      "DELETE",
      `/v1/users/${encodeURIComponent(userId)}/grants/${encodeURIComponent(grantId)}`,
    );
  }

  auditPage(userId: string, cursor?: string): Promise<AuditPage> {
    const suffix = cursor ? `?cursor=${encodeURIComponent(cursor)}` : "";
    return this.request("GET", `/v1/users/${encodeURIComponent(userId)}/audit${suffix}`);
  }
}
