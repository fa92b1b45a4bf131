/** Wire shapes of the portal REST API (see docs/api.md in the backend repo). */

export interface Principal {
  kind: "user" | "hsapp" | "controller";
  id: string;
}

export interface PingResponse {
  service: string;
  version: string;
  principal: Principal;
}

/** Domain name to the ordered list of designated source apps. */
export type Designations = Record<string, string[]>;

export interface Grant {
  grant_id: string;
  hsapp_id: string;
  domain: string;
  start: string;
  end: string;
  status: "active" | "revoked";
  created_at: string;
  revoked_at: string | null;
}

export interface GrantRequest {
  hsapp_id: string;
  domain: string;
  start?: string;
  end?: string;
}

export interface AuditEvent {
  seq: number;
  at: string;
  kind: string;
  actor: string;
  user_id: string | null;
  details: Record<string, unknown> | null;
}

export interface AuditPage {
  events: AuditEvent[];
  next_cursor: string | null;
}

export interface ErrorBody {
  error: string;
  message: string;
  fields?: Record<string, string>;
  grant_id?: string;
}
