// Audit trail, newest first, one portal page (50 events) at a time.

import type { Session } from "../session.js";
import { Interlock } from "../interlock.js";
import { esc, row, table } from "../render.js";
import type { AuditEvent } from "../types.js";

/** What the row says happened, with the acting party spelled out. */
export function describeEvent(event: AuditEvent): string {
  const d = event.details ?? {};
  switch (event.kind) {
    case "query_executed":
      return `${event.actor} queried ${d["domain"] ?? "?"} data`;
    case "query_denied":
      return `${event.actor} was denied a ${d["domain"] ?? "?"} query (${d["reason"] ?? "?"})`;
    case "credential_resolved":
      return `portal used your ${d["source_app"] ?? "?"} credential (${d["purpose"] ?? "?"})`;
    case "credential_stored":
      return `you stored a credential for ${d["source_app"] ?? "?"}`;
    case "grant_created":
      return `you granted ${d["hsapp_id"] ?? event.actor} access to ${d["domain"] ?? "?"}`;
    case "grant_revoked":
      return `you revoked ${d["hsapp_id"] ?? event.actor}'s ${d["domain"] ?? "?"} access`;
    case "designation_set":
      return `you designated sources for ${d["domain"] ?? "?"}`;
    default:
      return `${event.kind} by ${event.actor}`;
  }
}

export class AuditView {
  private events: AuditEvent[] = [];
  private nextCursor: string | null = null;
  private loaded = false;

  constructor(
    private readonly session: Session,
    private readonly interlock: Interlock = new Interlock(),
  ) {}

  get page(): AuditEvent[] {
    return this.events;
  }

  get hasMore(): boolean {
    return this.nextCursor !== null;
  }

  /** First page, or a refresh back to the top of the trail. */
  async load(): Promise<void> {
    const page = await this.interlock.refresh(() =>
      this.session.client.auditPage(this.session.userId),
    );
    this.events = page.events;
    this.nextCursor = page.next_cursor;
    this.loaded = true;
  }

  /** Follow the cursor; a no-op when the trail is exhausted. */
  async loadMore(): Promise<void> {
    if (this.nextCursor === null) {
      return;
    }
    const cursor = this.nextCursor;
    const page = await this.interlock.refresh(() =>
      this.session.client.auditPage(this.session.userId, cursor),
    );
    this.events = [...this.events, ...page.events];
    this.nextCursor = page.next_cursor;
  }

  render(): string {
    const rows = this.events.map((e) =>
      row([esc(e.at), esc(e.kind), esc(describeEvent(e))]),
    );
    const body = this.loaded
      ? table(["when", "event", "what happened"], rows, "Nothing has happened yet.")
      : "<p>loading...</p>";
    const more = `<button id="audit-more"${this.hasMore ? "" : " disabled"}>older events</button>`;
    return `<section id="audit"><h2>Audit trail</h2>${body}${more}</section>`;
  }
}
