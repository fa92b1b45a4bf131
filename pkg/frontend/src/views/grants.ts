/**
 * Grant lifecycle view. Creating a grant is a two-step flow: stage()
 * produces a confirmation that spells out exactly what is being
 * authorized, and only confirm() talks to the portal. Revocation flips
 * the row to revoked strictly on the server's acknowledgement.
 */

import { PortalError } from "../api.js";
import type { Session } from "../session.js";
import { Interlock } from "../interlock.js";
import { esc, errorBox, row, table } from "../render.js";
import type { Grant, GrantRequest } from "../types.js";

export interface DuplicateGrantError {
  kind: "duplicate";
  existingGrantId: string;
  message: string;
}

export interface PlainGrantError {
  kind: "plain";
  message: string;
}

export type GrantError = DuplicateGrantError | PlainGrantError;

export class GrantsView {
  private grants: Grant[] = [];
  private staged: GrantRequest | null = null;
  private lastError: GrantError | null = null;

  constructor(
    private readonly session: Session,
    private readonly interlock: Interlock = new Interlock(),
  ) {}

  get list(): Grant[] {
    return this.grants;
  }

  get error(): GrantError | null {
    return this.lastError;
  }

  async load(): Promise<void> {
    this.grants = await this.interlock.refresh(() =>
      this.session.client.grants(this.session.userId),
    );
  }

  /** Stage a grant for confirmation; nothing is sent yet. */
  stage(request: GrantRequest): string {
    this.staged = request;
    this.lastError = null;
    return this.confirmationText(request);
  }

  /** The scope statement shown before the user commits. */
  confirmationText(request: GrantRequest): string {
    const bounds =
      request.start || request.end
        ? `from ${request.start ?? "the beginning"} to ${request.end ?? "now"}`
        : "with no date bounds";
    return `Allow ${request.hsapp_id} to query your ${request.domain} data ${bounds}?`;
  }

  cancel(): void {
    this.staged = null;
  }

  /** Send the staged grant; the list updates only from the portal's answer. */
  async confirm(): Promise<Grant | null> {
    if (this.staged === null) {
      throw new Error("nothing staged");
    }
    const request = this.staged;
    try {
      const created = await this.interlock.mutate(() =>
        this.session.client.createGrant(this.session.userId, request),
      );
      this.staged = null;
      this.grants = [...this.grants, created];
      return created;
    } catch (err) {
      if (err instanceof PortalError && err.code === "duplicate-grant" && err.grantId) {
        this.lastError = {
          kind: "duplicate",
          existingGrantId: err.grantId,
          message: err.message,
        };
        return null;
      }
      if (err instanceof PortalError) {
        this.lastError = { kind: "plain", message: err.message };
        return null;
      }
      throw err;
    }
  }

  async revoke(grantId: string): Promise<Grant> {
    const revoked = await this.interlock.mutate(() =>
      this.session.client.revokeGrant(this.session.userId, grantId),
    );
    this.grants = this.grants.map((g) => (g.grant_id === revoked.grant_id ? revoked : g));
    return revoked;
  }

  render(): string {
    const rows = this.grants.map((g) =>
      row([
        esc(g.grant_id),
        esc(g.hsapp_id),
        esc(g.domain),
        `${esc(g.start)} .. ${esc(g.end)}`,
        g.status === "active"
          ? `<strong>active</strong> <button data-revoke="${esc(g.grant_id)}">revoke</button>`
          : `revoked ${esc(g.revoked_at ?? "")}`,
      ]),
    );
    const body = table(
      ["grant", "app", "domain", "window", "status"],
      rows,
      "No grants. No application can query your data.",
    );
    let notice = "";
    if (this.lastError) {
      notice =
        this.lastError.kind === "duplicate"
          ? errorBox(this.lastError.message) +
            `<p>See the existing grant <a href="#grant-${esc(this.lastError.existingGrantId)}">` +
            `${esc(this.lastError.existingGrantId)}</a>.</p>`
          : errorBox(this.lastError.message);
    }
    const dialog = this.staged
      ? `<div class="confirm" role="dialog">${esc(this.confirmationText(this.staged))}</div>`
      : "";
    return `<section id="grants"><h2>Access grants</h2>${notice}${dialog}${body}</section>`;
  }
}
