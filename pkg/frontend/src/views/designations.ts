/**
 * Designations view: which source apps answer for each life domain.
 *
 * Edits go to the portal first; the list repaints from the server's
 * confirmation, never from what the user typed. A rejected edit leaves
 * the list exactly as it was and surfaces the error inline.
 */

import { PortalError } from "../api.js";
import type { Session } from "../session.js";
import { Interlock } from "../interlock.js";
import { esc, errorBox, row, table } from "../render.js";
import type { Designations } from "../types.js";

export class DesignationsView {
  private designations: Designations = {};
  private inlineError: string | null = null;

  constructor(
    private readonly session: Session,
    private readonly interlock: Interlock = new Interlock(),
  ) {}

  get current(): Designations {
    return this.designations;
  }

  get error(): string | null {
    return this.inlineError;
  }

  async load(): Promise<void> {
    this.designations = await this.interlock.refresh(() =>
      this.session.client.designations(this.session.userId),
    );
  }

  /** Replace one domain's designated apps; resolves to the confirmed list. */
  async edit(domain: string, sourceApps: string[]): Promise<string[]> {
    this.inlineError = null;
    try {
      const confirmed = await this.interlock.mutate(() =>
        this.session.client.setDesignations(this.session.userId, domain, sourceApps),
      );
      this.designations = { ...this.designations, [domain]: confirmed };
      return confirmed;
    } catch (err) {
      if (err instanceof PortalError) {
        this.inlineError = `${domain}: ${err.message}`;
        return this.designations[domain] ?? [];
      }
      throw err;
    }
  }

  render(): string {
    const domains = Object.keys(this.designations).sort();
    const rows = domains.map((domain) => {
      const apps = this.designations[domain] ?? [];
      const listing = apps.length
        ? esc(apps.join(", "))
        : `<em>no sources designated; queries for this domain return nothing</em>`;
      return row([esc(domain), listing]);
    });
    const body = table(["domain", "designated sources"], rows, "No designations yet.");
    const error = this.inlineError ? errorBox(this.inlineError) : "";
    return `<section id="designations"><h2>Source designations</h2>${error}${body}</section>`;
  }
}
