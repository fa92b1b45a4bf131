/**
 * Composition root: one signed-in session drives the three views.
 * All views share one interlock, so a consent mutation anywhere blocks
 * the background audit refresh until the portal has acknowledged it.
 */

import type { FetchLike } from "./api.js";
import { Interlock } from "./interlock.js";
import { SessionStore } from "./session.js";
import { AuditView } from "./views/audit.js";
import { DesignationsView } from "./views/designations.js";
import { GrantsView } from "./views/grants.js";

export class ConsentApp {
  readonly sessions = new SessionStore();
  private interlock = new Interlock();
  private views: {
    designations: DesignationsView;
    grants: GrantsView;
    audit: AuditView;
  } | null = null;

  constructor(
    private readonly portalUrl: string,
    private readonly fetchImpl?: FetchLike,
  ) {}

  get designations(): DesignationsView {
    return this.require().designations;
  }

  get grants(): GrantsView {
    return this.require().grants;
  }

  get audit(): AuditView {
    return this.require().audit;
  }

  get signedIn(): boolean {
    return this.views !== null;
  }

  private require() {
    if (this.views === null) {
      throw new Error("not signed in");
    }
    return this.views;
  }

  async signIn(token: string): Promise<void> {
    const session = await this.sessions.signIn(this.portalUrl, token, this.fetchImpl);
    this.interlock = new Interlock();
    this.views = {
      designations: new DesignationsView(session, this.interlock),
      grants: new GrantsView(session, this.interlock),
      audit: new AuditView(session, this.interlock),
    };
    await Promise.all([
      this.views.designations.load(),
      this.views.grants.load(),
      this.views.audit.load(),
    ]);
  }

  signOut(): void {
    this.sessions.signOut();
    this.views = null; // nothing rendered or cached survives sign-out
  }

  /** Re-pull the audit trail; waits out any in-flight consent mutation. */
  refreshAudit(): Promise<void> {
    return this.require().audit.load();
  }

  render(): string {
    if (this.views === null) {
      return `<section id="signin"><h2>Sign in</h2><p>Paste your user token to manage consent.</p></section>`;
    }
    return [
      this.views.designations.render(),
      this.views.grants.render(),
      this.views.audit.render(),
    ].join("\n");
  }
}
