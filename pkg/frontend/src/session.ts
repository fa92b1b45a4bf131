/**
 * Sign-in and per-session state. A session exists only between a
 * successful sign-in and sign-out; nothing survives sign-out.
 */

import { PortalClient, PortalError, type FetchLike } from "./api.js";

export interface Session {
  userId: string;
  client: PortalClient;
}

export class NotAUserToken extends Error {
  constructor(kind: string) {
    super(`this token belongs to a ${kind}, not a user`);
    this.name = "NotAUserToken";
  }
}

/**
 * Validate the token against the portal and resolve who it belongs to.
 * Only user tokens produce a session; developer and controller
 * credentials are rejected outright.
 */
export async function signIn(
  portalUrl: string,
  token: string,
  fetchImpl?: FetchLike,
): Promise<Session> {
  const client = new PortalClient(portalUrl, token, fetchImpl);
  const pong = await client.ping();
  if (pong.principal.kind !== "user") {
    throw new NotAUserToken(pong.principal.kind);
  }
  return { userId: pong.principal.id, client };
}

export class SessionStore {
  private current: Session | null = null;

  get session(): Session | null {
    return this.current;
  }

  async signIn(portalUrl: string, token: string, fetchImpl?: FetchLike): Promise<Session> {
    this.signOut(); // a stale session must never leak into a new one
    this.current = await signIn(portalUrl, token, fetchImpl);
    return this.current;
  }

  signOut(): void {
    this.current = null;
  }
}

export { PortalError };
