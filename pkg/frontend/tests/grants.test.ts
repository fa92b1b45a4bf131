import { beforeEach, describe, expect, it } from "vitest";

import { signIn } from "../src/session.js";
import { GrantsView } from "../src/views/grants.js";
import { FakePortal } from "./fake-portal.js";

let portal: FakePortal;
let view: GrantsView;

beforeEach(async () => {
  portal = new FakePortal();
  const session = await signIn("http://portal.test", "tok", portal.fetch);
  view = new GrantsView(session);
  await view.load();
});

describe("grant creation", () => {
  it("states domain and bounds verbatim before anything is sent", () => {
    const text = view.stage({
      hsapp_id: "coach-app",
      domain: "health",
      start: "2024-01-01T00:00:00Z",
      end: "2024-01-31T23:59:59Z",
    });
    expect(text).toContain("coach-app");
    expect(text).toContain("health");
    expect(text).toContain("from 2024-01-01T00:00:00Z to 2024-01-31T23:59:59Z");
    expect(portal.requests.filter((r) => r.method === "POST")).toHaveLength(0);
    expect(view.render()).toContain('role="dialog"');
  });

  it("spells out unbounded grants too", () => {
    expect(view.confirmationText({ hsapp_id: "a", domain: "iot" })).toContain(
      "with no date bounds",
    );
  });

  it("adds the grant only after the portal answers", async () => {
    view.stage({ hsapp_id: "coach-app", domain: "health" });
    const created = await view.confirm();
    expect(created?.grant_id).toBe("g-001");
    expect(view.list).toHaveLength(1);
    expect(view.render()).not.toContain('role="dialog"');
  });

  it("cancelling sends nothing", () => {
    view.stage({ hsapp_id: "coach-app", domain: "health" });
    view.cancel();
    expect(portal.requests.filter((r) => r.method === "POST")).toHaveLength(0);
  });

  it("links the existing grant on a duplicate attempt", async () => {
    view.stage({ hsapp_id: "coach-app", domain: "health" });
    await view.confirm();
    view.stage({ hsapp_id: "coach-app", domain: "health" });
    const second = await view.confirm();
    expect(second).toBeNull();
    expect(view.error?.kind).toBe("duplicate");
    const html = view.render();
    expect(html).toContain('href="#grant-g-001"');
    expect(view.list).toHaveLength(1);
  });

  it("never renders the pseudonym the portal attaches", async () => {
    view.stage({ hsapp_id: "coach-app", domain: "health" });
    await view.confirm();
    expect(view.render()).not.toContain("feedface");
    expect(JSON.stringify(view.list)).not.toContain("feedface");
  });
});

describe("revocation", () => {
  it("flips the row only on server acknowledgement", async () => {
    view.stage({ hsapp_id: "coach-app", domain: "health" });
    await view.confirm();
    portal.intercept.set("DELETE /v1/users/u-demo/grants/g-001", async () => {
      expect(view.list[0]?.status).toBe("active");
      return null;
    });
    const revoked = await view.revoke("g-001");
    expect(revoked.status).toBe("revoked");
    expect(view.list[0]?.status).toBe("revoked");
    expect(view.render()).toContain("revoked 2024-02-01T01:00:00Z");
  });

  it("renders a revoke control only for active grants", async () => {
    view.stage({ hsapp_id: "coach-app", domain: "health" });
    await view.confirm();
    expect(view.render()).toContain('data-revoke="g-001"');
    await view.revoke("g-001");
    expect(view.render()).not.toContain("data-revoke");
  });
});
