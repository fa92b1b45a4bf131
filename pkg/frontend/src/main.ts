// Browser entry point. Everything interesting lives in ConsentApp;
// this file only wires DOM events to it.

import { ConsentApp } from "./app.js";
import { loadConfig } from "./config.js";

function paint(app: ConsentApp, root: HTMLElement): void {
  root.innerHTML = app.render();
  root.querySelectorAll<HTMLButtonElement>("[data-revoke]").forEach((button) => {
    button.addEventListener("click", async () => {
      await app.grants.revoke(button.dataset["revoke"] ?? "");
      await app.refreshAudit();
      paint(app, root);
    });
  });
  const more = root.querySelector<HTMLButtonElement>("#audit-more");
  more?.addEventListener("click", async () => {
    await app.audit.loadMore();
    paint(app, root);
  });
}

export async function boot(root: HTMLElement): Promise<void> {
  const config = await loadConfig();
  const app = new ConsentApp(config.portalUrl);
  const token = new URLSearchParams(window.location.search).get("token");
  if (token) {
    await app.signIn(token);
  }
  paint(app, root);
}

if (typeof document !== "undefined") {
  const root = document.getElementById("app");
  if (root) {
    void boot(root);
  }
}
