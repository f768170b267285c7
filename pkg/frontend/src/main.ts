/** Browser entry point: create or resume a session and mount the app. */

import { SteeringClient } from "./api";
import { App } from "./app";

async function boot(): Promise<void> {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app mount point");
  const client = new SteeringClient("");
  const params = new URLSearchParams(window.location.search);
  const sessionId = params.get("session");
  if (!sessionId) {
    root.textContent =
      "No session. Create one via POST /api/v1/sessions and open ?session=<id>.";
    return;
  }
  const app = new App(root, client, sessionId);
  const focus = params.get("focus");
  if (focus) app.state.focus = Number(focus);
  const pinned = params.get("pinned");
  if (pinned) app.state.pinned = new Set(pinned.split(",").map(Number));
  await app.refresh();
}

void boot();
