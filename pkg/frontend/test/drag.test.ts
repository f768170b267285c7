import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { SteeringClient } from "../src/api";
import { DragMergeController } from "../src/interactions";
import { renderTreePanel } from "../src/render";
import { fixturePayload } from "./fixtures";

interface Recorded {
  url: string;
  method: string;
  body: unknown;
}

function mockFetch(calls: Recorded[]): typeof fetch {
  return (async (input: any, init?: RequestInit) => {
    calls.push({
      url: String(input),
      method: init?.method ?? "GET",
      body: init?.body ? JSON.parse(String(init.body)) : undefined,
    });
    return new Response(JSON.stringify({ version: 2, node: 1 }), {
      status: 200,
      headers: { "content-type": "application/json" },
    });
  }) as typeof fetch;
}

function mouse(el: Element, type: string): void {
  el.dispatchEvent(new MouseEvent(type, { bubbles: true }));
}

describe("drag-merge interaction", () => {
  let container: HTMLElement;
  let calls: Recorded[];
  let controller: DragMergeController;
  let merged: [number, number][];
  let errors: unknown[];
  const payload = fixturePayload();

  beforeEach(() => {
    document.body.innerHTML = "";
    container = document.createElement("div");
    document.body.appendChild(container);
    container.appendChild(renderTreePanel(document, payload, "clustering"));
    calls = [];
    merged = [];
    errors = [];
    controller = new DragMergeController(container, {
      client: new SteeringClient("http://host", mockFetch(calls)),
      sessionId: "s1",
      which: "clustering",
      getRoot: () => payload.tree,
      onMerged: (v, n) => merged.push([v, n]),
      onError: (e) => errors.push(e),
    });
  });

  afterEach(() => {
    controller.dispose();
  });

  const nodeEl = (nid: number) =>
    container.querySelector(`g[data-node-id="${nid}"]`)!;

  function drag(src: number, dst: number): HTMLElement | null {
    mouse(nodeEl(src), "mousedown");
    mouse(nodeEl(dst), "mouseup");
    return container.querySelector(".merge-chooser");
  }

  it("issues exactly one merge call with the chosen mode", async () => {
    const chooser = drag(2, 4)!;
    expect(chooser).not.toBeNull();
    // No network traffic before a mode is picked.
    expect(calls.length).toBe(0);
    const join = chooser.querySelector('button[data-mode="join"]')!;
    (join as HTMLButtonElement).click();
    (join as HTMLButtonElement).click(); // double-click must not double-fire
    await vi.waitFor(() => expect(merged.length).toBe(1));
    expect(calls.length).toBe(1);
    expect(calls[0].method).toBe("POST");
    expect(calls[0].url).toBe(
      "http://host/api/v1/sessions/s1/tree/clustering/merge",
    );
    expect(calls[0].body).toEqual({ src: 2, dst: 4, mode: "join" });
    expect(merged[0]).toEqual([2, 1]);
    expect(container.querySelector(".merge-chooser")).toBeNull();
    expect(errors.length).toBe(0);
  });

  it("offers all three merge modes plus cancel", () => {
    const chooser = drag(2, 4)!;
    const modes = [...chooser.querySelectorAll("button")].map((b) =>
      b.getAttribute("data-mode"),
    );
    expect(modes).toEqual(["absorb", "join", "collapse", "cancel"]);
    (chooser.querySelector('button[data-mode="cancel"]') as HTMLButtonElement).click();
    expect(container.querySelector(".merge-chooser")).toBeNull();
    expect(calls.length).toBe(0);
  });

  it("disables merging a node onto its own descendant or ancestor", () => {
    for (const [src, dst] of [
      [1, 2], // onto own descendant
      [2, 1], // onto own ancestor
    ]) {
      const chooser = drag(src, dst)!;
      expect(chooser).not.toBeNull();
      for (const mode of ["absorb", "join", "collapse"]) {
        const btn = chooser.querySelector(
          `button[data-mode="${mode}"]`,
        ) as HTMLButtonElement;
        expect(btn.disabled).toBe(true);
        expect(btn.title).toContain("ancestor");
        btn.click();
      }
      expect(calls.length).toBe(0);
      (chooser.querySelector('button[data-mode="cancel"]') as HTMLButtonElement).click();
    }
  });

  it("ignores drops back onto the source or outside any node", () => {
    expect(drag(2, 2)).toBeNull();
    mouse(nodeEl(2), "mousedown");
    mouse(container, "mouseup");
    expect(container.querySelector(".merge-chooser")).toBeNull();
    expect(calls.length).toBe(0);
  });

  it("reports API failures through onError without throwing", async () => {
    controller.dispose();
    const failing = (async () =>
      new Response(
        JSON.stringify({ code: "Conflict", message: "stale version" }),
        { status: 409, headers: { "content-type": "application/json" } },
      )) as unknown as typeof fetch;
    controller = new DragMergeController(container, {
      client: new SteeringClient("", failing),
      sessionId: "s1",
      which: "clustering",
      getRoot: () => payload.tree,
      onMerged: (v, n) => merged.push([v, n]),
      onError: (e) => errors.push(e),
    });
    const chooser = drag(2, 4)!;
    (chooser.querySelector('button[data-mode="absorb"]') as HTMLButtonElement).click();
    await vi.waitFor(() => expect(errors.length).toBe(1));
    expect(merged.length).toBe(0);
    expect((errors[0] as any).code).toBe("Conflict");
  });
});
