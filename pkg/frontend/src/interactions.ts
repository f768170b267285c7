/** Drag-merge interaction: drag one node onto another, pick a mode from the
 * chooser, and issue exactly one merge call. */

import type { MergeMode, SteeringClient, TreeKind, TreeNode } from "./api";
import { isAncestorOrSelf } from "./render";

export interface DragMergeOptions {
  client: SteeringClient;
  sessionId: string;
  which: TreeKind;
  getRoot: () => TreeNode;
  onMerged: (version: number, node: number) => void;
  onError: (err: unknown) => void;
}

const MODES: MergeMode[] = ["absorb", "join", "collapse"];

export class DragMergeController {
  private dragSrc: number | null = null;
  private chooser: HTMLElement | null = null;
  private inFlight = false;

  constructor(
    private container: HTMLElement,
    private opts: DragMergeOptions,
  ) {
    container.addEventListener("mousedown", this.onDown);
    container.addEventListener("mouseup", this.onUp);
  }

  dispose(): void {
    this.container.removeEventListener("mousedown", this.onDown);
    this.container.removeEventListener("mouseup", this.onUp);
    this.closeChooser();
  }

  private nodeIdAt(target: EventTarget | null): number | null {
    let e = target as Element | null;
    while (e && e !== this.container) {
      const id = e.getAttribute?.("data-node-id");
      if (id !== null && id !== undefined) return Number(id);
      e = e.parentElement;
    }
    return null;
  }

  private onDown = (ev: MouseEvent): void => {
    this.dragSrc = this.nodeIdAt(ev.target);
  };

  private onUp = (ev: MouseEvent): void => {
    const src = this.dragSrc;
    this.dragSrc = null;
    if (src === null) return;
    const dst = this.nodeIdAt(ev.target);
    if (dst === null || dst === src) return;
    this.openChooser(src, dst, ev.clientX, ev.clientY);
  };

  private openChooser(src: number, dst: number, x: number, y: number): void {
    this.closeChooser();
    const doc = this.container.ownerDocument;
    const root = this.opts.getRoot();
    const related =
      isAncestorOrSelf(root, src, dst) || isAncestorOrSelf(root, dst, src);

    const box = doc.createElement("div");
    box.className = "merge-chooser";
    box.style.left = `${x}px`;
    box.style.top = `${y}px`;
    for (const mode of MODES) {
      const btn = doc.createElement("button");
      btn.textContent = mode;
      btn.setAttribute("data-mode", mode);
      if (related) {
        btn.disabled = true;
        btn.title = "cannot merge a node with its own ancestor or descendant";
      } else {
        btn.addEventListener("click", () => this.fire(src, dst, mode));
      }
      box.appendChild(btn);
    }
    const cancel = doc.createElement("button");
    cancel.textContent = "cancel";
    cancel.setAttribute("data-mode", "cancel");
    cancel.addEventListener("click", () => this.closeChooser());
    box.appendChild(cancel);

    this.container.appendChild(box);
    this.chooser = box;
  }

  private closeChooser(): void {
    this.chooser?.remove();
    this.chooser = null;
  }

  private async fire(src: number, dst: number, mode: MergeMode): Promise<void> {
    if (this.inFlight) return;
    this.inFlight = true;
    this.closeChooser();
    try {
      const res = await this.opts.client.merge(
        this.opts.sessionId,
        this.opts.which,
        src,
        dst,
        mode,
      );
      this.opts.onMerged(res.version, res.node);
    } catch (err) {
      this.opts.onError(err);
    } finally {
      this.inFlight = false;
    }
  }
}
