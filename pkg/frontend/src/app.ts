/** Application shell: juxtaposed panels, details sidebar, job progress, and
 * the constraint-weight slider. */

import {
  ApiError,
  JobInfo,
  SteeringClient,
  TreeKind,
  TreeNode,
  TreePayload,
} from "./api";
import { DragMergeController } from "./interactions";
import { renderTreePanel } from "./render";

export interface ViewState {
  sessionId: string;
  focus: number | null;
  pinned: Set<number>;
  selected: number | null;
  lambda: number;
}

export class App {
  state: ViewState;
  payloads: Partial<Record<TreeKind, TreePayload>> = {};
  private controllers: DragMergeController[] = [];
  private highlighted: Partial<Record<TreeKind, Set<number>>> = {};
  private pollHandle: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private root: HTMLElement,
    private client: SteeringClient,
    sessionId: string,
  ) {
    this.state = {
      sessionId,
      focus: null,
      pinned: new Set(),
      selected: null,
      lambda: 1e-6,
    };
    this.buildSkeleton();
  }

  private get doc(): Document {
    return this.root.ownerDocument;
  }

  private buildSkeleton(): void {
    this.root.innerHTML = `
      <div class="banner" hidden></div>
      <div class="toolbar">
        <label>constraint weight
          <input type="range" class="lambda" min="-8" max="-2" step="0.5" value="-6">
        </label>
        <span class="lambda-value">1e-6</span>
        <button class="update">Update</button>
        <button class="undo">Undo</button>
        <progress class="job" max="1" value="0" hidden></progress>
        <button class="cancel" hidden>Cancel</button>
      </div>
      <div class="panels">
        <div class="panel" data-panel="constraint"><h3>Constraint tree</h3><div class="canvas"></div></div>
        <div class="panel" data-panel="clustering"><h3>Clustering tree</h3><div class="canvas"></div></div>
      </div>
      <div class="details" hidden></div>
    `;
    const slider = this.root.querySelector<HTMLInputElement>(".lambda")!;
    slider.addEventListener("input", () => {
      this.state.lambda = Math.pow(10, Number(slider.value));
      this.root.querySelector(".lambda-value")!.textContent =
        this.state.lambda.toExponential(0);
    });
    this.root
      .querySelector<HTMLButtonElement>(".update")!
      .addEventListener("click", () => void this.updateClustering());
    this.root
      .querySelector<HTMLButtonElement>(".undo")!
      .addEventListener("click", () => void this.undo());
  }

  showError(err: unknown): void {
    const banner = this.root.querySelector<HTMLElement>(".banner")!;
    banner.hidden = false;
    banner.textContent =
      err instanceof ApiError
        ? `${err.code}: ${err.message}`
        : `error: ${String(err)}`;
  }

  async refresh(): Promise<void> {
    for (const which of ["constraint", "clustering"] as TreeKind[]) {
      try {
        this.payloads[which] = await this.client.getTree(
          this.state.sessionId,
          which,
          {
            focus: this.state.focus ?? undefined,
            pinned: [...this.state.pinned],
          },
        );
      } catch (err) {
        if (err instanceof ApiError && err.status === 404) {
          delete this.payloads[which];
          continue;
        }
        this.showError(err);
        return;
      }
    }
    this.renderPanels();
  }

  renderPanels(): void {
    for (const c of this.controllers) c.dispose();
    this.controllers = [];
    for (const which of ["constraint", "clustering"] as TreeKind[]) {
      const canvas = this.root.querySelector<HTMLElement>(
        `[data-panel="${which}"] .canvas`,
      )!;
      canvas.innerHTML = "";
      const payload = this.payloads[which];
      if (!payload) continue;
      const svg = renderTreePanel(this.doc, payload, which, {
        selected: this.state.selected,
        highlighted: this.highlighted[which],
      });
      canvas.appendChild(svg);
      this.controllers.push(
        new DragMergeController(canvas, {
          client: this.client,
          sessionId: this.state.sessionId,
          which,
          getRoot: () => payload.tree,
          onMerged: () => void this.refresh(),
          onError: (err) => this.showError(err),
        }),
      );
      canvas.addEventListener("click", (ev) => {
        const nid = nodeIdFrom(ev.target, canvas);
        if (nid !== null) void this.select(which, nid);
      });
      canvas.addEventListener("dblclick", (ev) => {
        const nid = nodeIdFrom(ev.target, canvas);
        if (nid !== null) {
          this.state.focus = nid;
          void this.refresh();
        }
      });
    }
  }

  async select(which: TreeKind, nid: number): Promise<void> {
    this.state.selected = nid;
    try {
      const details = await this.client.getNode(this.state.sessionId, nid, {
        tree: which,
      });
      const linked = await this.client.linkedNodes(
        this.state.sessionId,
        which,
        nid,
      );
      const other: TreeKind =
        which === "constraint" ? "clustering" : "constraint";
      this.highlighted[other] = new Set(linked.nodes.map((n) => n.id));
      const panel = this.root.querySelector<HTMLElement>(".details")!;
      panel.hidden = false;
      const maxCount = Math.max(1, ...details.top_terms.map(([, c]) => c));
      panel.innerHTML = `
        <h4>${details.label || "#" + details.id}</h4>
        <div class="terms">${details.top_terms
          .map(
            ([w, c]) =>
              `<span style="font-size:${10 + Math.round((10 * c) / maxCount)}px">${w}</span>`,
          )
          .join(" ")}</div>
        <table class="docs">${details.docs
          .map((d) => `<tr><td>${d}</td></tr>`)
          .join("")}</table>
        <div class="uncertainty">${
          details.uncertainty
            ? `overall ${details.uncertainty.overall.toFixed(2)}`
            : "no uncertainty yet"
        }</div>
      `;
      this.renderPanels();
    } catch (err) {
      this.showError(err);
    }
  }

  async updateClustering(): Promise<void> {
    try {
      await this.client.patchConfig(this.state.sessionId, {
        lambda: this.state.lambda,
      });
      const { job_id } = await this.client.cluster(this.state.sessionId);
      await this.trackJob(job_id);
      await this.refresh();
    } catch (err) {
      this.showError(err);
    }
  }

  async undo(): Promise<void> {
    try {
      await this.client.undo(this.state.sessionId);
      await this.refresh();
    } catch (err) {
      this.showError(err);
    }
  }

  private async trackJob(jobId: string): Promise<JobInfo> {
    const bar = this.root.querySelector<HTMLProgressElement>(".job")!;
    const cancel = this.root.querySelector<HTMLButtonElement>(".cancel")!;
    bar.hidden = false;
    cancel.hidden = false;
    const onCancel = () =>
      void this.client.cancelJob(this.state.sessionId, jobId);
    cancel.addEventListener("click", onCancel);
    try {
      return await this.client.waitForJob(
        this.state.sessionId,
        jobId,
        500,
        (job) => {
          bar.value = job.progress;
        },
      );
    } finally {
      cancel.removeEventListener("click", onCancel);
      bar.hidden = true;
      cancel.hidden = true;
    }
  }
}

function nodeIdFrom(target: EventTarget | null, stop: Element): number | null {
  let e = target as Element | null;
  while (e && e !== stop) {
    const id = e.getAttribute?.("data-node-id");
    if (id !== null && id !== undefined) return Number(id);
    e = e.parentElement;
  }
  return null;
}

export function treeNodeById(root: TreeNode, nid: number): TreeNode | null {
  const stack = [root];
  while (stack.length) {
    const n = stack.pop()!;
    if (n.id === nid) return n;
    stack.push(...n.children);
  }
  return null;
}
