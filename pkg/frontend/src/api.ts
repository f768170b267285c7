/** Typed client for the steering REST API under /api/v1. */

export interface UncertaintyBreakdown {
  model: number;
  knowledge: number;
  structure: number;
  overall: number;
}

export interface TreeNode {
  id: number;
  label: string;
  kb_ref?: string;
  uncertainty?: UncertaintyBreakdown;
  provenance?: Record<string, unknown>;
  docs?: string[];
  children: TreeNode[];
}

export interface TreePayload {
  version: number;
  tree: TreeNode;
  layout: {
    order: Record<string, number[]>;
    visible: number[];
    collapsed: number[];
  };
  categories: Record<string, number>;
}

export interface NodeDetails {
  id: number;
  label: string;
  kb_ref: string | null;
  top_terms: [string, number][];
  docs: string[];
  page: number;
  page_size: number;
  total_docs: number;
  uncertainty: UncertaintyBreakdown | null;
}

export interface JobInfo {
  id: string;
  kind?: string;
  status: "running" | "done" | "cancelled" | "failed";
  progress: number;
  error?: string;
}

export interface SessionInfo {
  id: string;
  version: number;
  docs: number;
  config: Record<string, unknown>;
  has_constraint_tree: boolean;
  has_clustering_tree: boolean;
  unassigned: string[];
  job: JobInfo | null;
}

export interface LinkedNodes {
  tree: string;
  nodes: { id: number; shared_docs: number }[];
}

export type TreeKind = "constraint" | "clustering";
export type MergeMode = "absorb" | "join" | "collapse";

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
    public path?: string,
  ) {
    super(message);
  }
}

type FetchLike = typeof fetch;

export class SteeringClient {
  constructor(
    private baseUrl = "",
    private fetchImpl: FetchLike = fetch,
  ) {}

  private async request<T>(
    method: string,
    url: string,
    body?: unknown,
  ): Promise<T> {
    const init: RequestInit = { method, headers: {} };
    if (body !== undefined) {
      init.headers = { "content-type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const resp = await this.fetchImpl(`${this.baseUrl}/api/v1${url}`, init);
    let payload: any = null;
    try {
      payload = await resp.json();
    } catch {
      payload = null;
    }
    if (!resp.ok) {
      throw new ApiError(
        resp.status,
        payload?.code ?? "Unknown",
        payload?.message ?? `request failed with ${resp.status}`,
        payload?.path,
      );
    }
    return payload as T;
  }

  createSession(body: {
    corpus: { id: string; text: string }[];
    kb?: unknown;
    config?: Record<string, unknown>;
  }): Promise<{ id: string; version: number; docs: number; kb_nodes: number }> {
    return this.request("POST", "/sessions", body);
  }

  getSession(sid: string): Promise<SessionInfo> {
    return this.request("GET", `/sessions/${sid}`);
  }

  extract(sid: string, overrides?: Record<string, unknown>): Promise<{ job_id: string }> {
    return this.request("POST", `/sessions/${sid}/extract`, overrides ?? {});
  }

  cluster(sid: string, lambda?: number): Promise<{ job_id: string }> {
    const body = lambda === undefined ? {} : { lambda };
    return this.request("POST", `/sessions/${sid}/cluster`, body);
  }

  getJob(sid: string, jid: string): Promise<JobInfo> {
    return this.request("GET", `/sessions/${sid}/jobs/${jid}`);
  }

  cancelJob(sid: string, jid: string): Promise<{ id: string; status: string }> {
    return this.request("DELETE", `/sessions/${sid}/jobs/${jid}`);
  }

  merge(
    sid: string,
    which: TreeKind,
    src: number,
    dst: number,
    mode: MergeMode,
  ): Promise<{ version: number; node: number }> {
    return this.request("POST", `/sessions/${sid}/tree/${which}/merge`, {
      src,
      dst,
      mode,
    });
  }

  removeNode(
    sid: string,
    which: TreeKind,
    nid: number,
  ): Promise<{ version: number; unassigned: string[] }> {
    return this.request("DELETE", `/sessions/${sid}/tree/${which}/nodes/${nid}`);
  }

  renameNode(
    sid: string,
    which: TreeKind,
    nid: number,
    label: string,
  ): Promise<{ version: number }> {
    return this.request(
      "POST",
      `/sessions/${sid}/tree/${which}/nodes/${nid}/rename`,
      { label },
    );
  }

  rebuild(sid: string, which: TreeKind, nid: number): Promise<{ job_id: string }> {
    return this.request(
      "POST",
      `/sessions/${sid}/tree/${which}/nodes/${nid}/rebuild`,
    );
  }

  moveDocs(
    sid: string,
    docs: string[],
    to: number,
    tree: TreeKind = "clustering",
  ): Promise<{ version: number }> {
    return this.request("POST", `/sessions/${sid}/docs/move`, {
      docs,
      to,
      tree,
    });
  }

  addDocs(
    sid: string,
    docs: { id: string; text: string }[],
    target?: number,
  ): Promise<{ version: number; placed: Record<string, number> }> {
    const body: Record<string, unknown> = { docs };
    if (target !== undefined) body.target = target;
    return this.request("POST", `/sessions/${sid}/docs/add`, body);
  }

  patchConfig(
    sid: string,
    patch: Record<string, unknown>,
  ): Promise<{ config: Record<string, unknown> }> {
    return this.request("PATCH", `/sessions/${sid}/config`, patch);
  }

  undo(sid: string): Promise<{ version: number }> {
    return this.request("POST", `/sessions/${sid}/undo`);
  }

  getTree(
    sid: string,
    which: TreeKind,
    opts?: { focus?: number; pinned?: number[]; budget?: number },
  ): Promise<TreePayload> {
    const params = new URLSearchParams();
    if (opts?.focus !== undefined) params.set("focus", String(opts.focus));
    if (opts?.pinned?.length) params.set("pinned", opts.pinned.join(","));
    if (opts?.budget !== undefined) params.set("budget", String(opts.budget));
    const qs = params.toString();
    return this.request("GET", `/sessions/${sid}/tree/${which}${qs ? "?" + qs : ""}`);
  }

  getNode(
    sid: string,
    nid: number,
    opts?: { tree?: TreeKind; page?: number; pageSize?: number },
  ): Promise<NodeDetails> {
    const params = new URLSearchParams();
    if (opts?.tree) params.set("tree", opts.tree);
    if (opts?.page !== undefined) params.set("page", String(opts.page));
    if (opts?.pageSize !== undefined) params.set("page_size", String(opts.pageSize));
    const qs = params.toString();
    return this.request("GET", `/sessions/${sid}/nodes/${nid}${qs ? "?" + qs : ""}`);
  }

  linkedNodes(sid: string, which: TreeKind, nid: number): Promise<LinkedNodes> {
    return this.request(
      "GET",
      `/sessions/${sid}/tree/${which}/nodes/${nid}/linked`,
    );
  }

  /** Poll a job every `intervalMs` until it leaves the running state. */
  async waitForJob(
    sid: string,
    jid: string,
    intervalMs = 500,
    onProgress?: (job: JobInfo) => void,
  ): Promise<JobInfo> {
    for (;;) {
      const job = await this.getJob(sid, jid);
      onProgress?.(job);
      if (job.status !== "running") return job;
      await new Promise((r) => setTimeout(r, intervalMs));
    }
  }
}
