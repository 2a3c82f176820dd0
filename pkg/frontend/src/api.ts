/**
 * Typed client for the simplification service.
 *
 * Same-origin by default (the service serves the built UI); pass a base URL
 * for tests or remote development. Slow proposals are transparently parked
 * by the server (202 + poll handle); `propose` hides the polling loop.
 */

export type LevelName = "distractor" | "secondary" | "primary" | "background";

export interface StepDoc {
  element: string;
  description: string;
  level: LevelName;
  status: "accepted" | "skipped";
  attempts: number;
  has_mask?: boolean;
}

export interface DirectiveDoc {
  action: string;
  element: string | null;
}

export interface NodeDoc {
  id: number;
  parent: number | null;
  children: number[];
  active_level: LevelName;
  removed: string[];
  excluded: string[];
  skipped: string[];
  directive: DirectiveDoc | null;
  step: StepDoc | null;
  skipped_steps: StepDoc[];
}

export interface TreeDoc {
  session_id: string;
  status: string;
  source_kind: "scene" | "image";
  content_hash: string;
  pending_proposals: number[];
  root: number;
  main_path: number[];
  nodes: NodeDoc[];
}

export interface VerifyDoc {
  score: number;
  pass: boolean;
  threshold: number;
  diagnostics: Record<string, number>;
}

export interface ProposalDoc {
  node_id: number;
  status: "ready" | "all_candidates_failed" | "done";
  level: LevelName | null;
  element: string | null;
  description: string | null;
  attempts: number;
  mask_source?: string;
  verify: VerifyDoc | null;
  preview_png: string | null;
  change_mask_png: string | null;
}

export interface SessionSummary {
  session_id: string;
  status: string;
  nodes: number;
  source_kind: string;
}

export interface ExportManifest {
  export_id: string;
  session_id: string;
  node_id: number;
  repeat: number;
  total: number;
  frame_count: number;
  path: number[];
  archive: string;
}

export type DecisionAction = "accept" | "skip" | "force_remove" | "forbid";

/** Non-2xx reply; `status` drives conflict-vs-failure handling upstream. */
export class ApiError extends Error {
  constructor(
    public readonly status: number,
    detail: string,
  ) {
    super(detail);
    this.name = "ApiError";
  }
}

const POLL_INTERVAL_MS = 150;
const POLL_TIMEOUT_MS = 120_000;

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

export class Client {
  constructor(readonly base: string = "") {}

  private async request<T>(path: string, init?: RequestInit): Promise<{ status: number; body: T }> {
    const resp = await fetch(this.base + path, init);
    const text = await resp.text();
    let body: unknown = null;
    try {
      body = text ? JSON.parse(text) : null;
    } catch {
      body = text;
    }
    if (!resp.ok) {
      const detail =
        body && typeof body === "object" && "detail" in body
          ? String((body as { detail: unknown }).detail)
          : `${resp.status} ${resp.statusText}`;
      throw new ApiError(resp.status, detail);
    }
    return { status: resp.status, body: body as T };
  }

  private post<T>(path: string, payload: unknown): Promise<{ status: number; body: T }> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  async listSessions(): Promise<SessionSummary[]> {
    return (await this.request<SessionSummary[]>("/sessions")).body;
  }

  async createSession(payload: Record<string, unknown>): Promise<{ session_id: string; status: string }> {
    return (await this.post<{ session_id: string; status: string }>("/sessions", payload)).body;
  }

  async tree(sid: string): Promise<TreeDoc> {
    return (await this.request<TreeDoc>(`/sessions/${sid}/tree`)).body;
  }

  /** Next-removal proposal for a node, polling through parked jobs. */
  async propose(sid: string, nodeId: number): Promise<ProposalDoc> {
    const first = await this.post<ProposalDoc | { job_id: string; state: string; poll: string }>(
      `/sessions/${sid}/nodes/${nodeId}/propose`,
      {},
    );
    if (first.status !== 202) return first.body as ProposalDoc;
    const poll = (first.body as { poll: string }).poll;
    const deadline = Date.now() + POLL_TIMEOUT_MS;
    for (;;) {
      await sleep(POLL_INTERVAL_MS);
      const job = await this.request<{ state: string; proposal?: ProposalDoc }>(poll);
      if (job.body.state === "done") return job.body.proposal as ProposalDoc;
      if (Date.now() > deadline) throw new ApiError(504, "proposal still running after 120s");
    }
  }

  async decide(
    sid: string,
    nodeId: number,
    action: DecisionAction,
    element?: string,
  ): Promise<{ node_id: number; action: string }> {
    const payload: Record<string, unknown> = { action };
    if (element !== undefined) payload.element = element;
    return (await this.post<{ node_id: number; action: string }>(`/sessions/${sid}/nodes/${nodeId}/decision`, payload))
      .body;
  }

  async exportFrames(sid: string, repeat: number, total: number, nodeId?: number): Promise<ExportManifest> {
    const payload: Record<string, unknown> = { repeat, total };
    if (nodeId !== undefined) payload.node_id = nodeId;
    return (await this.post<ExportManifest>(`/sessions/${sid}/export`, payload)).body;
  }

  /** Download an export archive; `manifest.archive` is already a full route. */
  async downloadArchive(archivePath: string): Promise<ArrayBuffer> {
    const resp = await fetch(this.base + archivePath);
    if (!resp.ok) throw new ApiError(resp.status, `archive fetch failed: ${resp.status}`);
    return resp.arrayBuffer();
  }

  imageUrl(sid: string, nodeId: number): string {
    return `${this.base}/sessions/${sid}/nodes/${nodeId}/image`;
  }

  maskUrl(sid: string, nodeId: number): string {
    return `${this.base}/sessions/${sid}/nodes/${nodeId}/mask`;
  }
}
