/**
 * Session store: the single client-side source of truth for the UI.
 *
 * The server owns correctness, so there is no optimistic state anywhere:
 * every mutating call that returns 2xx is followed by a full tree re-fetch,
 * and conflicts (409) trigger a re-fetch plus a notice instead of a retry.
 */

import { ApiError, Client } from "./api";
import type { DecisionAction, ExportManifest, ProposalDoc, TreeDoc } from "./api";

export interface ExportResult {
  manifest: ExportManifest;
  archive: ArrayBuffer;
}

export interface StoreState {
  sid: string | null;
  tree: TreeDoc | null;
  selected: number | null;
  /** Pending proposal for `selected`; cleared on selection change. */
  proposal: ProposalDoc | null;
  /** Element ids from the scene doc this client created, if any. */
  sceneElements: string[];
  busy: boolean;
  notice: string | null;
  error: string | null;
  lastExport: ExportResult | null;
}

type Listener = (state: StoreState) => void;

export class SessionStore {
  private state: StoreState = {
    sid: null,
    tree: null,
    selected: null,
    proposal: null,
    sceneElements: [],
    busy: false,
    notice: null,
    error: null,
    lastExport: null,
  };
  private listeners: Listener[] = [];

  constructor(readonly api: Client) {}

  snapshot(): StoreState {
    return this.state;
  }

  subscribe(fn: Listener): () => void {
    this.listeners.push(fn);
    fn(this.state);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== fn);
    };
  }

  private set(patch: Partial<StoreState>): void {
    this.state = { ...this.state, ...patch };
    for (const fn of this.listeners) fn(this.state);
  }

  /** Re-fetch the tree; the selected node is kept when it still exists. */
  async refresh(): Promise<void> {
    const sid = this.state.sid;
    if (!sid) return;
    const tree = await this.api.tree(sid);
    const selected =
      this.state.selected !== null && tree.nodes.some((n) => n.id === this.state.selected)
        ? this.state.selected
        : tree.main_path[tree.main_path.length - 1];
    this.set({ tree, selected, error: null });
  }

  async open(sid: string): Promise<void> {
    await this.guarded(async () => {
      const tree = await this.api.tree(sid);
      this.set({
        sid,
        tree,
        selected: tree.main_path[tree.main_path.length - 1],
        proposal: null,
        notice: null,
        lastExport: null,
      });
    });
  }

  async create(payload: Record<string, unknown>): Promise<void> {
    await this.guarded(async () => {
      const created = await this.api.createSession(payload);
      const scene = payload.scene as { elements?: { id: string }[] } | undefined;
      this.set({ sceneElements: scene?.elements?.map((e) => e.id) ?? [] });
      const tree = await this.api.tree(created.session_id);
      this.set({
        sid: created.session_id,
        tree,
        selected: tree.main_path[tree.main_path.length - 1],
        proposal: null,
        notice: null,
        lastExport: null,
      });
    });
  }

  select(nodeId: number): void {
    if (!this.state.tree || !this.state.tree.nodes.some((n) => n.id === nodeId)) return;
    this.set({ selected: nodeId, proposal: null, notice: null });
  }

  /** Element ids usable by the picker: scene doc first, then anything the
   *  tree has already named. Empty for image sessions nobody has touched. */
  knownElements(): string[] {
    const ids = new Set(this.state.sceneElements);
    for (const node of this.state.tree?.nodes ?? []) {
      for (const el of [...node.removed, ...node.excluded, ...node.skipped]) ids.add(el);
      if (node.step) ids.add(node.step.element);
      for (const s of node.skipped_steps) ids.add(s.element);
    }
    return [...ids].sort();
  }

  isOracleSession(): boolean {
    return this.state.tree?.source_kind === "scene";
  }

  async propose(): Promise<void> {
    const { sid, selected } = this.state;
    if (sid === null || selected === null) return;
    await this.guarded(async () => {
      const proposal = await this.api.propose(sid, selected);
      const tree = await this.api.tree(sid);
      this.set({ proposal, tree, notice: null });
    });
  }

  async decide(action: DecisionAction, element?: string): Promise<void> {
    const { sid, selected } = this.state;
    if (sid === null || selected === null) return;
    await this.guarded(async () => {
      try {
        const result = await this.api.decide(sid, selected, action, element);
        const tree = await this.api.tree(sid);
        this.set({
          tree,
          selected: tree.nodes.some((n) => n.id === result.node_id) ? result.node_id : selected,
          proposal: null,
          notice: null,
        });
      } catch (err) {
        if (err instanceof ApiError && err.status === 409) {
          // Someone (or a stale proposal) got there first: resync and tell.
          const tree = await this.api.tree(sid);
          this.set({ tree, proposal: null, notice: `conflict: ${err.message}` });
          return;
        }
        throw err;
      }
    });
  }

  async exportFrames(repeat: number, total: number): Promise<void> {
    const { sid, selected } = this.state;
    if (sid === null || selected === null) return;
    await this.guarded(async () => {
      const manifest = await this.api.exportFrames(sid, repeat, total, selected);
      const archive = await this.api.downloadArchive(manifest.archive);
      this.set({ lastExport: { manifest, archive }, notice: `exported ${manifest.frame_count} frames` });
    });
  }

  /** Surface a client-side problem (bad input, parse failure) in the banner. */
  reportError(detail: string): void {
    this.set({ error: detail });
  }

  /** Serialize an action, surfacing failures inline for the retry banner. */
  private async guarded(work: () => Promise<void>): Promise<void> {
    if (this.state.busy) return;
    this.set({ busy: true, error: null });
    try {
      await work();
    } catch (err) {
      const detail = err instanceof Error ? err.message : String(err);
      this.set({ error: detail });
    } finally {
      this.set({ busy: false });
    }
  }
}
