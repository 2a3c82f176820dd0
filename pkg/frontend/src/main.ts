/**
 * App shell: session chooser, banners, and the three working regions
 * (tree canvas, node details + decisions, timeline).
 */

import { Client } from "./api";
import { renderDecisionPanel } from "./decision_panel";
import { renderScrubber } from "./scrubber";
import { SessionStore, StoreState } from "./state";
import { renderDetails, renderTree } from "./tree_view";

const SAMPLE_SCENE = `{
  "scene": {
    "dimensions": [192, 144],
    "background": {"color": [0.92, 0.9, 0.86]},
    "elements": [
      {"id": "lamp", "level": "distractor", "mask": [18, 16, 26, 30], "appearance": {"color": [0.3, 0.35, 0.6]}},
      {"id": "chair", "level": "secondary", "mask": [76, 62, 34, 40], "appearance": {"color": [0.55, 0.4, 0.25]}},
      {"id": "table", "level": "primary", "mask": [128, 84, 48, 36], "appearance": {"color": [0.45, 0.2, 0.2]}}
    ]
  }
}`;

export function mount(root: HTMLElement, client: Client): SessionStore {
  const store = new SessionStore(client);
  root.textContent = "";

  const header = document.createElement("header");
  header.className = "topbar";
  root.appendChild(header);

  const picker = document.createElement("select");
  picker.id = "session-picker";
  header.appendChild(picker);

  const openBtn = document.createElement("button");
  openBtn.id = "open-btn";
  openBtn.textContent = "Open";
  openBtn.addEventListener("click", () => {
    if (picker.value) void store.open(picker.value);
  });
  header.appendChild(openBtn);

  const refreshSessions = async () => {
    try {
      const sessions = await client.listSessions();
      picker.textContent = "";
      for (const s of sessions) {
        const opt = document.createElement("option");
        opt.value = s.session_id;
        opt.textContent = `${s.session_id} (${s.source_kind}, ${s.nodes} nodes)`;
        picker.appendChild(opt);
      }
    } catch {
      // listing is best-effort; the error banner covers live failures
    }
  };
  void refreshSessions();

  const sceneInput = document.createElement("textarea");
  sceneInput.id = "scene-input";
  sceneInput.rows = 3;
  sceneInput.value = SAMPLE_SCENE;
  header.appendChild(sceneInput);

  const createBtn = document.createElement("button");
  createBtn.id = "create-btn";
  createBtn.textContent = "Create session";
  createBtn.addEventListener("click", () => {
    let payload: Record<string, unknown>;
    try {
      payload = JSON.parse(sceneInput.value) as Record<string, unknown>;
    } catch (err) {
      store.reportError(`scene JSON does not parse: ${String(err)}`);
      return;
    }
    void store.create(payload).then(refreshSessions);
  });
  header.appendChild(createBtn);

  const errorBanner = document.createElement("div");
  errorBanner.className = "error-banner";
  errorBanner.hidden = true;
  root.appendChild(errorBanner);

  const noticeBanner = document.createElement("div");
  noticeBanner.className = "notice-banner";
  noticeBanner.hidden = true;
  root.appendChild(noticeBanner);

  const grid = document.createElement("div");
  grid.className = "workspace";
  root.appendChild(grid);

  const treeRegion = document.createElement("section");
  treeRegion.id = "tree-region";
  grid.appendChild(treeRegion);

  const side = document.createElement("aside");
  side.id = "side-panel";
  grid.appendChild(side);

  const detailsRegion = document.createElement("section");
  detailsRegion.id = "details-region";
  side.appendChild(detailsRegion);

  const decisionRegion = document.createElement("section");
  decisionRegion.id = "decision-region";
  side.appendChild(decisionRegion);

  const timelineRegion = document.createElement("section");
  timelineRegion.id = "timeline-region";
  side.appendChild(timelineRegion);

  const renderBanners = (state: StoreState) => {
    errorBanner.hidden = !state.error;
    if (state.error) {
      errorBanner.textContent = state.error;
      const retry = document.createElement("button");
      retry.id = "retry-btn";
      retry.textContent = "Retry";
      retry.addEventListener("click", () => void store.refresh());
      errorBanner.appendChild(retry);
    }
    noticeBanner.hidden = !state.notice;
    if (state.notice) noticeBanner.textContent = state.notice;
  };

  store.subscribe((state) => {
    renderBanners(state);
    renderTree(treeRegion, state, store);
    renderDetails(detailsRegion, state, store);
    renderDecisionPanel(decisionRegion, state, store);
    renderScrubber(timelineRegion, state, store);
  });

  return store;
}
