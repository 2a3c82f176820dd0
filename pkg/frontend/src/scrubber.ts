/**
 * Stop-motion timeline for the selected root-to-node path.
 *
 * The slider spans exactly the frames an export would contain (client-side
 * mirror of the server preset math), so "what you scrub is what you get".
 */

import { framePlan, sliderSpan } from "./frames";
import { pathTo } from "./layout";
import type { StoreState, SessionStore } from "./state";

const PRESET_REPEAT = 5;
const PRESET_TOTAL = 49;
const PLAY_INTERVAL_MS = 120;

const players = new WeakMap<HTMLElement, number>();

export function renderScrubber(container: HTMLElement, state: StoreState, store: SessionStore): void {
  const previous = players.get(container);
  if (previous !== undefined) {
    clearInterval(previous);
    players.delete(container);
  }
  container.textContent = "";
  if (!state.tree || !state.sid || state.selected === null) return;
  const sid = state.sid;

  const path = pathTo(state.tree, state.selected);
  const span = sliderSpan(path.length, PRESET_REPEAT, PRESET_TOTAL);
  const plan = framePlan(path.length, PRESET_REPEAT, PRESET_TOTAL);

  const heading = document.createElement("h3");
  heading.textContent = `Timeline (${span} frames over ${path.length} states)`;
  container.appendChild(heading);

  const frame = document.createElement("img");
  frame.id = "frame-img";
  frame.alt = "timeline frame";
  container.appendChild(frame);

  const slider = document.createElement("input");
  slider.type = "range";
  slider.id = "scrubber";
  slider.min = "0";
  slider.max = String(span - 1);
  slider.value = "0";
  container.appendChild(slider);

  const readout = document.createElement("span");
  readout.className = "frame-readout";
  container.appendChild(readout);

  const show = (pos: number) => {
    frame.src = store.api.imageUrl(sid, path[plan[pos]]);
    readout.textContent = `frame ${pos + 1}/${span}`;
  };
  slider.addEventListener("input", () => show(Number(slider.value)));
  show(0);

  const row = document.createElement("div");
  row.className = "button-row";

  const play = document.createElement("button");
  play.id = "play-btn";
  play.textContent = "Play";
  play.addEventListener("click", () => {
    const running = players.get(container);
    if (running !== undefined) {
      clearInterval(running);
      players.delete(container);
      play.textContent = "Play";
      return;
    }
    play.textContent = "Pause";
    const timer = setInterval(() => {
      const next = (Number(slider.value) + 1) % span;
      slider.value = String(next);
      show(next);
    }, PLAY_INTERVAL_MS) as unknown as number;
    players.set(container, timer);
  });
  row.appendChild(play);

  const exportBtn = document.createElement("button");
  exportBtn.id = "export-btn";
  exportBtn.textContent = `Export ${span} frames`;
  exportBtn.disabled = state.busy;
  exportBtn.addEventListener("click", () => void store.exportFrames(PRESET_REPEAT, span));
  row.appendChild(exportBtn);
  container.appendChild(row);

  if (state.lastExport) {
    const note = document.createElement("p");
    note.className = "export-note";
    const m = state.lastExport.manifest;
    note.textContent = `exported ${m.frame_count} frames from node ${m.node_id} (${m.archive})`;
    container.appendChild(note);
    offerDownload(container, state.lastExport.archive, `${m.export_id}.zip`);
  }
}

/** Browser download link for the fetched archive; inert where blobs are
 *  unavailable (non-browser DOM used by tests). */
function offerDownload(container: HTMLElement, archive: ArrayBuffer, name: string): void {
  if (typeof URL.createObjectURL !== "function") return;
  const link = document.createElement("a");
  link.className = "download-link";
  link.href = URL.createObjectURL(new Blob([archive], { type: "application/zip" }));
  link.download = name;
  link.textContent = `download ${name}`;
  container.appendChild(link);
}
