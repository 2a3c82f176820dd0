/**
 * Interactive trajectory graph: nodes by depth, click to select, pan/zoom.
 *
 * Rendering is a full rebuild per state change; trees here are tens of
 * nodes, and rebuilding keeps the view a pure function of the store.
 */

import type { StoreState, SessionStore } from "./state";
import { CELL_W, CELL_H, layoutTree } from "./layout";

const NODE_W = CELL_W - 28;
const NODE_H = CELL_H - 28;

interface Viewport {
  scale: number;
  tx: number;
  ty: number;
}

const viewports = new WeakMap<HTMLElement, Viewport>();

function applyViewport(canvas: HTMLElement, vp: Viewport): void {
  canvas.style.transform = `translate(${vp.tx}px, ${vp.ty}px) scale(${vp.scale})`;
}

export function renderTree(container: HTMLElement, state: StoreState, store: SessionStore): void {
  container.textContent = "";
  if (!state.tree || !state.sid) {
    const empty = document.createElement("p");
    empty.className = "placeholder";
    empty.textContent = "No session open.";
    container.appendChild(empty);
    return;
  }
  const sid = state.sid;
  const doc = state.tree;
  const layout = layoutTree(doc);
  const mainPath = new Set(doc.main_path);
  const pending = new Set(doc.pending_proposals);
  const positions = new Map(layout.nodes.map((n) => [n.id, n]));

  const canvas = document.createElement("div");
  canvas.className = "tree-canvas";
  canvas.style.width = `${layout.width}px`;
  canvas.style.height = `${layout.height}px`;

  const svg = document.createElementNS("http://www.w3.org/2000/svg", "svg");
  svg.setAttribute("width", String(layout.width));
  svg.setAttribute("height", String(layout.height));
  svg.classList.add("edge-layer");
  for (const edge of layout.edges) {
    const a = positions.get(edge.from);
    const b = positions.get(edge.to);
    if (!a || !b) continue;
    const x1 = a.x + NODE_W;
    const y1 = a.y + NODE_H / 2;
    const x2 = b.x;
    const y2 = b.y + NODE_H / 2;
    const line = document.createElementNS("http://www.w3.org/2000/svg", "path");
    line.setAttribute("d", `M ${x1} ${y1} C ${x1 + 22} ${y1}, ${x2 - 22} ${y2}, ${x2} ${y2}`);
    line.setAttribute("class", "edge");
    svg.appendChild(line);
    if (edge.label) {
      const text = document.createElementNS("http://www.w3.org/2000/svg", "text");
      text.setAttribute("x", String((x1 + x2) / 2));
      text.setAttribute("y", String((y1 + y2) / 2 - 5));
      text.setAttribute("class", "edge-label");
      text.textContent = edge.label;
      svg.appendChild(text);
    }
  }
  canvas.appendChild(svg);

  for (const node of doc.nodes) {
    const pos = positions.get(node.id);
    if (!pos) continue;
    const card = document.createElement("div");
    card.className = "node-card";
    card.dataset.id = String(node.id);
    if (node.id === state.selected) card.classList.add("selected");
    if (mainPath.has(node.id)) card.classList.add("on-main-path");
    card.style.left = `${pos.x}px`;
    card.style.top = `${pos.y}px`;
    card.style.width = `${NODE_W}px`;
    card.style.height = `${NODE_H}px`;

    const thumb = document.createElement("img");
    thumb.className = "thumb";
    thumb.alt = `node ${node.id}`;
    thumb.src = store.api.imageUrl(sid, node.id);
    card.appendChild(thumb);

    const caption = document.createElement("div");
    caption.className = "caption";
    const badge = document.createElement("span");
    badge.className = `badge level-${node.active_level}`;
    badge.textContent = node.active_level;
    const status = document.createElement("span");
    status.className = "status";
    status.textContent = pending.has(node.id)
      ? "proposal pending"
      : node.step
        ? node.step.status
        : node.parent === null
          ? "root"
          : "branch point";
    caption.append(badge, ` #${node.id} `, status);
    card.appendChild(caption);

    card.addEventListener("click", () => store.select(node.id));
    canvas.appendChild(card);
  }

  const vp = viewports.get(container) ?? { scale: 1, tx: 12, ty: 12 };
  viewports.set(container, vp);
  applyViewport(canvas, vp);

  container.addEventListener("wheel", (ev) => {
    ev.preventDefault();
    vp.scale = Math.min(2.5, Math.max(0.35, vp.scale * (ev.deltaY < 0 ? 1.12 : 0.89)));
    applyViewport(canvas, vp);
  });
  let drag: { x: number; y: number } | null = null;
  container.addEventListener("pointerdown", (ev) => {
    if ((ev.target as HTMLElement).closest(".node-card")) return;
    drag = { x: ev.clientX - vp.tx, y: ev.clientY - vp.ty };
  });
  container.addEventListener("pointermove", (ev) => {
    if (!drag) return;
    vp.tx = ev.clientX - drag.x;
    vp.ty = ev.clientY - drag.y;
    applyViewport(canvas, vp);
  });
  container.addEventListener("pointerup", () => {
    drag = null;
  });

  container.appendChild(canvas);
}

/** Selected-node inspector: full image, mask overlay toggle, element chips. */
export function renderDetails(container: HTMLElement, state: StoreState, store: SessionStore): void {
  container.textContent = "";
  if (!state.tree || !state.sid || state.selected === null) return;
  const sid = state.sid;
  const node = state.tree.nodes.find((n) => n.id === state.selected);
  if (!node) return;

  const title = document.createElement("h3");
  title.textContent = `Node ${node.id}`;
  container.appendChild(title);

  const stage = document.createElement("div");
  stage.className = "stage";
  const full = document.createElement("img");
  full.id = "full-image";
  full.alt = `node ${node.id} full image`;
  full.src = store.api.imageUrl(sid, node.id);
  stage.appendChild(full);

  const overlay = document.createElement("img");
  overlay.id = "mask-overlay";
  overlay.alt = "change mask overlay";
  overlay.hidden = true;
  const hasMask = node.step !== null && node.step.has_mask === true;
  if (hasMask) overlay.src = store.api.maskUrl(sid, node.id);
  stage.appendChild(overlay);
  container.appendChild(stage);

  const toggle = document.createElement("button");
  toggle.id = "mask-toggle";
  toggle.textContent = "Show change mask";
  toggle.disabled = !hasMask;
  toggle.addEventListener("click", () => {
    overlay.hidden = !overlay.hidden;
    toggle.textContent = overlay.hidden ? "Show change mask" : "Hide change mask";
  });
  container.appendChild(toggle);

  const legend = document.createElement("div");
  legend.className = "legend";
  const addChips = (label: string, items: string[], chipClass: string) => {
    if (!items.length) return;
    const row = document.createElement("div");
    row.className = "chip-row";
    const head = document.createElement("span");
    head.className = "chip-head";
    head.textContent = label;
    row.appendChild(head);
    for (const item of items) {
      const chip = document.createElement("span");
      chip.className = `chip ${chipClass}`;
      chip.textContent = item;
      row.appendChild(chip);
    }
    legend.appendChild(row);
  };
  addChips("removed", node.removed, "removed");
  addChips("forbidden", node.excluded, "excluded"); // struck through via CSS
  addChips("skipped", node.skipped, "skipped");
  container.appendChild(legend);
}
