/**
 * Steering controls for the selected node.
 *
 * Nothing here is optimistic: buttons call the store, the store calls the
 * server, and the panel re-renders from the re-fetched tree. Accept/Skip/
 * Forbid act on the pending proposal; Remove-other forces any element out,
 * picked from a list on oracle scenes or typed free-form otherwise.
 */

import type { StoreState, SessionStore } from "./state";

export function renderDecisionPanel(container: HTMLElement, state: StoreState, store: SessionStore): void {
  container.textContent = "";
  if (!state.tree || state.selected === null) return;

  const heading = document.createElement("h3");
  heading.textContent = "Decisions";
  container.appendChild(heading);

  const proposeBtn = document.createElement("button");
  proposeBtn.id = "propose-btn";
  proposeBtn.textContent = "Propose next removal";
  proposeBtn.disabled = state.busy;
  proposeBtn.addEventListener("click", () => void store.propose());
  container.appendChild(proposeBtn);

  const proposal = state.proposal;
  if (proposal) {
    const card = document.createElement("div");
    card.className = "proposal-card";
    const head = document.createElement("p");
    head.className = "proposal-head";
    if (proposal.status === "ready") {
      head.textContent = `Remove "${proposal.element}" (${proposal.level}, ${proposal.attempts} attempt(s))`;
    } else if (proposal.status === "done") {
      head.textContent = "Nothing left to remove on this path.";
    } else {
      head.textContent = `All candidates failed for "${proposal.element ?? "?"}".`;
    }
    card.appendChild(head);

    if (proposal.verify) {
      const verdict = document.createElement("p");
      verdict.className = "verify-line";
      verdict.textContent = `verify ${proposal.verify.pass ? "pass" : "fail"} (score ${proposal.verify.score.toFixed(3)})`;
      card.appendChild(verdict);
    }
    if (proposal.preview_png) {
      const preview = document.createElement("img");
      preview.className = "proposal-preview";
      preview.alt = "proposal preview";
      preview.src = `data:image/png;base64,${proposal.preview_png}`;
      card.appendChild(preview);
    }

    const row = document.createElement("div");
    row.className = "button-row";
    const accept = document.createElement("button");
    accept.id = "accept-btn";
    accept.textContent = "Accept";
    accept.disabled = state.busy || proposal.status !== "ready";
    accept.addEventListener("click", () => void store.decide("accept"));
    const skip = document.createElement("button");
    skip.id = "skip-btn";
    skip.textContent = "Skip";
    skip.disabled = state.busy || proposal.status === "done";
    skip.addEventListener("click", () => void store.decide("skip"));
    const forbid = document.createElement("button");
    forbid.id = "forbid-btn";
    forbid.textContent = "Forbid this element";
    forbid.disabled = state.busy || !proposal.element;
    forbid.addEventListener("click", () => {
      if (proposal.element) void store.decide("forbid", proposal.element);
    });
    row.append(accept, skip, forbid);
    card.appendChild(row);
    container.appendChild(card);
  }

  const other = document.createElement("div");
  other.className = "remove-other";
  const label = document.createElement("label");
  label.textContent = "Remove other: ";
  label.htmlFor = "remove-other-input";
  other.appendChild(label);

  let readValue: () => string;
  const elements = store.knownElements();
  if (store.isOracleSession() && elements.length > 0) {
    const picker = document.createElement("select");
    picker.id = "remove-other-input";
    for (const el of elements) {
      const opt = document.createElement("option");
      opt.value = el;
      opt.textContent = el;
      picker.appendChild(opt);
    }
    other.appendChild(picker);
    readValue = () => picker.value;
  } else {
    const input = document.createElement("input");
    input.id = "remove-other-input";
    input.type = "text";
    input.placeholder = "describe the object to remove";
    other.appendChild(input);
    readValue = () => input.value.trim();
  }

  const removeBtn = document.createElement("button");
  removeBtn.id = "remove-other-btn";
  removeBtn.textContent = "Remove";
  removeBtn.disabled = state.busy;
  removeBtn.addEventListener("click", () => {
    const value = readValue();
    if (value) void store.decide("force_remove", value);
  });
  other.appendChild(removeBtn);
  container.appendChild(other);
}
