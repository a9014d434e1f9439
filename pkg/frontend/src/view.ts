// DOM rendering. The transcript view is a pure function of the state, so
// a refresh from GET /sessions/{id} produces the same markup.

import type { DialogState } from "./state.js";
import type { DecisionSnapshot, Turn } from "./types.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) {
    node.className = className;
  }
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

function debugPanel(snapshot: DecisionSnapshot): HTMLElement {
  const panel = el("dl", "debug-panel");
  const rows: [string, string][] = [
    ["verdict", snapshot.verdict],
    [
      "matched subject",
      snapshot.matched_subject === null ? "none" : String(snapshot.matched_subject),
    ],
    ["overlap", String(snapshot.overlap)],
    ["remaining rule ids", snapshot.remaining_rule_ids.join(", ") || "none"],
    ["predicted", snapshot.predicted.join(", ") || "none"],
  ];
  for (const [label, value] of rows) {
    panel.appendChild(el("dt", "debug-panel__label", label));
    panel.appendChild(el("dd", "debug-panel__value", value));
  }
  return panel;
}

function bubble(turn: Turn, debug: boolean): HTMLElement {
  const wrapper = el("div", `chat-turn chat-turn--${turn.role}`);
  if (turn.role === "system" && turn.answer_class) {
    const badge = el("span", `badge badge--${turn.answer_class}`, turn.answer_class);
    wrapper.appendChild(badge);
  }
  wrapper.appendChild(el("div", "chat-bubble", turn.text));
  if (debug && turn.decision_snapshot) {
    wrapper.appendChild(debugPanel(turn.decision_snapshot));
  }
  return wrapper;
}

export function renderTranscript(
  root: HTMLElement,
  turns: Turn[],
  debug: boolean,
): void {
  root.replaceChildren(...turns.map((turn) => bubble(turn, debug)));
}

export interface ComposerElements {
  input: HTMLInputElement;
  send: HTMLButtonElement;
  status: HTMLElement;
}

export function renderComposer(elements: ComposerElements, state: DialogState): void {
  const enabled = state.awaitingAnswer && !state.terminal && !state.busy;
  elements.input.disabled = !enabled;
  elements.send.disabled = !enabled;
  if (state.error) {
    elements.status.textContent = state.canRetry
      ? `${state.error} — retry available`
      : state.error;
    elements.status.className = "status status--error";
  } else if (state.busy) {
    elements.status.textContent = "thinking…";
    elements.status.className = "status status--busy";
  } else if (state.terminal) {
    elements.status.textContent = "dialog finished";
    elements.status.className = "status status--done";
  } else if (state.awaitingAnswer) {
    elements.status.textContent = "awaiting your answer";
    elements.status.className = "status";
  } else {
    elements.status.textContent = "";
    elements.status.className = "status";
  }
}
