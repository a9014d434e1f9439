// Page wiring: one DialogStore drives the transcript and the composer.

import { ApiClient } from "./api.js";
import { DialogStore } from "./state.js";
import { renderComposer, renderTranscript } from "./view.js";

function byId<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

export function mount(): void {
  const baseUrl =
    (document.querySelector("meta[name=api-base]") as HTMLMetaElement | null)
      ?.content ?? "http://127.0.0.1:8000";
  const corpusRef =
    (document.querySelector("meta[name=corpus-ref]") as HTMLMetaElement | null)
      ?.content ?? "toy";

  const store = new DialogStore(new ApiClient(baseUrl), corpusRef);
  const transcript = byId<HTMLElement>("transcript");
  const composer = {
    input: byId<HTMLInputElement>("answer-input"),
    send: byId<HTMLButtonElement>("answer-send"),
    status: byId<HTMLElement>("status"),
  };
  const scenario = byId<HTMLTextAreaElement>("scenario");
  const question = byId<HTMLInputElement>("question");
  const startButton = byId<HTMLButtonElement>("start");
  const debugToggle = byId<HTMLInputElement>("debug-toggle");
  const retryButton = byId<HTMLButtonElement>("retry");

  let debug = false;
  store.subscribe((state) => {
    renderTranscript(transcript, state.turns, debug);
    renderComposer(composer, state);
    retryButton.hidden = !state.canRetry;
    transcript.scrollTop = transcript.scrollHeight;
  });

  startButton.addEventListener("click", () => {
    void store.start(scenario.value, question.value);
  });
  composer.send.addEventListener("click", () => {
    const text = composer.input.value;
    composer.input.value = "";
    void store.submit(text);
  });
  composer.input.addEventListener("keydown", (event) => {
    if (event.key === "Enter") {
      const text = composer.input.value;
      composer.input.value = "";
      void store.submit(text);
    }
  });
  debugToggle.addEventListener("change", () => {
    debug = debugToggle.checked;
    const state = store.getState();
    renderTranscript(transcript, state.turns, debug);
  });
  retryButton.addEventListener("click", () => {
    void store.retry();
  });
}

if (typeof document !== "undefined" && document.getElementById("transcript")) {
  mount();
}
