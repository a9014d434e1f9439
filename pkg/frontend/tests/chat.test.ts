import { beforeEach, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { DialogStore, oneOpenInquiry } from "../src/state.js";
import { renderComposer, renderTranscript } from "../src/view.js";
import type { Turn } from "../src/types.js";
import { StubService, systemTurn } from "./stub.js";

function makeStore(stub: StubService): DialogStore {
  return new DialogStore(new ApiClient("http://svc", stub.fetch), "toy");
}

function composerElements() {
  const input = document.createElement("input");
  const send = document.createElement("button");
  const status = document.createElement("div");
  return { input, send, status };
}

describe("transcript rendering", () => {
  let root: HTMLElement;

  beforeEach(() => {
    root = document.createElement("div");
    document.body.replaceChildren(root);
  });

  it("renders all four class badges", () => {
    const turns: Turn[] = [
      systemTurn("yes", "Yes."),
      systemTurn("no", "No."),
      systemTurn("inquire", "Is it true that the birds are isolated?"),
      systemTurn("irrelevant", "This appears irrelevant."),
    ];
    renderTranscript(root, turns, false);
    for (const cls of ["yes", "no", "inquire", "irrelevant"]) {
      const badge = root.querySelector(`.badge--${cls}`);
      expect(badge, `badge for ${cls}`).not.toBeNull();
      expect(badge!.textContent).toBe(cls);
    }
  });

  it("is a pure function of the turns (refresh-consistent)", () => {
    const turns: Turn[] = [
      { role: "user", kind: "user_message", text: "hello" },
      systemTurn("inquire", "A question?"),
    ];
    renderTranscript(root, turns, true);
    const first = root.innerHTML;
    renderTranscript(root, turns, true);
    expect(root.innerHTML).toBe(first);
  });

  it("shows the debug panel contents from the decision payload", () => {
    const turns: Turn[] = [
      systemTurn("inquire", "Ask me.", {
        matched_subject: 2,
        overlap: 3,
        remaining_rule_ids: ["rule-x", "rule-y"],
        predicted: [1, 4],
      }),
    ];
    renderTranscript(root, turns, true);
    const panel = root.querySelector(".debug-panel");
    expect(panel).not.toBeNull();
    const values = [...panel!.querySelectorAll("dd")].map((d) => d.textContent);
    expect(values).toContain("2");
    expect(values).toContain("3");
    expect(values).toContain("rule-x, rule-y");
    expect(values).toContain("1, 4");
  });

  it("hides the debug panel when the toggle is off", () => {
    renderTranscript(root, [systemTurn("inquire", "Q?")], false);
    expect(root.querySelector(".debug-panel")).toBeNull();
  });
});

describe("dialog store", () => {
  it("start renders first turn; inquire enables the composer", async () => {
    const stub = new StubService();
    stub.enqueue(201, {
      session_id: "s1",
      turn: systemTurn("inquire", "Was the vaccine given?"),
    });
    const store = makeStore(stub);
    await store.start("My chicken is sick.", "What do I do?");
    const state = store.getState();
    expect(state.awaitingAnswer).toBe(true);
    expect(state.terminal).toBe(false);
    const elements = composerElements();
    renderComposer(elements, state);
    expect(elements.input.disabled).toBe(false);
  });

  it("irrelevant answer freezes the composer", async () => {
    const stub = new StubService();
    stub.enqueue(201, {
      session_id: "s1",
      turn: systemTurn("irrelevant", "This appears irrelevant."),
    });
    const store = makeStore(stub);
    await store.start("Tractor trouble.", "Drive?");
    const state = store.getState();
    expect(state.terminal).toBe(true);
    const elements = composerElements();
    renderComposer(elements, state);
    expect(elements.input.disabled).toBe(true);
    expect(elements.status.textContent).toContain("finished");
  });

  it("submit posts the answer, adds the optimistic bubble, then the system turn", async () => {
    const stub = new StubService();
    stub.enqueue(201, { session_id: "s1", turn: systemTurn("inquire", "Q1?") });
    stub.enqueue(200, { turn: systemTurn("yes", "Yes.") });
    const store = makeStore(stub);
    await store.start("Scenario.", "Question?");
    await store.submit("Yes it was.");
    const turns = store.getState().turns;
    expect(turns.map((t) => [t.role, t.kind])).toEqual([
      ["user", "user_message"],
      ["system", "inquiry"],
      ["user", "user_message"],
      ["system", "answer"],
    ]);
    expect(stub.requests[1].body).toEqual({ text: "Yes it was." });
    expect(store.getState().terminal).toBe(true);
  });

  it("enforces the one-open-inquiry invariant across a multi-inquiry dialog", async () => {
    const stub = new StubService();
    stub.enqueue(201, { session_id: "s1", turn: systemTurn("inquire", "Q1?") });
    stub.enqueue(200, { turn: systemTurn("inquire", "Q2?") });
    stub.enqueue(200, { turn: systemTurn("yes", "Yes.") });
    const store = makeStore(stub);
    await store.start("Scenario.", "Question?");
    await store.submit("first answer");
    expect(oneOpenInquiry(store.getState().turns)).toBe(true);
    await store.submit("second answer");
    const turns = store.getState().turns;
    expect(oneOpenInquiry(turns)).toBe(true);
    expect(turns.filter((t) => t.kind === "inquiry")).toHaveLength(2);
    expect(store.getState().terminal).toBe(true);
  });

  it("ignores submissions when no inquiry is open", async () => {
    const stub = new StubService();
    stub.enqueue(201, { session_id: "s1", turn: systemTurn("yes", "Yes.") });
    const store = makeStore(stub);
    await store.start("Scenario.", "Question?");
    await store.submit("should be dropped");
    expect(stub.requests).toHaveLength(1);
  });

  it("queues submissions while a request is in flight", async () => {
    const stub = new StubService();
    stub.enqueue(201, { session_id: "s1", turn: systemTurn("inquire", "Q1?") });
    stub.enqueue(200, { turn: systemTurn("inquire", "Q2?") });
    stub.enqueue(200, { turn: systemTurn("no", "No.") });
    const store = makeStore(stub);
    await store.start("Scenario.", "Question?");
    const first = store.submit("answer one");
    const second = store.submit("answer two");
    await Promise.all([first, second]);
    expect(stub.requests).toHaveLength(3);
    expect(store.getState().terminal).toBe(true);
    expect(oneOpenInquiry(store.getState().turns)).toBe(true);
  });

  it("409 disables the composer with an explanation", async () => {
    const stub = new StubService();
    stub.enqueue(201, { session_id: "s1", turn: systemTurn("inquire", "Q1?") });
    stub.enqueue(409, { code: "NotAwaitingAnswer", message: "no open inquiry" });
    const store = makeStore(stub);
    await store.start("Scenario.", "Question?");
    await store.submit("too late");
    const state = store.getState();
    expect(state.error).toContain("NotAwaitingAnswer");
    expect(state.canRetry).toBe(false);
    const elements = composerElements();
    renderComposer(elements, state);
    expect(elements.input.disabled).toBe(true);
  });

  it("network errors surface inline, preserve the transcript, and retry", async () => {
    const stub = new StubService();
    stub.enqueue(201, { session_id: "s1", turn: systemTurn("inquire", "Q1?") });
    let failNext = true;
    const flakyFetch: typeof stub.fetch = async (url, init) => {
      if (failNext) {
        failNext = false;
        throw new Error("connection refused");
      }
      return stub.fetch(url, init);
    };
    const store = new DialogStore(new ApiClient("http://svc", flakyFetch), "toy");
    await store.start("Scenario.", "Question?");
    let state = store.getState();
    expect(state.error).toContain("connection refused");
    expect(state.canRetry).toBe(true);
    expect(state.turns).toHaveLength(1); // the opening user bubble stays

    await store.retry();
    state = store.getState();
    expect(state.error).toBeNull();
    expect(state.turns.map((t) => t.kind)).toEqual(["user_message", "inquiry"]);
  });
});
