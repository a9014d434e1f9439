// Client-side dialog state machine mirroring the service's session rules:
// at most one open inquiry, terminal classes freeze the composer, and at
// most one request is in flight per session (extra submissions queue).

import { ApiClient, ApiError } from "./api.js";
import type { Turn } from "./types.js";

export interface DialogState {
  sessionId: string | null;
  turns: Turn[];
  awaitingAnswer: boolean;
  terminal: boolean;
  busy: boolean;
  error: string | null;
  canRetry: boolean;
}

type Listener = (state: DialogState) => void;

function initialState(): DialogState {
  return {
    sessionId: null,
    turns: [],
    awaitingAnswer: false,
    terminal: false,
    busy: false,
    error: null,
    canRetry: false,
  };
}

export class DialogStore {
  private state: DialogState = initialState();
  private listeners: Listener[] = [];
  private queue: string[] = [];
  private lastAction: (() => Promise<void>) | null = null;

  constructor(
    private readonly api: ApiClient,
    private readonly corpusRef: string,
  ) {}

  getState(): DialogState {
    return { ...this.state, turns: [...this.state.turns] };
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    listener(this.getState());
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private emit(patch: Partial<DialogState>): void {
    this.state = { ...this.state, ...patch };
    for (const listener of this.listeners) {
      listener(this.getState());
    }
  }

  private applySystemTurn(turn: Turn): void {
    const awaiting = turn.kind === "inquiry";
    this.emit({
      turns: [...this.state.turns, turn],
      awaitingAnswer: awaiting,
      terminal: !awaiting,
      error: null,
      canRetry: false,
    });
  }

  async start(scenario: string, question: string): Promise<void> {
    if (this.state.busy) {
      return;
    }
    const opening: Turn = {
      role: "user",
      kind: "user_message",
      text: `${scenario} ${question}`.trim(),
    };
    this.emit({ ...initialState(), turns: [opening], busy: true });
    this.lastAction = async () => {
      const created = await this.api.createSession(this.corpusRef, scenario, question);
      this.emit({ sessionId: created.session_id });
      this.applySystemTurn(created.turn);
    };
    await this.run(this.lastAction);
  }

  /** Queue-aware submission: one in-flight request per session. */
  async submit(text: string): Promise<void> {
    if (!text.trim() || this.state.terminal || !this.state.sessionId) {
      return;
    }
    if (this.state.busy) {
      this.queue.push(text);
      return;
    }
    if (!this.state.awaitingAnswer) {
      return;
    }
    // optimistic user bubble; the inquiry is now considered answered
    this.emit({
      turns: [...this.state.turns, { role: "user", kind: "user_message", text }],
      awaitingAnswer: false,
      busy: true,
    });
    this.lastAction = async () => {
      const response = await this.api.postAnswer(this.state.sessionId!, text);
      this.applySystemTurn(response.turn);
    };
    await this.run(this.lastAction);
    await this.drainQueue();
  }

  private async drainQueue(): Promise<void> {
    while (this.queue.length > 0 && this.state.awaitingAnswer && !this.state.busy) {
      const next = this.queue.shift()!;
      await this.submit(next);
    }
    if (this.state.terminal) {
      this.queue = [];
    }
  }

  async retry(): Promise<void> {
    if (this.state.busy || !this.lastAction) {
      return;
    }
    this.emit({ busy: true, error: null });
    await this.run(this.lastAction);
  }

  private async run(action: () => Promise<void>): Promise<void> {
    try {
      await action();
      this.emit({ busy: false });
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        // The service refused the answer: freeze the composer and explain.
        this.emit({
          busy: false,
          awaitingAnswer: false,
          error: `The session is not awaiting an answer (${err.code}).`,
          canRetry: false,
        });
        return;
      }
      const message = err instanceof ApiError ? err.message : String(err);
      // Transcript is preserved; the action can be retried.
      this.emit({ busy: false, error: message, canRetry: true });
    }
  }
}

/** True when the transcript never shows two unanswered system inquiries. */
export function oneOpenInquiry(turns: Turn[]): boolean {
  let open = 0;
  for (const turn of turns) {
    if (turn.role === "system" && turn.kind === "inquiry") {
      open += 1;
      if (open > 1) {
        return false;
      }
    } else if (turn.role === "user" && open > 0) {
      open -= 1;
    }
  }
  return true;
}
