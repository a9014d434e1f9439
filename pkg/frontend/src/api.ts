// REST client for the dialog service. All pipeline decisions happen
// server-side; this client only moves JSON.

import type { AnswerResponse, CreateSessionResponse, Session } from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    } catch (err) {
      throw new ApiError(0, "network_error", String(err));
    }
    let body: unknown = null;
    try {
      body = await response.json();
    } catch {
      // non-JSON errors fall through with an empty body
    }
    if (!response.ok) {
      const errBody = (body ?? {}) as { code?: string; message?: string };
      throw new ApiError(
        response.status,
        errBody.code ?? `http_${response.status}`,
        errBody.message ?? response.statusText,
      );
    }
    return body as T;
  }

  createSession(
    corpusRef: string,
    scenario: string,
    question: string,
  ): Promise<CreateSessionResponse> {
    return this.request("/sessions", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ corpus_ref: corpusRef, scenario, question }),
    });
  }

  postAnswer(sessionId: string, text: string): Promise<AnswerResponse> {
    return this.request(`/sessions/${sessionId}/answers`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ text }),
    });
  }

  async getSession(sessionId: string): Promise<Session> {
    const body = await this.request<{ session: Session }>(`/sessions/${sessionId}`);
    return body.session;
  }
}
