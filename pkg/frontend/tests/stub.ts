// A scriptable stand-in for the dialog service.

import type { DecisionSnapshot, Turn } from "../src/types.js";

export function snapshot(partial: Partial<DecisionSnapshot> = {}): DecisionSnapshot {
  return {
    verdict: "inquire",
    matched_subject: 0,
    overlap: 1,
    remaining_rule_ids: ["rule-b"],
    predicted: [0],
    answer_class: "inquire",
    ...partial,
  };
}

export function systemTurn(
  answerClass: "yes" | "no" | "inquire" | "irrelevant",
  text: string,
  decision?: Partial<DecisionSnapshot>,
): Turn {
  return {
    role: "system",
    kind: answerClass === "inquire" ? "inquiry" : "answer",
    text,
    answer_class: answerClass,
    decision_snapshot: snapshot({ answer_class: answerClass, ...decision }),
  };
}

interface Scripted {
  status: number;
  body: unknown;
}

export class StubService {
  requests: { url: string; method: string; body: unknown }[] = [];
  private script: Scripted[] = [];

  enqueue(status: number, body: unknown): void {
    this.script.push({ status, body });
  }

  fetch = async (url: string, init?: RequestInit): Promise<Response> => {
    const method = init?.method ?? "GET";
    const body = init?.body ? JSON.parse(init.body as string) : null;
    this.requests.push({ url, method, body });
    const next = this.script.shift();
    if (!next) {
      throw new Error(`no scripted response for ${method} ${url}`);
    }
    return new Response(JSON.stringify(next.body), {
      status: next.status,
      headers: { "Content-Type": "application/json" },
    });
  };
}
