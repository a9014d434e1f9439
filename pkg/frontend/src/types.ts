// Wire types mirroring the dialog service API.

export type AnswerClass = "yes" | "no" | "inquire" | "irrelevant";

export interface DecisionSnapshot {
  verdict: string;
  matched_subject: number | null;
  overlap: number;
  remaining_rule_ids: string[];
  predicted: number[];
  answer_class: AnswerClass;
}

export interface Turn {
  role: "system" | "user";
  kind: "answer" | "inquiry" | "user_message";
  text: string;
  answer_class?: AnswerClass;
  decision_snapshot?: DecisionSnapshot;
}

export interface Session {
  session_id: string;
  corpus_ref: string;
  transcript: Turn[];
  awaiting_answer: boolean;
  terminal: boolean;
  created_at: string;
  updated_at: string;
}

export interface CreateSessionResponse {
  session_id: string;
  turn: Turn;
}

export interface AnswerResponse {
  turn: Turn;
}
