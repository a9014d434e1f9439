"""Turn-level dialog engine: predict, decide, answer or inquire.

One engine instance serves any number of independent dialogs; the
per-dialog state tracks the conversation history, the pinned matched
subject, and which rules have already been asked about. A rule stays
removed once asked, so every dialog terminates after at most
|matched rule set| inquiries.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Protocol, Sequence

from .corpus import Sentence, append_dialog_sentences, dialog_sentences
from .errors import InvalidState
from .policy import (
    AnswerClass,
    DecisionState,
    LexicalNegationClassifier,
    NegationClassifier,
    Verdict,
    answer,
    decide,
    sim,
)
from .spectral import Rule, Universe


class RulePredictor(Protocol):
    def predict(self, history: Sequence[Sentence]) -> set[int]: ...


class QuestionSource(Protocol):
    def question_for(self, rule: Rule, sentences: Sequence[Sentence]) -> str: ...


@dataclass(frozen=True)
class DialogTurn:
    kind: str  # "answer" | "inquiry"
    text: str
    answer_class: str  # "yes" | "no" | "inquire" | "irrelevant"
    decision: dict

    def to_json(self) -> dict:
        return {
            "role": "system",
            "kind": self.kind,
            "text": self.text,
            "answer_class": self.answer_class,
            "decision_snapshot": self.decision,
        }


@dataclass(frozen=True)
class DialogState:
    scenario: str
    question: str
    qa_pairs: tuple[tuple[str, str], ...] = ()
    matched: Optional[int] = None
    asked: frozenset[int] = frozenset()
    open_inquiry: Optional[tuple[int, str]] = None  # (rule index, question)
    terminal: bool = False


class DialogEngine:
    """Drives create/answer turns against one loaded corpus."""

    def __init__(
        self,
        sentences: Sequence[Sentence],
        universe: Universe,
        subject_sets: Sequence[set[int]],
        predictor: RulePredictor,
        question_source: QuestionSource,
        classifier: Optional[NegationClassifier] = None,
    ):
        self.sentences = list(sentences)
        self.universe = universe
        self.subject_sets = [set(s) for s in subject_sets]
        self.predictor = predictor
        self.question_source = question_source
        self.classifier = classifier or LexicalNegationClassifier()

    # -- helpers -----------------------------------------------------------

    def _history(self, state: DialogState) -> list[Sentence]:
        doc = append_dialog_sentences(
            self.sentences, state.scenario, state.question, state.qa_pairs
        )
        return dialog_sentences(doc)

    def _snapshot(
        self, decision: DecisionState, predicted: set[int], answer_class: str
    ) -> dict:
        return {
            "verdict": decision.verdict.value,
            "matched_subject": decision.matched_set_index,
            "overlap": decision.overlap,
            "remaining_rule_ids": [
                self.universe.rules[i].rule_id for i in sorted(decision.remaining)
            ],
            "predicted": sorted(predicted),
            "answer_class": answer_class,
        }

    def _respond(
        self, state: DialogState, decision: DecisionState, predicted: set[int]
    ) -> tuple[DialogState, DialogTurn]:
        if decision.verdict is Verdict.IRRELEVANT:
            turn = DialogTurn(
                "answer",
                "This appears irrelevant to the loaded rule text.",
                "irrelevant",
                self._snapshot(decision, predicted, "irrelevant"),
            )
            return replace(state, terminal=True, open_inquiry=None), turn
        subject = self.subject_sets[decision.matched_set_index]
        cls, _ = answer(
            decision,
            predicted,
            subject,
            self.universe,
            self.sentences,
            self._history(state),
            self.classifier,
        )
        if cls is AnswerClass.NEED_INQUIRY:
            rule_index = min(decision.remaining)
            rule = self.universe.rules[rule_index]
            question = self.question_source.question_for(rule, self.sentences)
            turn = DialogTurn(
                "inquiry",
                question,
                "inquire",
                self._snapshot(decision, predicted, "inquire"),
            )
            new_state = replace(
                state,
                matched=decision.matched_set_index,
                open_inquiry=(rule_index, question),
            )
            return new_state, turn
        label = "yes" if cls is AnswerClass.YES else "no"
        turn = DialogTurn(
            "answer",
            "Yes." if label == "yes" else "No.",
            label,
            self._snapshot(decision, predicted, label),
        )
        return replace(
            state, matched=decision.matched_set_index, terminal=True, open_inquiry=None
        ), turn

    # -- public API --------------------------------------------------------

    def start(self, scenario: str, question: str) -> tuple[DialogState, DialogTurn]:
        state = DialogState(scenario=scenario, question=question)
        predicted = self.predictor.predict(self._history(state))
        decision = decide(predicted, self.subject_sets)
        return self._respond(state, decision, predicted)

    def user_answer(self, state: DialogState, text: str) -> tuple[DialogState, DialogTurn]:
        """Fold an inquiry answer into the history and produce the next turn."""
        if state.terminal or state.open_inquiry is None:
            raise InvalidState("no open inquiry to answer")
        rule_index, inquiry_text = state.open_inquiry
        state = replace(
            state,
            qa_pairs=state.qa_pairs + ((inquiry_text, text),),
            asked=state.asked | {rule_index},
            open_inquiry=None,
        )
        predicted = self.predictor.predict(self._history(state))
        subject = self.subject_sets[state.matched]
        overlap = sim(subject, predicted)
        remaining = frozenset(subject - predicted - state.asked)
        decision = DecisionState(
            state.matched,
            overlap,
            remaining,
            Verdict.INQUIRE if remaining else Verdict.DEFINITIVE,
        )
        return self._respond(state, decision, predicted)
