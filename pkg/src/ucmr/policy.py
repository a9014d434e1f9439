"""Decision policy: match predicted rules to a subject and answer or inquire.

The predicted rule set is compared against every subject's rule set by
overlap count; zero overlap everywhere means the conversation is
irrelevant, full coverage of the best subject gives a definitive
answer, and leftover rules trigger a follow-up inquiry. Yes/No comes
from negation detection between paired rule and history sentences.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Optional, Protocol, Sequence

from .corpus import Sentence
from .errors import InvalidState
from .spectral import Universe


class Verdict(enum.Enum):
    IRRELEVANT = "irrelevant"
    DEFINITIVE = "definitive"
    INQUIRE = "inquire"


class AnswerClass(enum.Enum):
    YES = "yes"
    NO = "no"
    NEED_INQUIRY = "inquire"


@dataclass(frozen=True)
class DecisionState:
    matched_set_index: Optional[int]
    overlap: int
    remaining: frozenset[int]
    verdict: Verdict


@dataclass(frozen=True)
class NegationVerdict:
    pair: tuple[int, int]
    is_negation: bool
    cue: Optional[str] = None


def sim(rule_set: set[int], predicted: set[int]) -> int:
    """Overlap count between a subject rule set and the predicted set."""
    return len(rule_set & predicted)


def set_diff(rule_set: set[int], predicted: set[int]) -> set[int]:
    """Rules of the subject not entailed by the predicted set."""
    return set(rule_set) - set(predicted)


def decide(predicted: set[int], subject_sets: Sequence[set[int]]) -> DecisionState:
    """Three-way decision: irrelevant, definitive, or inquire.

    The best subject is the one with the highest overlap (ties go to the
    lowest index); zero overlap everywhere is irrelevant.
    """
    if not subject_sets:
        raise ValueError("need at least one subject rule set")
    overlaps = [sim(rs, predicted) for rs in subject_sets]
    best = max(overlaps)
    if best == 0:
        return DecisionState(None, 0, frozenset(), Verdict.IRRELEVANT)
    matched = overlaps.index(best)
    remaining = frozenset(set_diff(subject_sets[matched], predicted))
    verdict = Verdict.DEFINITIVE if not remaining else Verdict.INQUIRE
    return DecisionState(matched, best, remaining, verdict)


NEGATION_CUES = ("not", "no", "never", "n't", "cannot", "without", "none")
_TOKEN_RE = re.compile(r"[a-z0-9']+")
OVERLAP_THRESHOLD = 0.5


def _tokens(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def _cue_of(tokens: Sequence[str]) -> Optional[str]:
    for tok in tokens:
        if tok in NEGATION_CUES:
            return tok
        if tok.endswith("n't"):
            return "n't"
    return None


def _strip_cues(tokens: Sequence[str]) -> set[str]:
    return {t for t in tokens if t not in NEGATION_CUES and not t.endswith("n't")}


def token_overlap(a: str, b: str) -> float:
    """Shared distinct tokens over the larger token set."""
    ta, tb = set(_tokens(a)), set(_tokens(b))
    if not ta or not tb:
        return 0.0
    return len(ta & tb) / max(len(ta), len(tb))


class NegationClassifier(Protocol):
    def classify(self, a: str, b: str) -> tuple[bool, Optional[str]]: ...


class LexicalNegationClassifier:
    """Reference detector: cue parity plus shared content tokens.

    Two sentences are a negation pair when exactly one contains a
    negation cue and their non-cue tokens overlap by at least half.
    """

    def classify(self, a: str, b: str) -> tuple[bool, Optional[str]]:
        ta, tb = _tokens(a), _tokens(b)
        cue_a, cue_b = _cue_of(ta), _cue_of(tb)
        if (cue_a is None) == (cue_b is None):
            return False, None
        content_a, content_b = _strip_cues(ta), _strip_cues(tb)
        if not content_a or not content_b:
            return False, None
        shared = len(content_a & content_b) / max(len(content_a), len(content_b))
        if shared >= OVERLAP_THRESHOLD:
            return True, cue_a if cue_a is not None else cue_b
        return False, None


def detect_negation(
    a: Sentence, b: Sentence, classifier: NegationClassifier
) -> NegationVerdict:
    is_neg, cue = classifier.classify(a.text, b.text)
    return NegationVerdict((a.id, b.id), is_neg, cue)


def _pair_history_sentence(
    member_texts: Sequence[str], history: Sequence[Sentence]
) -> Sentence:
    """The history sentence with the highest overlap against the members."""
    best, best_score = history[0], -1.0
    for sent in history:
        score = max(token_overlap(sent.text, m) for m in member_texts)
        if score > best_score:
            best, best_score = sent, score
    return best


def answer(
    state: DecisionState,
    predicted: set[int],
    subject_set: set[int],
    universe: Universe,
    corpus_sentences: Sequence[Sentence],
    history: Sequence[Sentence],
    classifier: NegationClassifier,
) -> tuple[AnswerClass, list[NegationVerdict]]:
    """Yes/No/NeedInquiry for a non-irrelevant decision.

    Every entailed rule of the matched subject is paired with its best
    history sentence; a negation in any pair forces No. Otherwise the
    answer is Yes when nothing remains and NeedInquiry when it does.
    """
    if state.verdict is Verdict.IRRELEVANT:
        raise InvalidState("answer() is undefined for an irrelevant decision")
    if not history:
        raise ValueError("history must be non-empty")
    verdicts: list[NegationVerdict] = []
    for rule_index in sorted(subject_set & predicted):
        rule = universe.rules[rule_index]
        members = [corpus_sentences[sid] for sid in rule.member_sentence_ids]
        paired = _pair_history_sentence([m.text for m in members], history)
        for member in members:
            verdicts.append(detect_negation(paired, member, classifier))
    if any(v.is_negation for v in verdicts):
        return AnswerClass.NO, verdicts
    if state.remaining:
        return AnswerClass.NEED_INQUIRY, verdicts
    return AnswerClass.YES, verdicts
