"""Corpus ingestion: rule-text sources and dialog turns as one sentence sequence.

Sources are concatenated in the given order, bullet points are rebuilt
into full sentences from their lead-in line, and short unpunctuated
lines are treated as headings and dropped. Dialog turns (scenario, user
question, inquiry/response pairs) are appended after the rule text with
consecutive ids.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import AllSourcesEmpty


class Origin(enum.Enum):
    RULE_TEXT = "RuleText"
    SCENARIO = "Scenario"
    USER_QUESTION = "UserQuestion"
    INQUIRY_RESPONSE = "InquiryResponse"


@dataclass(frozen=True)
class Sentence:
    id: int
    text: str
    origin: Origin = Origin.RULE_TEXT

    def __post_init__(self):
        if self.id < 0:
            raise ValueError("sentence id must be non-negative")
        if not self.text or self.text != self.text.strip():
            raise ValueError("sentence text must be non-empty and stripped")


@dataclass(frozen=True)
class SourceDoc:
    """One rule-text source: free text plus optional bullet blocks.

    Bullet blocks come after the body in sentence order; each bullet is
    rebuilt as ``lead_in + " " + bullet + "."``.
    """

    source_id: str
    body: str
    bullet_blocks: tuple[tuple[str, tuple[str, ...]], ...] = ()


# Terminator-bearing tokens matching these entries never end a sentence.
# Case-sensitive: "No." is the numero abbreviation, a lowercase "no." is a
# normal sentence end.
ABBREVIATIONS = frozenset(
    {
        "Dr.", "Mr.", "Mrs.", "Ms.", "Prof.", "St.", "Jr.", "Sr.",
        "No.", "Fig.", "Eq.", "Vol.", "Ch.", "pp.",
        "e.g.", "i.e.", "etc.", "vs.", "cf.", "al.", "approx.",
    }
)

_TERMINATORS = (".", "!", "?")
_WS = re.compile(r"\s+")

# Heading heuristic: a line with at most this many tokens and no terminal
# punctuation is dropped.
_HEADING_MAX_TOKENS = 6
_HEADING_TERMINALS = (".", "!", "?")


def _normalize(text: str) -> str:
    return _WS.sub(" ", text).strip()


def _is_abbreviation(token: str) -> bool:
    return token in ABBREVIATIONS or token.lstrip("(\"'[") in ABBREVIATIONS


def split_sentences(text: str, origin: Origin = Origin.RULE_TEXT) -> list[Sentence]:
    """Split text into sentences at .!? with an abbreviation guard.

    Joining the returned texts with single spaces reconstructs the input
    up to whitespace. Empty input yields an empty list.
    """
    norm = _normalize(text)
    if not norm:
        return []
    sentences: list[str] = []
    current: list[str] = []
    for token in norm.split(" "):
        current.append(token)
        if token.endswith(_TERMINATORS) and not _is_abbreviation(token):
            sentences.append(" ".join(current))
            current = []
    if current:
        sentences.append(" ".join(current))
    return [Sentence(i, s, origin) for i, s in enumerate(sentences)]


def _is_heading(line: str) -> bool:
    stripped = line.strip()
    if not stripped:
        return False
    if stripped.endswith(_HEADING_TERMINALS):
        return False
    return len(stripped.split()) <= _HEADING_MAX_TOKENS


def _body_without_headings(body: str) -> str:
    kept = [line for line in body.splitlines() if line.strip() and not _is_heading(line)]
    return " ".join(kept)


def _bullet_sentence(lead_in: str, bullet: str) -> str:
    text = f"{_normalize(lead_in)} {_normalize(bullet)}"
    text = text.rstrip(".,;") + "."
    return text


def build_rule_document(sources: Sequence[SourceDoc]) -> list[Sentence]:
    """Concatenate sources into one rule document with consecutive ids.

    Raises AllSourcesEmpty when no source yields any sentence.
    """
    if not sources:
        raise AllSourcesEmpty("no sources given")
    texts: list[str] = []
    for source in sources:
        for sent in split_sentences(_body_without_headings(source.body)):
            texts.append(sent.text)
        for lead_in, bullets in source.bullet_blocks:
            for bullet in bullets:
                texts.append(_bullet_sentence(lead_in, bullet))
    if not texts:
        raise AllSourcesEmpty("every source normalized to empty")
    return [Sentence(i, t, Origin.RULE_TEXT) for i, t in enumerate(texts)]


def append_dialog_sentences(
    doc: Sequence[Sentence],
    scenario: str,
    question: str,
    qa_pairs: Sequence[tuple[str, str]] = (),
) -> list[Sentence]:
    """Append scenario, question, and inquiry/response turns to a document.

    Each (inquiry, response) pair becomes one "<inquiry> <response>"
    sentence. Returns a new list; ids continue from the input document.
    """
    out = list(doc)
    next_id = len(out)
    for sent in split_sentences(scenario):
        out.append(Sentence(next_id, sent.text, Origin.SCENARIO))
        next_id += 1
    q = _normalize(question)
    if q:
        out.append(Sentence(next_id, q, Origin.USER_QUESTION))
        next_id += 1
    for inquiry, response in qa_pairs:
        text = _normalize(f"{inquiry} {response}")
        out.append(Sentence(next_id, text, Origin.INQUIRY_RESPONSE))
        next_id += 1
    return out


def dialog_sentences(doc: Sequence[Sentence]) -> list[Sentence]:
    """The conversation-history part of a document (non rule-text sentences)."""
    return [s for s in doc if s.origin is not Origin.RULE_TEXT]


_BULLET_PREFIX = "- "


def parse_source_text(source_id: str, text: str) -> SourceDoc:
    """Parse one plain-text source with optional bullet markup.

    Lines starting with "- " that follow a lead-in line ending in ":"
    form a bullet block; everything else stays in the body.
    """
    body_lines: list[str] = []
    blocks: list[tuple[str, tuple[str, ...]]] = []
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        line = lines[i]
        stripped = line.strip()
        if (
            stripped.endswith(":")
            and i + 1 < len(lines)
            and lines[i + 1].strip().startswith(_BULLET_PREFIX)
        ):
            bullets = []
            i += 1
            while i < len(lines) and lines[i].strip().startswith(_BULLET_PREFIX):
                bullets.append(lines[i].strip()[len(_BULLET_PREFIX):].strip())
                i += 1
            blocks.append((stripped, tuple(bullets)))
            continue
        body_lines.append(line)
        i += 1
    return SourceDoc(source_id, "\n".join(body_lines), tuple(blocks))


def load_sources(src_dir: str | Path) -> list[SourceDoc]:
    """Load every *.txt file in a directory (sorted by name) as a source."""
    paths = sorted(Path(src_dir).glob("*.txt"))
    return [parse_source_text(p.stem, p.read_text(encoding="utf-8")) for p in paths]


def write_jsonl(sentences: Iterable[Sentence], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in sentences:
            fh.write(json.dumps({"id": s.id, "text": s.text, "origin": s.origin.value}) + "\n")


def read_jsonl(path: str | Path) -> list[Sentence]:
    sentences = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            sentences.append(Sentence(obj["id"], obj["text"], Origin(obj["origin"])))
    return sentences
