"""Follow-up question generation for an unentailed rule.

An LSTM decoder attends over the token embeddings of the rule's member
sentences; its initial hidden state is a learned projection of the mean
member-sentence embedding. The per-step distribution is
softmax(tanh(W_s tanh(W_t [h; c]))) with c the attention context.
A deterministic template generator ("Is it true that ...?") stands in
whenever no trained decoder is configured.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .checkpoint import load_checkpoint, save_checkpoint
from .corpus import Sentence
from .encoder import SentenceEncoder
from .errors import CheckpointError, EmptyRule, NonFiniteLoss, ShapeMismatch
from .spectral import Rule

PAD, BOS, EOS, UNK = 0, 1, 2, 3
RESERVED = ("<pad>", "<bos>", "<eos>", "<unk>")
CHECKPOINT_KIND = "question-decoder"


class Vocabulary:
    """Token/index bijection with four fixed reserved entries."""

    def __init__(self, tokens: Sequence[str]):
        self.tokens = list(RESERVED) + [t for t in tokens if t not in RESERVED]
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")
        self.index = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def encode(self, text: str) -> list[int]:
        return [self.index.get(tok, UNK) for tok in text.split()]

    def decode(self, ids: Sequence[int]) -> list[str]:
        return [self.tokens[i] for i in ids]

    @classmethod
    def from_texts(cls, texts: Sequence[str]) -> "Vocabulary":
        seen: dict[str, None] = {}
        for text in texts:
            for tok in text.split():
                seen.setdefault(tok, None)
        return cls(list(seen))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.tokens[len(RESERVED):]), encoding="utf-8"
        )

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class QgConfig:
    hidden: int = 128
    lr: float = 1e-3
    steps: int = 2000
    seed: int = 0
    max_len: int = 30

    def to_dict(self) -> dict:
        return {
            "hidden": self.hidden,
            "lr": self.lr,
            "steps": self.steps,
            "seed": self.seed,
            "max_len": self.max_len,
        }


class QuestionDecoder(nn.Module):
    """Recurrent decoder with bilinear attention over input token rows."""

    def __init__(self, vocab_size: int, token_dim: int, hidden: int = 128):
        super().__init__()
        self.vocab_size = vocab_size
        self.token_dim = token_dim
        self.hidden = hidden
        self.embed = nn.Embedding(vocab_size, hidden)
        self.cell = nn.LSTMCell(hidden, hidden)
        self.attn = nn.Linear(token_dim, hidden, bias=False)
        self.combine = nn.Linear(hidden + token_dim, hidden, bias=False)
        self.project = nn.Linear(hidden, vocab_size, bias=False)
        self.init_state = nn.Linear(token_dim, hidden)
        # Unit-norm sentence means produce tiny default activations; a
        # larger projection makes h0 distinctive enough for the first
        # decode step to branch on the input.
        nn.init.uniform_(
            self.init_state.weight,
            -math.sqrt(3.0 / token_dim) * 4.0,
            math.sqrt(3.0 / token_dim) * 4.0,
        )
        self.double()

    def attention(self, tokens: torch.Tensor, h: torch.Tensor) -> torch.Tensor:
        """Softmax-weighted sum of token rows scored by h^T W_a x_i."""
        if tokens.dim() != 2 or tokens.shape[1] != self.token_dim:
            raise ShapeMismatch(
                f"token matrix {tuple(tokens.shape)} does not match dim {self.token_dim}"
            )
        scores = self.attn(tokens) @ h
        weights = F.softmax(scores, dim=0)
        return weights @ tokens

    def distribution(self, h: torch.Tensor, context: torch.Tensor) -> torch.Tensor:
        inner = torch.tanh(self.combine(torch.cat([h, context])))
        return F.softmax(torch.tanh(self.project(inner)), dim=0)

    def decode_step(
        self,
        y_prev: int,
        state: tuple[torch.Tensor, torch.Tensor],
        tokens: torch.Tensor,
    ) -> tuple[torch.Tensor, tuple[torch.Tensor, torch.Tensor]]:
        """One step: returns the next-token distribution and the new state."""
        if not 0 <= y_prev < self.vocab_size:
            raise ValueError(f"token index {y_prev} outside the vocabulary")
        emb = self.embed(torch.tensor(y_prev))
        h, c = self.cell(emb.unsqueeze(0), (state[0].unsqueeze(0), state[1].unsqueeze(0)))
        h, c = h.squeeze(0), c.squeeze(0)
        context = self.attention(tokens, h)
        return self.distribution(h, context), (h, c)

    def initial_state(self, sentence_mean: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        h0 = self.init_state(sentence_mean)
        return h0, torch.zeros_like(h0)


def attention(tokens: np.ndarray, h: np.ndarray, decoder: QuestionDecoder) -> np.ndarray:
    """Context vector for one hidden state (numpy surface)."""
    with torch.no_grad():
        return decoder.attention(
            torch.as_tensor(np.asarray(tokens, dtype=np.float64)),
            torch.as_tensor(np.asarray(h, dtype=np.float64)),
        ).numpy()


def sequence_log_likelihood(
    decoder: QuestionDecoder,
    tokens: torch.Tensor,
    sentence_mean: torch.Tensor,
    target_ids: Sequence[int],
) -> torch.Tensor:
    """Teacher-forced sum of per-step log-probabilities (ends at <eos>)."""
    state = decoder.initial_state(sentence_mean)
    y_prev = BOS
    total = torch.zeros((), dtype=torch.float64)
    for target in list(target_ids) + [EOS]:
        dist, state = decoder.decode_step(y_prev, state, tokens)
        total = total + torch.log(dist[target])
        y_prev = target
    return total


def generate_question(
    rule: Rule,
    sentences: Sequence[Sentence],
    encoder: SentenceEncoder,
    decoder: QuestionDecoder,
    vocab: Vocabulary,
    max_len: int = 30,
) -> list[str]:
    """Greedy decode until <eos> or max_len; returns plain tokens."""
    if not rule.member_sentence_ids:
        raise EmptyRule(f"rule {rule.rule_id} has no members")
    member_texts = [sentences[sid].text for sid in rule.member_sentence_ids]
    tokens = torch.as_tensor(
        np.vstack([encoder.encode_tokens(t) for t in member_texts])
    )
    mean_emb = torch.as_tensor(
        np.mean([encoder.encode_sentence(t) for t in member_texts], axis=0)
    )
    with torch.no_grad():
        state = decoder.initial_state(mean_emb)
        y_prev = BOS
        out: list[int] = []
        for _ in range(max_len):
            dist, state = decoder.decode_step(y_prev, state, tokens)
            y_prev = int(dist.argmax())
            if y_prev == EOS:
                break
            out.append(y_prev)
    return vocab.decode(out)


@dataclass
class QgPair:
    member_texts: tuple[str, ...]
    question: str


def _prepare(
    pairs: Sequence[QgPair], encoder: SentenceEncoder, vocab: Vocabulary
) -> list[tuple[torch.Tensor, torch.Tensor, list[int]]]:
    prepared = []
    for pair in pairs:
        if not pair.question.strip():
            raise ValueError("empty target question")
        if not pair.member_texts:
            raise ValueError("pair has no source sentences")
        tokens = torch.as_tensor(
            np.vstack([encoder.encode_tokens(t) for t in pair.member_texts])
        )
        mean_emb = torch.as_tensor(
            np.mean([encoder.encode_sentence(t) for t in pair.member_texts], axis=0)
        )
        prepared.append((tokens, mean_emb, vocab.encode(pair.question)))
    return prepared


def train_qg(
    pairs: Sequence[QgPair],
    encoder: SentenceEncoder,
    config: QgConfig = QgConfig(),
    loss_sink: Optional[list[float]] = None,
) -> tuple[QuestionDecoder, Vocabulary]:
    """Teacher-forced cross-entropy training with Adam; seed-deterministic."""
    if not pairs:
        raise ValueError("need at least one training pair")
    vocab = Vocabulary.from_texts([p.question for p in pairs])
    prepared = _prepare(pairs, encoder, vocab)
    token_dim = prepared[0][0].shape[1]
    torch.manual_seed(config.seed)
    decoder = QuestionDecoder(len(vocab), token_dim, config.hidden)
    opt = torch.optim.Adam(decoder.parameters(), lr=config.lr)
    old_threads = torch.get_num_threads()
    torch.set_num_threads(1)
    try:
        for _ in range(config.steps):
            total = torch.zeros((), dtype=torch.float64)
            n_tokens = 0
            for tokens, mean_emb, target in prepared:
                total = total - sequence_log_likelihood(decoder, tokens, mean_emb, target)
                n_tokens += len(target) + 1
            loss = total / n_tokens
            if not math.isfinite(float(loss.detach())):
                raise NonFiniteLoss(f"question-generator loss became {float(loss)}")
            if loss_sink is not None:
                loss_sink.append(float(loss.detach()))
            opt.zero_grad()
            loss.backward()
            opt.step()
    finally:
        torch.set_num_threads(old_threads)
    return decoder, vocab


class TemplateQuestionGenerator:
    """Fallback: "Is it true that <first member sentence>?"."""

    def question_for(self, rule: Rule, sentences: Sequence[Sentence]) -> str:
        if not rule.member_sentence_ids:
            raise EmptyRule(f"rule {rule.rule_id} has no members")
        text = sentences[rule.member_sentence_ids[0]].text.rstrip(".!?")
        if text:
            text = text[0].lower() + text[1:]
        return f"Is it true that {text}?"


def save_qg(
    path: str | Path, decoder: QuestionDecoder, vocab: Vocabulary, config: QgConfig
) -> None:
    arrays = {
        name: tensor.detach().numpy().copy()
        for name, tensor in decoder.state_dict().items()
    }
    save_checkpoint(
        path,
        CHECKPOINT_KIND,
        {
            "vocab": vocab.tokens[len(RESERVED):],
            "token_dim": decoder.token_dim,
            "hidden": decoder.hidden,
            "train": config.to_dict(),
        },
        config.steps,
        config.seed,
        arrays,
    )


def load_qg(path: str | Path) -> tuple[QuestionDecoder, Vocabulary, QgConfig]:
    payload = load_checkpoint(path, CHECKPOINT_KIND)
    cfg = payload["config"]
    vocab = Vocabulary(cfg["vocab"])
    decoder = QuestionDecoder(len(vocab), cfg["token_dim"], cfg["hidden"])
    expected = {
        name: tuple(t.shape) for name, t in decoder.state_dict().items()
    }
    stored = {name: tuple(a.shape) for name, a in payload["arrays"].items()}
    if stored != expected:
        raise CheckpointError("question-decoder shape table mismatch")
    decoder.load_state_dict(
        {name: torch.as_tensor(arr) for name, arr in payload["arrays"].items()}
    )
    return decoder, vocab, QgConfig(**cfg["train"])
