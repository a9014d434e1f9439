"""Bundle directories tie the pipeline artifacts together.

A bundle holds corpus.jsonl, spans.json, rules.json, config.json and
optional model checkpoints (gan.ckpt.json, qg.ckpt.json). Everything a
run needs is echoed into config.json so outputs are self-describing and
reproducible byte for byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import corpus as corpus_mod
from .corpus import Origin, Sentence
from .dialog import DialogEngine
from .encoder import Backend, EncoderConfig, SentenceEncoder, build_encoder
from .entailment import GanTrainer, Generator, predict_rules
from .errors import PipelineError
from .evalharness import EvalExample, EvalPipeline
from .policy import Verdict, AnswerClass, answer, decide, token_overlap
from .question_gen import TemplateQuestionGenerator, generate_question, load_qg
from .segmentation import (
    SubjectSpan,
    default_theta,
    detect_boundaries,
    dissimilarity_series,
    segment,
)
from .spectral import Rule, RuleSet, Universe, build_universe, extract_rules

CORPUS_FILE = "corpus.jsonl"
SPANS_FILE = "spans.json"
RULES_FILE = "rules.json"
CONFIG_FILE = "config.json"
GAN_FILE = "gan.ckpt.json"
QG_FILE = "qg.ckpt.json"


@dataclass(frozen=True)
class PredictorConfig:
    kind: str = "lexical"  # "lexical" | "gan"
    min_overlap: float = 0.5
    threshold: float = 0.5

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "min_overlap": self.min_overlap,
            "threshold": self.threshold,
        }


@dataclass(frozen=True)
class PipelineConfig:
    sigma: float = 1.0
    theta: Optional[float] = None  # None: mean + 0.5 * stddev of the series
    seed: int = 0
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    predictor: PredictorConfig = field(default_factory=PredictorConfig)

    def to_dict(self) -> dict:
        return {
            "sigma": self.sigma,
            "theta": self.theta,
            "seed": self.seed,
            "k_policy": "round(log2(n)), clamped to [1, n]",
            "encoder": {
                "backend": self.encoder.backend.value,
                "dim": self.encoder.dim,
                "remote_url": self.encoder.remote_url,
                "store_path": self.encoder.store_path,
            },
            "predictor": self.predictor.to_dict(),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "PipelineConfig":
        enc = obj.get("encoder", {})
        pred = obj.get("predictor", {})
        return cls(
            sigma=obj.get("sigma", 1.0),
            theta=obj.get("theta"),
            seed=obj.get("seed", 0),
            encoder=EncoderConfig(
                backend=Backend(enc.get("backend", "Hashing")),
                dim=enc.get("dim", 768),
                remote_url=enc.get("remote_url"),
                store_path=enc.get("store_path"),
            ),
            predictor=PredictorConfig(
                kind=pred.get("kind", "lexical"),
                min_overlap=pred.get("min_overlap", 0.5),
                threshold=pred.get("threshold", 0.5),
            ),
        )


def dump_json(obj: dict, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(obj, sort_keys=True, indent=1) + "\n", encoding="utf-8"
    )


# -- pipeline stages ---------------------------------------------------------


def segment_corpus(
    sentences: Sequence[Sentence], encoder: SentenceEncoder, config: PipelineConfig
) -> tuple[list[SubjectSpan], list[int], float]:
    """Segment the rule-text part of a corpus; returns (spans, boundaries, theta)."""
    rule_sents = [s for s in sentences if s.origin is Origin.RULE_TEXT]
    embeddings = [encoder.encode_sentence(s.text) for s in rule_sents]
    if len(embeddings) == 1:
        return [SubjectSpan(0, (0,))], [], config.theta or 0.0
    series = dissimilarity_series(embeddings, config.sigma)
    theta = config.theta if config.theta is not None else default_theta(series)
    spans = segment(embeddings, config.sigma, theta)
    return spans, detect_boundaries(series, theta), theta


def extract_all_rules(
    spans: Sequence[SubjectSpan],
    sentences: Sequence[Sentence],
    encoder: SentenceEncoder,
    config: PipelineConfig,
) -> tuple[Universe, list[set[int]]]:
    rule_sets = []
    for span in spans:
        embeddings = [encoder.encode_sentence(sentences[i].text) for i in span.sentence_ids]
        rule_sets.append(extract_rules(span, embeddings, config.sigma, config.seed))
    return build_universe(rule_sets)


def spans_to_json(spans: Sequence[SubjectSpan], boundaries: Sequence[int], theta: float) -> dict:
    return {
        "spans": [
            {"span_id": s.span_id, "sentence_ids": list(s.sentence_ids)} for s in spans
        ],
        "boundaries": list(boundaries),
        "theta": theta,
    }


def spans_from_json(obj: dict) -> list[SubjectSpan]:
    return [
        SubjectSpan(s["span_id"], tuple(s["sentence_ids"])) for s in obj["spans"]
    ]


def rules_to_json(universe: Universe, subject_sets: Sequence[set[int]]) -> dict:
    return {
        "universe": [
            {
                "rule_id": r.rule_id,
                "member_sentence_ids": list(r.member_sentence_ids),
                "subject_span_id": r.subject_span_id,
            }
            for r in universe.rules
        ],
        "subjects": [
            {
                "span_id": i,
                "rule_ids": [universe.rules[j].rule_id for j in sorted(indices)],
            }
            for i, indices in enumerate(subject_sets)
        ],
    }


def rules_from_json(
    obj: dict, sentences: Sequence[Sentence], encoder: SentenceEncoder
) -> tuple[Universe, list[set[int]]]:
    """Rebuild the universe; centroids are recomputed from the encoder."""
    rules = []
    for entry in obj["universe"]:
        member_ids = tuple(entry["member_sentence_ids"])
        centroid = np.mean(
            [encoder.encode_sentence(sentences[i].text) for i in member_ids], axis=0
        )
        rules.append(
            Rule(entry["rule_id"], member_ids, centroid, entry["subject_span_id"])
        )
    universe = Universe(tuple(rules))
    subject_sets = [
        {universe.index_of(rid) for rid in subject["rule_ids"]}
        for subject in obj["subjects"]
    ]
    return universe, subject_sets


# -- predictors --------------------------------------------------------------


class LexicalRulePredictor:
    """A rule is entailed when any member sentence overlaps the history."""

    def __init__(
        self,
        universe: Universe,
        sentences: Sequence[Sentence],
        min_overlap: float = 0.5,
    ):
        self.universe = universe
        self.sentences = sentences
        self.min_overlap = min_overlap

    def predict(self, history: Sequence[Sentence]) -> set[int]:
        predicted = set()
        for idx, rule in enumerate(self.universe.rules):
            members = [self.sentences[i].text for i in rule.member_sentence_ids]
            for h in history:
                if any(token_overlap(h.text, m) >= self.min_overlap for m in members):
                    predicted.add(idx)
                    break
        return predicted


class GanRulePredictor:
    def __init__(self, generator: Generator, encoder: SentenceEncoder, threshold: float = 0.5):
        self.generator = generator
        self.encoder = encoder
        self.threshold = threshold

    def predict(self, history: Sequence[Sentence]) -> set[int]:
        matrices = [self.encoder.encode_tokens(s.text) for s in history]
        return predict_rules(matrices, self.generator, self.threshold)


class TrainedQuestionSource:
    """Greedy decoding from a trained decoder checkpoint."""

    def __init__(self, decoder, vocab, encoder: SentenceEncoder, max_len: int = 30):
        self.decoder = decoder
        self.vocab = vocab
        self.encoder = encoder
        self.max_len = max_len

    def question_for(self, rule: Rule, sentences: Sequence[Sentence]) -> str:
        tokens = generate_question(
            rule, sentences, self.encoder, self.decoder, self.vocab, self.max_len
        )
        if not tokens:
            return TemplateQuestionGenerator().question_for(rule, sentences)
        return " ".join(tokens)


# -- bundles -----------------------------------------------------------------


@dataclass
class Bundle:
    ref: str
    config: PipelineConfig
    sentences: list[Sentence]
    spans: list[SubjectSpan]
    universe: Universe
    subject_sets: list[set[int]]
    encoder: SentenceEncoder
    engine: DialogEngine


def write_bundle_artifacts(
    out_dir: str | Path,
    sentences: Sequence[Sentence],
    config: PipelineConfig,
) -> None:
    """Run ingest->segment->extract and write all artifacts to out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    encoder = build_encoder(config.encoder)
    corpus_mod.write_jsonl(sentences, out / CORPUS_FILE)
    spans, boundaries, theta = segment_corpus(sentences, encoder, config)
    dump_json(spans_to_json(spans, boundaries, theta), out / SPANS_FILE)
    universe, subject_sets = extract_all_rules(spans, sentences, encoder, config)
    dump_json(rules_to_json(universe, subject_sets), out / RULES_FILE)
    dump_json(config.to_dict(), out / CONFIG_FILE)


def load_bundle(bundle_dir: str | Path, ref: Optional[str] = None) -> Bundle:
    path = Path(bundle_dir)
    if not (path / CONFIG_FILE).exists():
        raise PipelineError("bundle", f"no {CONFIG_FILE} in {path}")
    config = PipelineConfig.from_dict(
        json.loads((path / CONFIG_FILE).read_text(encoding="utf-8"))
    )
    encoder = build_encoder(config.encoder)
    sentences = corpus_mod.read_jsonl(path / CORPUS_FILE)
    spans = spans_from_json(json.loads((path / SPANS_FILE).read_text(encoding="utf-8")))
    universe, subject_sets = rules_from_json(
        json.loads((path / RULES_FILE).read_text(encoding="utf-8")), sentences, encoder
    )
    if config.predictor.kind == "gan" or (
        config.predictor.kind == "auto" and (path / GAN_FILE).exists()
    ):
        trainer, _ = GanTrainer.load(path / GAN_FILE)
        predictor = GanRulePredictor(
            trainer.generator, encoder, config.predictor.threshold
        )
    else:
        predictor = LexicalRulePredictor(
            universe, sentences, config.predictor.min_overlap
        )
    if (path / QG_FILE).exists():
        decoder, vocab, qg_config = load_qg(path / QG_FILE)
        question_source = TrainedQuestionSource(
            decoder, vocab, encoder, qg_config.max_len
        )
    else:
        question_source = TemplateQuestionGenerator()
    engine = DialogEngine(sentences, universe, subject_sets, predictor, question_source)
    return Bundle(
        ref=ref or path.name,
        config=config,
        sentences=sentences,
        spans=spans,
        universe=universe,
        subject_sets=subject_sets,
        encoder=encoder,
        engine=engine,
    )


# -- end-to-end evaluation ----------------------------------------------------


def build_eval_pipeline(config: PipelineConfig) -> EvalPipeline:
    """Per-example pipeline: ingest, segment, extract, decide, answer.

    The example's full gold follow-up history is folded in before the
    single classification, so the prediction is the class of the next
    system utterance.
    """

    def pipeline(example: EvalExample) -> tuple[str, Optional[str]]:
        encoder = build_encoder(config.encoder)
        doc = corpus_mod.build_rule_document(
            [corpus_mod.parse_source_text(example.example_id, example.rule_text)]
        )
        spans, _, _ = segment_corpus(doc, encoder, config)
        universe, subject_sets = extract_all_rules(spans, doc, encoder, config)
        predictor = LexicalRulePredictor(universe, doc, config.predictor.min_overlap)
        engine = DialogEngine(
            doc, universe, subject_sets, predictor, TemplateQuestionGenerator()
        )
        full = corpus_mod.append_dialog_sentences(
            doc, example.scenario, example.question, example.follow_ups
        )
        history = [s for s in full if s.origin is not Origin.RULE_TEXT]
        predicted = predictor.predict(history)
        decision = decide(predicted, subject_sets)
        if decision.verdict is Verdict.IRRELEVANT:
            return "irrelevant", None
        cls, _ = answer(
            decision,
            predicted,
            subject_sets[decision.matched_set_index],
            universe,
            doc,
            history,
            engine.classifier,
        )
        if cls is AnswerClass.NEED_INQUIRY:
            rule = universe.rules[min(decision.remaining)]
            return "inquire", engine.question_source.question_for(rule, doc)
        return ("yes", None) if cls is AnswerClass.YES else ("no", None)

    return pipeline
