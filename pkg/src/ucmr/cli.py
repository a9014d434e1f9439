"""Command-line entry points for the whole pipeline.

Subcommands: ingest, segment, extract, train-gan, train-qg, eval,
chat, serve, and build-bundle (ingest+segment+extract+config in one
step). Exit codes: 0 success, 1 usage/validation error, 2 pipeline
error. Identical inputs and seed produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np
import torch

from . import corpus as corpus_mod
from .bundle import (
    CONFIG_FILE,
    GAN_FILE,
    QG_FILE,
    PipelineConfig,
    PredictorConfig,
    build_eval_pipeline,
    dump_json,
    extract_all_rules,
    load_bundle,
    rules_from_json,
    rules_to_json,
    segment_corpus,
    spans_from_json,
    spans_to_json,
    write_bundle_artifacts,
)
from .encoder import Backend, EncoderConfig, build_encoder
from .entailment import TrainConfig, train
from .errors import UcmrError
from .evalharness import load_dataset, run_e2e_eval
from .question_gen import QgConfig, QgPair, save_qg, train_qg

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PIPELINE = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _encoder_config(args) -> EncoderConfig:
    return EncoderConfig(
        backend=Backend(args.encoder_backend),
        dim=args.encoder_dim,
        remote_url=getattr(args, "remote_url", None),
        store_path=getattr(args, "store_path", None),
    )


def _pipeline_config(args) -> PipelineConfig:
    return PipelineConfig(
        sigma=args.sigma,
        theta=args.theta,
        seed=args.seed,
        encoder=_encoder_config(args),
        predictor=PredictorConfig(kind=args.predictor, min_overlap=args.min_overlap),
    )


def _add_encoder_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--encoder-backend", default="Hashing",
                   choices=[b.value for b in Backend])
    p.add_argument("--encoder-dim", type=int, default=768)
    p.add_argument("--remote-url", default=None)
    p.add_argument("--store-path", default=None)


def _add_pipeline_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--theta", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--predictor", default="lexical", choices=["lexical", "gan"])
    p.add_argument("--min-overlap", type=float, default=0.5)
    _add_encoder_flags(p)


def cmd_ingest(args) -> int:
    sources = corpus_mod.load_sources(args.src_dir)
    sentences = corpus_mod.build_rule_document(sources)
    corpus_mod.write_jsonl(sentences, args.output)
    print(f"wrote {len(sentences)} sentences to {args.output}")
    return EXIT_OK


def cmd_segment(args) -> int:
    sentences = corpus_mod.read_jsonl(args.corpus)
    config = _pipeline_config(args)
    encoder = build_encoder(config.encoder)
    spans, boundaries, theta = segment_corpus(sentences, encoder, config)
    dump_json(spans_to_json(spans, boundaries, theta), args.output)
    print(f"wrote {len(spans)} spans to {args.output}")
    return EXIT_OK


def cmd_extract(args) -> int:
    spans_path = Path(args.spans)
    corpus_path = Path(args.corpus) if args.corpus else spans_path.parent / "corpus.jsonl"
    sentences = corpus_mod.read_jsonl(corpus_path)
    spans = spans_from_json(json.loads(spans_path.read_text(encoding="utf-8")))
    config = _pipeline_config(args)
    encoder = build_encoder(config.encoder)
    universe, subject_sets = extract_all_rules(spans, sentences, encoder, config)
    dump_json(rules_to_json(universe, subject_sets), args.output)
    print(f"wrote universe of {len(universe)} rules to {args.output}")
    return EXIT_OK


def cmd_build_bundle(args) -> int:
    sources = corpus_mod.load_sources(args.src_dir)
    sentences = corpus_mod.build_rule_document(sources)
    write_bundle_artifacts(args.output, sentences, _pipeline_config(args))
    print(f"bundle written to {args.output}")
    return EXIT_OK


def cmd_train_gan(args) -> int:
    sentences = corpus_mod.read_jsonl(args.corpus)
    rules_obj = json.loads(Path(args.rules).read_text(encoding="utf-8"))
    spans_path = Path(args.spans) if args.spans else Path(args.rules).parent / "spans.json"
    spans = spans_from_json(json.loads(spans_path.read_text(encoding="utf-8")))
    config = _pipeline_config(args)
    encoder = build_encoder(config.encoder)
    universe, subject_sets = rules_from_json(rules_obj, sentences, encoder)
    span_tokens = [
        np.vstack([encoder.encode_tokens(sentences[i].text) for i in span.sentence_ids])
        for span in spans
    ]
    indicators = np.stack([universe.indicator(sorted(s)) for s in subject_sets])
    train_config = TrainConfig(seed=args.seed, total_steps=args.steps)
    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    trainer = train(
        span_tokens, indicators, config.encoder.dim, train_config, checkpoint_dir=out_dir
    )
    trainer.save(out_dir / GAN_FILE, train_config.total_steps)
    print(f"trained {train_config.total_steps} steps; checkpoint at {out_dir / GAN_FILE}")
    return EXIT_OK


def cmd_train_qg(args) -> int:
    pairs = []
    with open(args.pairs, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            pairs.append(QgPair(tuple(obj["source_sentences"]), obj["question"]))
    config = QgConfig(
        hidden=args.hidden, lr=args.lr, steps=args.steps, seed=args.seed
    )
    encoder = build_encoder(
        EncoderConfig(backend=Backend(args.encoder_backend), dim=args.encoder_dim)
    )
    decoder, vocab = train_qg(pairs, encoder, config)
    save_qg(args.output, decoder, vocab, config)
    print(f"trained question generator on {len(pairs)} pairs; saved to {args.output}")
    return EXIT_OK


def cmd_eval(args) -> int:
    dataset = load_dataset(args.dataset)
    if args.bundle:
        config = PipelineConfig.from_dict(
            json.loads((Path(args.bundle) / CONFIG_FILE).read_text(encoding="utf-8"))
        )
    else:
        config = _pipeline_config(args)
    report = run_e2e_eval(dataset, build_eval_pipeline(config))
    dump_json(report, args.output)
    print(json.dumps({k: report[k] for k in ("micro", "macro", "bleu1", "bleu4")}))
    return EXIT_OK


def cmd_chat(args) -> int:
    bundle = load_bundle(args.bundle)
    out = sys.stdout

    def prompt(label: str) -> str:
        out.write(label)
        out.flush()
        line = sys.stdin.readline()
        if not line:
            raise EOFError
        return line.strip()

    try:
        scenario = prompt("Scenario: ")
        question = prompt("Question: ")
        state, turn = bundle.engine.start(scenario, question)
        out.write(f"[{turn.answer_class}] {turn.text}\n")
        while not state.terminal and state.open_inquiry is not None:
            reply = prompt("> ")
            state, turn = bundle.engine.user_answer(state, reply)
            out.write(f"[{turn.answer_class}] {turn.text}\n")
        out.flush()
    except EOFError:
        return EXIT_OK
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app, load_corpus_dir

    if args.bundle:
        bundle = load_bundle(args.bundle)
        bundles = {bundle.ref: bundle}
    else:
        corpus_dir = args.corpus_dir or os.environ.get("UCMR_CORPUS_DIR")
        if not corpus_dir:
            print("error: --bundle or --corpus-dir (or UCMR_CORPUS_DIR) required",
                  file=sys.stderr)
            return EXIT_USAGE
        bundles = load_corpus_dir(corpus_dir)
    log_dir = args.log_dir or os.environ.get("UCMR_LOG_DIR", "ucmr-logs")
    addr = args.addr or os.environ.get("UCMR_ADDR", "127.0.0.1:8000")
    host, _, port = addr.rpartition(":")
    app = create_app(bundles, log_dir)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port))
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="ucmr", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="rule-text sources -> corpus.jsonl")
    p.add_argument("src_dir")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("segment", help="corpus.jsonl -> spans.json")
    p.add_argument("corpus")
    p.add_argument("-o", "--output", required=True)
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("extract", help="spans.json -> rules.json")
    p.add_argument("spans")
    p.add_argument("--corpus", default=None)
    p.add_argument("-o", "--output", required=True)
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("build-bundle", help="sources -> full bundle directory")
    p.add_argument("src_dir")
    p.add_argument("-o", "--output", required=True)
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_build_bundle)

    p = sub.add_parser("train-gan", help="train the entailment model")
    p.add_argument("rules")
    p.add_argument("corpus")
    p.add_argument("--spans", default=None)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("-o", "--output", required=True)
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_train_gan)

    p = sub.add_parser("train-qg", help="train the question generator")
    p.add_argument("pairs")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    _add_encoder_flags(p)
    p.set_defaults(func=cmd_train_qg)

    p = sub.add_parser("eval", help="run the end-to-end evaluation")
    p.add_argument("dataset")
    p.add_argument("--bundle", default=None)
    p.add_argument("-o", "--output", required=True)
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("chat", help="interactive dialog REPL over a bundle")
    p.add_argument("--bundle", required=True)
    p.set_defaults(func=cmd_chat)

    p = sub.add_parser("serve", help="run the HTTP session service")
    p.add_argument("--bundle", default=None)
    p.add_argument("--corpus-dir", default=None)
    p.add_argument("--log-dir", default=None)
    p.add_argument("--addr", default=None)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    torch.set_num_threads(1)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except UcmrError as exc:
        print(f"pipeline error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())
