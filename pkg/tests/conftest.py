from __future__ import annotations

from pathlib import Path

import pytest

from ucmr import corpus as corpus_mod
from ucmr.bundle import PipelineConfig, load_bundle, write_bundle_artifacts

ASSETS = Path(__file__).resolve().parents[1] / "src" / "ucmr" / "assets"

# Pinned hyperparameters for the bundled toy corpus; theta sits between the
# within-subject and cross-subject dissimilarity levels of that text.
TOY_CONFIG = PipelineConfig(sigma=1.0, theta=-0.45, seed=0)


@pytest.fixture(scope="session")
def toy_bundle_dir(tmp_path_factory) -> Path:
    out = tmp_path_factory.mktemp("toybundle") / "toy"
    sources = corpus_mod.load_sources(ASSETS / "toy_rule_text")
    sentences = corpus_mod.build_rule_document(sources)
    write_bundle_artifacts(out, sentences, TOY_CONFIG)
    return out


@pytest.fixture(scope="session")
def toy_bundle(toy_bundle_dir):
    return load_bundle(toy_bundle_dir)
