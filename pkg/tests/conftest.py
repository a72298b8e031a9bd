"""Session fixtures: the bundled golden set, a mock-synthesized corpus, and
the trained separable bundles shared by the end-to-end suites."""

from __future__ import annotations

import time
from dataclasses import dataclass
from importlib import resources
from typing import Optional

import pytest

from fgprm import codec, offline, rewards
from fgprm.core import AnnotatedInstance
from fgprm.injection import CorpusConfig, build_corpus
from fgprm.rewards import ScorerBundle, TrainConfig
from tests.helpers import make_clean_golden


@pytest.fixture(scope="session")
def golden20() -> list[AnnotatedInstance]:
    data = resources.files("fgprm.data").joinpath("mini_golden.jsonl")
    with resources.as_file(data) as path:
        return codec.read_dataset(path)


@pytest.fixture(scope="session")
def mini_corpus(golden20):
    config = CorpusConfig(per_type_quota=3, seed=0)
    provider = offline.offline_provider(golden20, config)
    return build_corpus(golden20, provider, config)


@dataclass
class SeparableSetup:
    golden: list
    corpus: list
    train_set: list
    eval_set: list
    fg: ScorerBundle
    cg: ScorerBundle
    synth_seconds: float
    train_seconds: float
    config: Optional[CorpusConfig] = None


@pytest.fixture(scope="session")
def separable() -> SeparableSetup:
    """Synthesize (mock) and train on a lexically separable corpus of
    2,000+ instances; shared by the end-to-end and verification suites."""
    t0 = time.monotonic()
    golden = make_clean_golden(360, seed=11)
    config = CorpusConfig(per_type_quota=170, seed=7, use_deterministic_ce=False)
    provider = offline.offline_provider(golden, config)
    corpus = build_corpus(golden, provider, config).instances
    synth_seconds = time.monotonic() - t0
    assert len(corpus) >= 2000

    eval_set = corpus[::5]
    train_set = [inst for i, inst in enumerate(corpus) if i % 5 != 0]

    t1 = time.monotonic()
    train_cfg = TrainConfig(
        learning_rate=1.0, epochs=8, batch_size=32, seed=3, early_stop_patience=2
    )
    fg, _ = rewards.train("fg_prm", train_set, train_cfg)
    cg, _ = rewards.train("cg_prm", train_set, train_cfg)
    train_seconds = time.monotonic() - t1
    return SeparableSetup(
        golden=golden,
        corpus=corpus,
        train_set=train_set,
        eval_set=eval_set,
        fg=fg,
        cg=cg,
        synth_seconds=synth_seconds,
        train_seconds=train_seconds,
        config=config,
    )
