import os
from pathlib import Path

import pytest
import torch
from hypothesis import HealthCheck, settings

from vqakit.data import build_corpus, generate_synthetic_corpus
from vqakit.data.synthetic import SyntheticConfig
from vqakit.model import MediaCache, MiniVQAModel, ModelConfig, WordTokenizer

settings.register_profile(
    "repo", deadline=None, max_examples=100, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "repo"))

torch.set_num_threads(1)

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture(scope="session")
def golden_dir() -> Path:
    return GOLDEN


@pytest.fixture(scope="session")
def small_synthetic():
    cfg = SyntheticConfig(with_depictions=True, streaming_fraction=0.3)
    return generate_synthetic_corpus(seed=11, n_videos=10, config=cfg)


@pytest.fixture(scope="session")
def small_pairs(small_synthetic):
    return build_corpus(small_synthetic.manifest, seed=3)


def texts_of(pairs):
    return [p.system_prompt + " " + p.question + " " + p.answer for p in pairs]


@pytest.fixture
def tiny_setup(small_synthetic, small_pairs):
    """A fresh small model, tokenizer and media cache over the small corpus."""
    from vqakit.data.builders import render_system_prompt
    from vqakit.scoring import DEFAULT_ANSWER_TEMPLATE

    tok = WordTokenizer.fit(
        texts_of(small_pairs) + [render_system_prompt("score", 1, 1), DEFAULT_ANSWER_TEMPLATE]
    )
    torch.manual_seed(0)
    cfg = ModelConfig(vocab_size=len(tok))
    model = MiniVQAModel(cfg)
    cache = MediaCache(cfg)
    for e in small_synthetic.manifest:
        cache.put(e.media_ref, e.frame_rate, small_synthetic.clips[e.id])
    return model, tok, cache


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
