"""Level-logit extraction and the probability-weighted quality score."""

from __future__ import annotations

import json
import logging
import math
import os
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
import torch

from .data.builders import render_system_prompt, stalling_text
from .data.templates import instruction_templates
from .data.types import VideoKind, VideoManifestEntry
from .model.lm import MiniVQAModel
from .model.media import VideoTensors
from .model.tokenizer import WordTokenizer
from .quality import DEFAULT_WEIGHTS, LEVEL_ORDER, LEVEL_WORDS, LevelWeights

logger = logging.getLogger(__name__)

SLOT = "{LEVEL}"
DEFAULT_ANSWER_TEMPLATE = "The quality of the video is {LEVEL}."


@dataclass(frozen=True)
class LevelLogits:
    values: tuple  # five floats ordered High, Good, Fair, Poor, Low
    diagnostics: tuple = ()

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if len(vals) != len(LEVEL_ORDER):
            raise ValueError(f"need {len(LEVEL_ORDER)} level logits, got {len(vals)}")
        if not all(np.isfinite(vals)):
            raise ValueError("level logits must be finite")
        object.__setattr__(self, "values", vals)

    def as_array(self) -> np.ndarray:
        return np.array(self.values, dtype=np.float64)


@dataclass(frozen=True)
class QualityScore:
    value: float
    level_probs: tuple = ()

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"quality score {self.value} outside [0, 1]")

    def __float__(self) -> float:
        return self.value


@dataclass(frozen=True)
class ScoringTemplate:
    """Answer template with a single ``{LEVEL}`` slot.

    ``level_word_offset`` is the slot's token position inside the tokenized
    template. Left as ``None`` it is derived from the tokenizer; when given
    it is checked against the tokenizer.
    """

    answer_template: str = DEFAULT_ANSWER_TEMPLATE
    level_word_offset: Optional[int] = None

    def __post_init__(self):
        if self.answer_template.count(SLOT) != 1:
            raise ValueError("the answer template must contain exactly one {LEVEL} slot")

    @property
    def prefix(self) -> str:
        return self.answer_template.split(SLOT, 1)[0]

    def prefix_ids(self, tokenizer: WordTokenizer) -> list[int]:
        ids = tokenizer.encode(self.prefix)
        if self.level_word_offset is not None and self.level_word_offset != len(ids):
            raise ValueError(
                f"template slot sits at token {len(ids)} under this tokenizer, "
                f"not at the declared offset {self.level_word_offset}"
            )
        return ids


DEFAULT_TEMPLATE = ScoringTemplate()


def level_token_ids(tokenizer: WordTokenizer) -> tuple[list[int], list[str]]:
    """Vocabulary ids of the five level words, plus any diagnostics."""
    ids, notes = [], []
    for word in LEVEL_WORDS:
        pieces = tokenizer.encode(word)
        if not pieces or pieces[0] == tokenizer.unk_id:
            raise ValueError(f"level word {word!r} is not in the model vocabulary")
        if len(pieces) > 1:
            note = f"level word {word!r} spans {len(pieces)} tokens; using the first"
            warnings.warn(note, stacklevel=2)
            notes.append(note)
        ids.append(pieces[0])
    return ids, notes


@torch.no_grad()
def extract_level_logits(
    model: MiniVQAModel,
    tokenizer: WordTokenizer,
    system_prompt: str,
    question: str,
    media: VideoTensors | None,
    template: ScoringTemplate = DEFAULT_TEMPLATE,
) -> LevelLogits:
    """Teacher-force the template up to its slot and read the level-word logits there."""
    was_training = model.training
    model.eval()
    prefix = template.prefix_ids(tokenizer)
    ids, notes = level_token_ids(tokenizer)
    ex = model.build_example(tokenizer, system_prompt, question, media, answer_prefix=prefix)
    logits = model.logits_for(ex.embeddings)[-1]
    model.train(was_training)
    return LevelLogits(tuple(logits[ids].double().tolist()), tuple(notes))


def softmax(values: Sequence[float]) -> np.ndarray:
    z = np.asarray(values, dtype=np.float64)
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def weighted_score(
    logits: LevelLogits | Sequence[float], weights: LevelWeights = DEFAULT_WEIGHTS
) -> QualityScore:
    """Probability-weighted sum of the level weights, softmax over the five logits."""
    if not isinstance(logits, LevelLogits):
        logits = LevelLogits(tuple(logits))
    z = logits.as_array()
    e = np.exp(z - z.max())
    w = weights.as_array()
    # dividing once at the end keeps symmetric inputs exact (equal logits -> mean weight)
    value = math.fsum(w * e) / math.fsum(e)
    probs = e / math.fsum(e)
    # rounding can push the sum a hair past the weight range
    value = min(max(value, float(w.min())), float(w.max()))
    return QualityScore(value, tuple(float(p) for p in probs))


def scoring_question(entry: VideoManifestEntry, stalling_format: str = "summary") -> str:
    question = instruction_templates()["stage2_question"]
    if entry.kind is VideoKind.STREAMING_VIDEO and entry.stalling is not None:
        question = stalling_text(entry, stalling_format) + " " + question
    return question


def score_video(
    model: MiniVQAModel,
    tokenizer: WordTokenizer,
    entry: VideoManifestEntry,
    media: VideoTensors | None,
    mode_prompt: str = "score",
    template: ScoringTemplate = DEFAULT_TEMPLATE,
    weights: LevelWeights = DEFAULT_WEIGHTS,
) -> QualityScore:
    system_prompt = render_system_prompt(mode_prompt, entry.duration, entry.frame_rate)
    logits = extract_level_logits(
        model, tokenizer, system_prompt, scoring_question(entry), media, template
    )
    return weighted_score(logits, weights)


@dataclass
class BatchScores:
    rows: list[dict] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)


def score_manifest(
    model: MiniVQAModel,
    tokenizer: WordTokenizer,
    entries: Iterable[VideoManifestEntry],
    media: Callable[[VideoManifestEntry], VideoTensors | None],
    mode_prompt: str = "score",
    template: ScoringTemplate = DEFAULT_TEMPLATE,
    weights: LevelWeights = DEFAULT_WEIGHTS,
) -> BatchScores:
    """Score every entry; per-entry failures are collected rather than raised."""
    out = BatchScores()
    for entry in entries:
        try:
            score = score_video(model, tokenizer, entry, media(entry), mode_prompt, template, weights)
        except (OSError, ValueError, RuntimeError) as exc:
            logger.warning("scoring %s failed: %s", entry.id, exc)
            out.failures.append({"video_id": entry.id, "error": str(exc)})
            continue
        out.rows.append(
            {"video_id": entry.id, "score": score.value, "level_probs": list(score.level_probs)}
        )
    return out


def write_scores(rows: Iterable[dict], path: str | os.PathLike) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
            n += 1
    return n


def read_scores(path: str | os.PathLike) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
