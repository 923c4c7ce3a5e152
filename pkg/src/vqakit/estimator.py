"""scikit-learn style wrappers around the scorer and the stalling summary."""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np
import torch
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .data.builders import render_system_prompt
from .data.pipeline import build_corpus
from .data.templates import instruction_templates
from .data.types import VideoManifestEntry
from .evaluation import srcc
from .model.config import ModelConfig
from .model.lm import MiniVQAModel
from .model.media import MediaCache
from .model.tokenizer import WordTokenizer
from .quality import MosScore, StallingTrace, summarize_stalling
from .scoring import DEFAULT_ANSWER_TEMPLATE, score_video
from .training import DATA_STAGE, CurriculumPlan, Hyperparams, StageId, media_loader, run_curriculum
from .utils.seeding import derive_seed
from .utils.validation import check_array_1d, check_consistent_length

DESK_STAGES = ("S1_spatial_image", "S1_motion_video", "S2_ugc")


def _check_entries(X) -> list[VideoManifestEntry]:
    entries = list(X)
    if not entries:
        raise ValueError("X must contain at least one manifest entry")
    bad = [type(e).__name__ for e in entries if not isinstance(e, VideoManifestEntry)]
    if bad:
        raise TypeError(f"X must hold VideoManifestEntry objects, found {bad[0]}")
    return entries


class VideoQualityScorer(RegressorMixin, BaseEstimator):
    """Curriculum-trained toy scorer with ``fit`` / ``predict`` / ``score``.

    ``X`` is a sequence of manifest entries. Labels come from each entry's
    MOS unless ``y`` is given, in which case ``y`` replaces them on the
    ``mos_scale`` range. Clips are read through ``clips`` (an id to frames
    mapping) or from ``media_root``.

    The defaults are desk-scale (higher learning rate, many epochs) rather
    than the 1e-5, single-epoch recipe meant for a pretrained 7B decoder.
    """

    def __init__(
        self,
        model_config: Optional[dict] = None,
        stages: Sequence[str] = DESK_STAGES,
        lr_max: float = 1e-3,
        stage1_epochs: float = 3.0,
        stage2_epochs: float = 40.0,
        batch_videos: int = 8,
        warmup_fraction: float = 0.03,
        mos_scale: tuple = (1.0, 5.0),
        media_root: Optional[str] = None,
        seed: int = 0,
    ):
        self.model_config = model_config
        self.stages = stages
        self.lr_max = lr_max
        self.stage1_epochs = stage1_epochs
        self.stage2_epochs = stage2_epochs
        self.batch_videos = batch_videos
        self.warmup_fraction = warmup_fraction
        self.mos_scale = mos_scale
        self.media_root = media_root
        self.seed = seed

    def _cache(self, config: ModelConfig, entries, clips: Optional[Mapping]) -> MediaCache:
        cache = getattr(self, "media_cache_", None)
        if cache is None or cache.config != config:
            cache = MediaCache(config, self.media_root)
        if clips is not None:
            for e in entries:
                if e.id in clips:
                    cache.put(e.media_ref, e.frame_rate, clips[e.id])
        return cache

    def fit(self, X, y=None, clips: Optional[Mapping] = None):
        entries = _check_entries(X)
        if y is not None:
            y = check_array_1d(y, "y")
            check_consistent_length(entries, y)
            lo, hi = self.mos_scale
            entries = [replace(e, mos=MosScore(float(v), lo, hi)) for e, v in zip(entries, y)]
        missing = [e.id for e in entries if e.mos is None]
        if missing:
            raise ValueError(f"entries without MOS cannot be used for fitting: {missing[:3]}")
        stage_ids = [StageId(s) for s in self.stages]

        pairs = build_corpus(
            entries, [DATA_STAGE[s] for s in stage_ids], seed=derive_seed(self.seed, "corpus")
        )
        texts = [p.system_prompt + " " + p.question + " " + p.answer for p in pairs]
        texts += [render_system_prompt("score", 1, 1), instruction_templates()["stage2_question"]]
        texts.append(DEFAULT_ANSWER_TEMPLATE)
        tokenizer = WordTokenizer.fit(texts)

        config = ModelConfig(**{**(self.model_config or {}), "vocab_size": len(tokenizer)})
        torch.manual_seed(derive_seed(self.seed, "init"))
        model = MiniVQAModel(config)
        cache = self._cache(config, entries, clips)

        by_stage = {s: [p for p in pairs if p.stage is DATA_STAGE[s]] for s in stage_ids}
        plan = CurriculumPlan(
            [(s, by_stage[s]) for s in stage_ids if by_stage[s]], seed=self.seed
        )
        common = dict(
            lr_max=self.lr_max, batch_videos=self.batch_videos, warmup_fraction=self.warmup_fraction
        )
        s1 = Hyperparams(epochs=self.stage1_epochs, **common)
        hps = {
            "default": Hyperparams(epochs=self.stage2_epochs, **common),
            StageId.S1_SPATIAL_IMAGE.value: s1,
            StageId.S1_MOTION_VIDEO.value: s1,
        }
        checkpoints = run_curriculum(plan, model, tokenizer, hps, media=media_loader(cache))
        name = "ugc_scorer" if "ugc_scorer" in checkpoints else "pretrained"
        self.checkpoint_ = checkpoints[name]
        self.checkpoints_ = checkpoints
        self.model_ = self.checkpoint_.model
        self.tokenizer_ = tokenizer
        self.media_cache_ = cache
        return self

    def predict(self, X, clips: Optional[Mapping] = None) -> np.ndarray:
        check_is_fitted(self, "model_")
        entries = _check_entries(X)
        cache = self._cache(self.model_.config, entries, clips)
        return np.array(
            [
                score_video(self.model_, self.tokenizer_, e, cache.get(e.media_ref, e.frame_rate)).value
                for e in entries
            ]
        )

    def score(self, X, y=None, sample_weight=None, clips: Optional[Mapping] = None) -> float:
        """Spearman correlation between predictions and MOS (or ``y``)."""
        entries = _check_entries(X)
        truth = check_array_1d(y, "y") if y is not None else [e.mos.value for e in entries]
        return srcc(self.predict(entries, clips=clips), truth)


class StallingFeatures(TransformerMixin, BaseEstimator):
    """Turns per-frame 0/1 stalling traces into fixed-width summary rows.

    Columns: event count, total stall seconds, stall ratio, initial
    buffering, tail gap, long-stall count.
    """

    feature_names = (
        "event_count",
        "total_stall_seconds",
        "stall_ratio",
        "initial_buffering",
        "tail_gap",
        "long_stall_count",
    )

    def __init__(self, frame_rate: float = 1.0, long_stall_seconds: float = 2.0):
        self.frame_rate = frame_rate
        self.long_stall_seconds = long_stall_seconds

    def _traces(self, X) -> list[StallingTrace]:
        if self.frame_rate <= 0:
            raise ValueError("frame_rate must be positive")
        out = []
        for row in X:
            if isinstance(row, StallingTrace):
                out.append(row)
            else:
                flags = check_array_1d(row, "trace", dtype=int)
                out.append(StallingTrace(tuple(int(v) for v in flags), self.frame_rate))
        if not out:
            raise ValueError("X must contain at least one trace")
        return out

    def fit(self, X, y=None):
        self._traces(X)
        self.n_features_out_ = len(self.feature_names)
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "n_features_out_")
        rows = []
        for trace in self._traces(X):
            s = summarize_stalling(trace, self.long_stall_seconds)
            rows.append(
                [
                    s.event_count,
                    float(sum(s.event_durations)),
                    s.stall_ratio,
                    s.initial_buffering,
                    s.tail_gap,
                    s.long_stall_count,
                ]
            )
        return np.asarray(rows, dtype=np.float64)

    def get_feature_names_out(self, input_features=None) -> np.ndarray:
        return np.asarray(self.feature_names, dtype=object)


def load_clip_dir(root: str | Path, entries: Sequence[VideoManifestEntry]) -> dict:
    """Read every entry's ``.npy`` frames under ``root`` into an id mapping."""
    root = Path(root)
    return {e.id: np.load(root / e.media_ref, allow_pickle=False) for e in entries}
