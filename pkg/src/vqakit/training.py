"""Staged curriculum: freeze masks, the warmup-cosine schedule, the stage
trainer and the scorer/assistant checkpoint lineage."""

from __future__ import annotations

import copy
import enum
import hashlib
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
import torch

from .data.types import InstructionPair, Stage
from .model.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .model.lm import PARAMETER_GROUPS, MiniVQAModel, generation_loss
from .model.media import MediaCache, VideoTensors
from .model.tokenizer import WordTokenizer
from .utils.seeding import derive_seed

logger = logging.getLogger(__name__)


class StageId(str, enum.Enum):
    S1_SPATIAL_IMAGE = "S1_spatial_image"
    S1_MOTION_VIDEO = "S1_motion_video"
    S2_UGC = "S2_ugc"
    S2_STREAM = "S2_stream"
    S3 = "S3"


# Corpus stage tag each training stage consumes.
DATA_STAGE = {
    StageId.S1_SPATIAL_IMAGE: Stage.S1_SPATIAL,
    StageId.S1_MOTION_VIDEO: Stage.S1_MOTION,
    StageId.S2_UGC: Stage.S2_UGC,
    StageId.S2_STREAM: Stage.S2_STREAM,
    StageId.S3: Stage.S3,
}

# Position in the curriculum; S2_stream and S3 are sibling branches.
_RANK = {
    StageId.S1_SPATIAL_IMAGE: 0,
    StageId.S1_MOTION_VIDEO: 1,
    StageId.S2_UGC: 2,
    StageId.S2_STREAM: 3,
    StageId.S3: 3,
}

MIXED_STAGE_NAME = "S2_ugc+S3"


@dataclass(frozen=True)
class FreezeMask:
    trainable_groups: frozenset

    def __post_init__(self):
        groups = frozenset(self.trainable_groups)
        object.__setattr__(self, "trainable_groups", groups)
        if not groups:
            raise ValueError("a freeze mask must leave at least one group trainable")
        unknown = groups - set(PARAMETER_GROUPS)
        if unknown:
            raise ValueError(f"unknown parameter groups {sorted(unknown)}")

    def allows(self, group: str) -> bool:
        return group in self.trainable_groups


def freeze_mask_for(stage: StageId | str) -> FreezeMask:
    stage = StageId(stage)
    if stage is StageId.S1_SPATIAL_IMAGE:
        return FreezeMask(frozenset({"vision_encoder", "vision_projector"}))
    if stage is StageId.S1_MOTION_VIDEO:
        return FreezeMask(frozenset({"motion_extractor", "motion_projector", "motion_positions"}))
    return FreezeMask(frozenset(PARAMETER_GROUPS))


def apply_freeze(model: MiniVQAModel, mask: FreezeMask) -> list[torch.nn.Parameter]:
    """Set ``requires_grad`` per group and return the trainable parameters."""
    present = set(model.groups())
    if not mask.trainable_groups & present:
        raise ValueError(
            f"none of the trainable groups {sorted(mask.trainable_groups)} exist in this model"
        )
    trainable = []
    for name, param in model.named_parameters():
        on = mask.allows(model.group_of(name))
        param.requires_grad_(on)
        if on:
            trainable.append(param)
    return trainable


@dataclass
class Hyperparams:
    lr_max: float = 1e-5
    schedule: str = "cosine"
    warmup_fraction: float = 0.03
    weight_decay: float = 0.0
    batch_videos: int = 8
    grad_accum: int = 1
    epochs: float = 1.0
    optimizer: str = "adamw"
    # overrides the epoch-derived step count when set
    max_steps: Optional[int] = None

    def __post_init__(self):
        if self.schedule != "cosine":
            raise ValueError("only the cosine schedule is supported")
        if self.optimizer != "adamw":
            raise ValueError("only the adamw optimizer is supported")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ValueError("warmup_fraction must lie in [0, 1)")
        if self.lr_max <= 0 or self.weight_decay < 0:
            raise ValueError("lr_max must be positive and weight_decay non-negative")
        if self.batch_videos < 1 or self.grad_accum < 1:
            raise ValueError("batch_videos and grad_accum must be >= 1")
        if self.epochs <= 0:
            raise ValueError("epochs must be positive")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")

    def total_steps(self, n_records: int) -> int:
        if self.max_steps is not None:
            return self.max_steps
        micro = math.ceil(self.epochs * n_records / self.batch_videos)
        return max(1, math.ceil(micro / self.grad_accum))

    def warmup_steps(self, total: int) -> int:
        return math.ceil(self.warmup_fraction * total)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparams":
        names = {f.name for f in fields(cls)}
        extra = set(d) - names
        if extra:
            raise ValueError(f"unknown hyperparameters {sorted(extra)}")
        return cls(**d)


def lr_at(step: int, total: int, hp: Hyperparams) -> float:
    """Linear warmup from 0 to ``lr_max``, then cosine decay to 0."""
    if step < 0 or step >= max(total, 1) + 1:
        raise ValueError(f"step {step} outside [0, {total}]")
    warmup = hp.warmup_steps(total)
    if step < warmup:
        return hp.lr_max * step / warmup
    span = max(1, total - warmup)
    progress = min(1.0, (step - warmup) / span)
    return hp.lr_max * 0.5 * (1.0 + math.cos(math.pi * progress))


MediaFn = Callable[[InstructionPair], Optional[VideoTensors]]


def media_loader(cache: MediaCache) -> MediaFn:
    def load(pair: InstructionPair) -> VideoTensors | None:
        if pair.media.frames_dir is None:
            return None
        return cache.get(pair.media.frames_dir, pair.media.fps)

    return load


@dataclass
class StageResult:
    model: MiniVQAModel
    metrics: list[dict] = field(default_factory=list)

    @property
    def losses(self) -> list[float]:
        return [m["loss"] for m in self.metrics]


def _append_jsonl(path, rows: Iterable[dict]) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def train_stage(
    model: MiniVQAModel,
    tokenizer: WordTokenizer,
    corpus: Sequence[InstructionPair],
    stage: StageId | str,
    hyperparams: Hyperparams | None = None,
    seed: int = 0,
    media: MediaFn | None = None,
    accept: Iterable[Stage] | None = None,
    stage_name: str | None = None,
    metrics_path: str | os.PathLike | None = None,
) -> StageResult:
    """Train ``model`` in place on ``corpus`` under the stage's freeze mask.

    The loss covers answer tokens only. ``accept`` widens the corpus stage
    tags allowed (used by the mixed S2+S3 stage).
    """
    stage = StageId(stage)
    hp = hyperparams or Hyperparams()
    records = list(corpus)
    if not records:
        raise ValueError("cannot train on an empty corpus")
    allowed = set(accept) if accept is not None else {DATA_STAGE[stage]}
    wrong = [p.id for p in records if p.stage not in allowed]
    if wrong:
        raise ValueError(
            f"{len(wrong)} records are not tagged for stage {stage.value} (first: {wrong[0]})"
        )
    name = stage_name or stage.value
    media = media or (lambda pair: None)

    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    params = apply_freeze(model, freeze_mask_for(stage))
    opt = torch.optim.AdamW(params, lr=hp.lr_max, weight_decay=hp.weight_decay)
    total = hp.total_steps(len(records))

    order: list[int] = []

    def next_batch() -> list[InstructionPair]:
        batch = []
        while len(batch) < min(hp.batch_videos, len(records)):
            if not order:
                order.extend(rng.permutation(len(records)).tolist())
            batch.append(records[order.pop(0)])
        return batch

    model.train()
    metrics = []
    for step in range(total):
        lr = lr_at(step, total, hp)
        for group in opt.param_groups:
            group["lr"] = lr
        opt.zero_grad(set_to_none=True)
        step_loss = 0.0
        for _ in range(hp.grad_accum):
            examples = [
                model.build_example(tokenizer, p.system_prompt, p.question, media(p), p.answer)
                for p in next_batch()
            ]
            logits, targets = model.forward_examples(examples)
            loss = generation_loss(logits, targets, targets != -100) / hp.grad_accum
            loss.backward()
            step_loss += float(loss.detach())
        opt.step()
        row = {"step": step, "stage": name, "lr": lr, "loss": step_loss}
        metrics.append(row)
        if metrics_path is not None:
            _append_jsonl(metrics_path, [row])
        if step % 50 == 0 or step == total - 1:
            logger.info("stage %s step %d/%d lr %.3g loss %.4f", name, step, total, lr, step_loss)
    for param in model.parameters():
        param.requires_grad_(True)
    return StageResult(model, metrics)


def mix_datasets(
    s2_corpus: Sequence[InstructionPair], s3_corpus: Sequence[InstructionPair], seed: int
) -> list[InstructionPair]:
    """Seeded uniform shuffle of the concatenated Stage-2 and Stage-3 records."""
    if not s2_corpus or not s3_corpus:
        raise ValueError("both corpora must be non-empty to mix")
    combined = list(s2_corpus) + list(s3_corpus)
    perm = np.random.default_rng(seed).permutation(len(combined))
    return [combined[i] for i in perm]


@dataclass
class CurriculumPlan:
    stages: list  # of (StageId, corpus)
    combine: str = "sequential"
    seed: int = 0

    def __post_init__(self):
        self.stages = [(StageId(s), c) for s, c in self.stages]
        if self.combine not in ("sequential", "mixed"):
            raise ValueError("combine must be 'sequential' or 'mixed'")
        ids = [s for s, _ in self.stages]
        if not ids:
            raise ValueError("a plan needs at least one stage")
        if len(set(ids)) != len(ids):
            raise ValueError("each stage may appear at most once")
        ranks = [_RANK[s] for s in ids]
        if ranks != sorted(ranks):
            raise ValueError(
                "plan stages are out of curriculum order: " + " -> ".join(s.value for s in ids)
            )
        branches = {StageId.S2_STREAM, StageId.S3} & set(ids)
        if branches and StageId.S2_UGC not in ids:
            raise ValueError("S2_stream and S3 branch from the UGC scorer, so S2_ugc is required")
        if self.combine == "mixed":
            if not {StageId.S2_UGC, StageId.S3} <= set(ids):
                raise ValueError("a mixed plan needs both S2_ugc and S3 corpora")
            if StageId.S2_STREAM in ids:
                raise ValueError("mixing applies only to S2_ugc and S3 data")

    def corpus(self, stage: StageId) -> list | None:
        for s, c in self.stages:
            if s is stage:
                return c
        return None

    def has(self, stage: StageId) -> bool:
        return self.corpus(stage) is not None


def _snapshot(model: MiniVQAModel) -> MiniVQAModel:
    return copy.deepcopy(model)


def run_curriculum(
    plan: CurriculumPlan,
    model: MiniVQAModel,
    tokenizer: WordTokenizer,
    hyperparams: Hyperparams | dict | None = None,
    media: MediaFn | None = None,
    out_dir: str | os.PathLike | None = None,
    config_hash: str | None = None,
) -> dict[str, Checkpoint]:
    """Run the plan and return the named checkpoints with lineage metadata.

    ``pretrained`` is the model after Stage 1 (the initial weights when the
    plan has no Stage-1 phase). ``streaming_scorer`` and ``assistant`` both
    branch from ``ugc_scorer``. In a mixed plan the S2+S3 stage replaces the
    sequential pair and produces ``assistant`` directly from ``pretrained``.

    ``hyperparams`` may be a single ``Hyperparams`` or a dict keyed by stage
    name. With ``out_dir`` set, checkpoints already on disk whose run hash
    matches are loaded instead of retrained.
    """

    def hp_for(name: str) -> Hyperparams:
        if isinstance(hyperparams, dict):
            return hyperparams.get(name) or hyperparams.get("default") or Hyperparams()
        return hyperparams or Hyperparams()

    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    metrics_path = out / "metrics.jsonl" if out is not None else None
    checkpoints: dict[str, Checkpoint] = {}

    def finish(name: str, m: MiniVQAModel, parent: str | None, stages: list[str]) -> Checkpoint:
        meta = {
            "name": name,
            "parent": parent,
            "stages": stages,
            "seed": plan.seed,
            "combine": plan.combine,
            "config_hash": config_hash,
        }
        ckpt = Checkpoint(_snapshot(m), tokenizer, meta)
        checkpoints[name] = ckpt
        if out is not None:
            save_checkpoint(ckpt, out / f"{name}.pt")
        return ckpt

    def resume(name: str) -> Checkpoint | None:
        if out is None or not (out / f"{name}.pt").exists():
            return None
        ckpt = load_checkpoint(out / f"{name}.pt")
        if ckpt.metadata.get("config_hash") != config_hash:
            raise ValueError(f"{name}.pt was produced by a different run configuration")
        logger.info("resuming from existing checkpoint %s", name)
        checkpoints[name] = ckpt
        return ckpt

    def run(m: MiniVQAModel, stage: StageId, corpus, accept=None, name=None) -> MiniVQAModel:
        stage_name = name or stage.value
        train_stage(
            m,
            tokenizer,
            corpus,
            stage,
            hp_for(stage_name),
            seed=derive_seed(plan.seed, "stage", stage_name),
            media=media,
            accept=accept,
            stage_name=stage_name,
            metrics_path=metrics_path,
        )
        return m

    # Stage 1
    s1 = [s for s in (StageId.S1_SPATIAL_IMAGE, StageId.S1_MOTION_VIDEO) if plan.has(s)]
    done = resume("pretrained")
    if done is None:
        for s in s1:
            model = run(model, s, plan.corpus(s))
        done = finish("pretrained", model, None, [s.value for s in s1])
    base = done.model

    if plan.combine == "mixed":
        done = resume("assistant")
        if done is None:
            seed = derive_seed(plan.seed, "mix")
            mixed = mix_datasets(plan.corpus(StageId.S2_UGC), plan.corpus(StageId.S3), seed)
            m = run(
                _snapshot(base),
                StageId.S3,
                mixed,
                accept={Stage.S2_UGC, Stage.S3},
                name=MIXED_STAGE_NAME,
            )
            finish("assistant", m, "pretrained", [MIXED_STAGE_NAME])
        return checkpoints

    if not plan.has(StageId.S2_UGC):
        return checkpoints
    done = resume("ugc_scorer")
    if done is None:
        m = run(_snapshot(base), StageId.S2_UGC, plan.corpus(StageId.S2_UGC))
        done = finish("ugc_scorer", m, "pretrained", [StageId.S2_UGC.value])
    scorer = done.model

    for stage, name in ((StageId.S2_STREAM, "streaming_scorer"), (StageId.S3, "assistant")):
        if plan.has(stage) and resume(name) is None:
            m = run(_snapshot(scorer), stage, plan.corpus(stage))
            finish(name, m, "ugc_scorer", [stage.value])
    return checkpoints


def config_hash(config: dict) -> str:
    """Stable hash of a run configuration (canonical JSON, sorted keys)."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def check_resume(out_dir: str | os.PathLike, config: dict) -> str:
    """Record the run config in ``out_dir`` or refuse if a different one is there."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    digest = config_hash(config)
    marker = out / "run_config.json"
    if marker.exists():
        previous = json.loads(marker.read_text(encoding="utf-8"))
        if previous.get("config_hash") != digest:
            raise ValueError(
                f"{out} holds a run with config hash {previous.get('config_hash')}, "
                f"refusing to resume with {digest}"
            )
    else:
        marker.write_text(
            json.dumps({"config_hash": digest, "config": config}, indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
    return digest
