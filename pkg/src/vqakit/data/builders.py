"""Stage-1/2/3 instruction builders, sampling plan and system prompts."""

from __future__ import annotations

import logging
import random
from collections import Counter
from dataclasses import replace
from typing import Iterable, Sequence

import numpy as np

from ..quality import (
    LEVEL_ORDER,
    MOTION_LABELS,
    SPATIAL_LABELS,
    DistortionLabel,
    QualityLevel,
    encode_stalling_binary,
    mos_to_level,
    normalize_mos,
    summarize_stalling,
)
from .templates import instruction_templates, system_template
from .types import (
    InstructionPair,
    MediaRef,
    OverallDepiction,
    SamplingPlan,
    Stage,
    TaskTag,
    VideoKind,
    VideoManifestEntry,
)

logger = logging.getLogger(__name__)

# canonical label order; answers list labels in this order
_LABEL_ORDER = {label: i for i, label in enumerate(DistortionLabel)}


def fmt_num(x: float) -> str:
    """Compact decimal rendering used inside prompts (3.0 -> '3', 0.4 -> '0.4')."""
    return f"{round(float(x), 4):g}"


def entry_level(entry: VideoManifestEntry) -> QualityLevel:
    if entry.mos is None:
        raise ValueError(f"{entry.id}: entry has no MOS")
    return mos_to_level(normalize_mos(entry.mos))


def _largest_remainder(counts: Sequence[int], target: int) -> list[int]:
    total = sum(counts)
    exact = [c * target / total for c in counts]
    quotas = [int(np.floor(e)) for e in exact]
    short = target - sum(quotas)
    # ties broken by larger remainder, then larger population, then level order
    order = sorted(
        range(len(counts)), key=lambda i: (-(exact[i] - quotas[i]), -counts[i], i)
    )
    for i in order[:short]:
        quotas[i] += 1
    return quotas


def plan_sampling(
    manifest: Sequence[VideoManifestEntry], target_count: int, seed: int
) -> SamplingPlan:
    """Pick ``target_count`` entries with per-level quotas proportional to the
    manifest's own level histogram."""
    if not manifest:
        raise ValueError("cannot sample from an empty manifest")
    if target_count > len(manifest) or target_count < 0:
        raise ValueError(f"target_count {target_count} not in [0, {len(manifest)}]")
    by_level: dict[QualityLevel, list[VideoManifestEntry]] = {lv: [] for lv in LEVEL_ORDER}
    for entry in manifest:
        by_level[entry_level(entry)].append(entry)

    counts = [len(by_level[lv]) for lv in LEVEL_ORDER]
    quotas = _largest_remainder(counts, target_count)

    # clamp and hand any shortfall to levels with spare entries
    shortfall = 0
    for i, (q, c) in enumerate(zip(quotas, counts)):
        if q > c:
            logger.warning(
                "level %s quota %d exceeds %d available entries; clamping",
                LEVEL_ORDER[i].value, q, c,
            )
            shortfall += q - c
            quotas[i] = c
    while shortfall:
        spare = [i for i in range(5) if counts[i] > quotas[i]]
        spare.sort(key=lambda i: (-(counts[i] - quotas[i]), i))
        quotas[spare[0]] += 1
        shortfall -= 1

    rng = np.random.default_rng(seed)
    selected: list[str] = []
    per_level = {}
    for level, quota in zip(LEVEL_ORDER, quotas):
        pool = by_level[level]
        picks = sorted(rng.choice(len(pool), size=quota, replace=False)) if quota else []
        selected.extend(pool[i].id for i in picks)
        per_level[level] = quota
    return SamplingPlan(tuple(selected), per_level, seed)


def _medium(entry: VideoManifestEntry) -> str:
    return "image" if entry.kind is VideoKind.IMAGE else "video"


def _rng(seed: int, *keys) -> random.Random:
    return random.Random(":".join(map(str, (seed,) + keys)))


def _distortion_pair(entry, labels, seed, allowed, stage) -> InstructionPair:
    labels = frozenset(DistortionLabel(x) for x in labels)
    if not labels <= allowed:
        raise ValueError(f"labels {sorted(l.value for l in labels - allowed)} not allowed here")
    t = instruction_templates()
    medium = _medium(entry)
    options = sorted(allowed, key=_LABEL_ORDER.get)
    _rng(seed, entry.id, stage.value).shuffle(options)
    question = t["stage1_question"].format(
        medium=medium, options=", ".join(o.value for o in options)
    )
    if labels:
        names = ", ".join(l.value for l in sorted(labels, key=_LABEL_ORDER.get))
        answer = t["stage1_answer"].format(medium=medium, labels=names)
    else:
        answer = t["stage1_answer_none"].format(medium=medium)
    return InstructionPair(
        id=f"{entry.id}:{stage.value}:distortion",
        video_id=entry.id,
        stage=stage,
        task_tag=TaskTag.DISTORTION,
        system_prompt="",
        question=question,
        answer=answer,
        media=MediaRef.of(entry),
    )


def build_stage1_spatial_pair(
    entry: VideoManifestEntry, labels: Iterable[DistortionLabel], seed: int = 0
) -> InstructionPair:
    if entry.kind not in (VideoKind.IMAGE, VideoKind.UGC_VIDEO):
        raise ValueError("spatial distortion pairs need an image or UGC video")
    return _distortion_pair(entry, labels, seed, SPATIAL_LABELS, Stage.S1_SPATIAL)


def build_stage1_motion_pair(
    entry: VideoManifestEntry, labels: Iterable[DistortionLabel], seed: int = 0
) -> InstructionPair:
    if entry.kind is VideoKind.IMAGE:
        raise ValueError("motion distortion pairs need a video")
    return _distortion_pair(entry, labels, seed, MOTION_LABELS, Stage.S1_MOTION)


def level_answer(level: QualityLevel) -> str:
    return instruction_templates()["stage2_answer"].format(LEVEL=level.word)


def build_stage2_ugc_pair(entry: VideoManifestEntry) -> InstructionPair:
    level = entry_level(entry)
    return InstructionPair(
        id=f"{entry.id}:S2_ugc:level",
        video_id=entry.id,
        stage=Stage.S2_UGC,
        task_tag=TaskTag.LEVEL,
        system_prompt="",
        question=instruction_templates()["stage2_question"],
        answer=level_answer(level),
        media=MediaRef.of(entry),
    )


def stalling_text(entry: VideoManifestEntry, fmt: str) -> str:
    t = instruction_templates()
    if fmt == "binary":
        return t["stream_binary"].format(flags=encode_stalling_binary(entry.stalling))
    if fmt == "summary":
        s = summarize_stalling(entry.stalling)
        durations = ", ".join(fmt_num(d) for d in s.event_durations) or "none"
        return t["stream_summary"].format(
            count=s.event_count,
            durations=durations,
            ratio=fmt_num(s.stall_ratio),
            initial=fmt_num(s.initial_buffering),
            tail=fmt_num(s.tail_gap),
        )
    raise ValueError(f"unknown stalling format {fmt!r}")


def build_stage2_streaming_pair(entry: VideoManifestEntry, fmt: str = "summary") -> InstructionPair:
    if entry.kind is not VideoKind.STREAMING_VIDEO or entry.stalling is None:
        raise ValueError(f"{entry.id}: streaming pairs need a streaming entry with a stalling trace")
    level = entry_level(entry)
    question = stalling_text(entry, fmt) + " " + instruction_templates()["stage2_question"]
    return InstructionPair(
        id=f"{entry.id}:S2_stream:level:{fmt}",
        video_id=entry.id,
        stage=Stage.S2_STREAM,
        task_tag=TaskTag.LEVEL,
        system_prompt="",
        question=question,
        answer=level_answer(level),
        media=MediaRef.of(entry),
        stalling=entry.stalling,
    )


def _clause(item) -> str:
    where = f" in {item.location}" if item.location else ""
    return f"the {item.attribute.lower()}{where} is {item.degree.lower()} {item.temporal}".rstrip()


def render_reasons(depiction: OverallDepiction) -> str:
    """Render depiction items as justification sentences, keeping input order.

    Consecutive items of the same polarity share a sentence; a switch in
    polarity opens a new sentence with a contrast word.
    """
    sentences: list[list[str]] = []
    polarities: list[str] = []
    for item in depiction.items:
        if polarities and polarities[-1] == item.polarity:
            sentences[-1].append(_clause(item))
        else:
            sentences.append([_clause(item)])
            polarities.append(item.polarity)
    out = []
    for i, clauses in enumerate(sentences):
        body = ", and ".join(clauses)
        if i == 0:
            out.append(body[0].upper() + body[1:] + ".")
        else:
            out.append("However, " + body + ".")
    return " ".join(out)


def build_causal_pair(depiction: OverallDepiction, entry: VideoManifestEntry) -> InstructionPair:
    t = instruction_templates()
    answer = t["causal_answer"].format(
        LEVEL=depiction.reference_level.word, reasons=render_reasons(depiction)
    )
    return InstructionPair(
        id=f"{entry.id}:S3:causal",
        video_id=entry.id,
        stage=Stage.S3,
        task_tag=TaskTag.CAUSAL,
        system_prompt="",
        question=t["causal_question"],
        answer=answer,
        media=MediaRef.of(entry),
    )


def render_system_prompt(mode: str, duration: float | None, frame_rate: float | None) -> str:
    """Fill the mode template; [image]/[motion] stay as markers for the model."""
    text = system_template(mode)
    if "[length]" in text or "[num frames]" in text:
        if duration is None or frame_rate is None:
            raise ValueError(f"{mode} system prompt needs duration and frame rate")
        text = text.replace("[length]", fmt_num(duration))
        text = text.replace("[num frames]", str(max(1, round(duration * frame_rate))))
    return text


def attach_system_prompt(
    pair: InstructionPair, entry: VideoManifestEntry | None, mode: str = "train"
) -> InstructionPair:
    duration = entry.duration if entry is not None else None
    fps = entry.frame_rate if entry is not None else None
    if entry is not None and mode != "score" and not duration:
        raise ValueError(f"{entry.id}: missing duration")
    return replace(pair, system_prompt=render_system_prompt(mode, duration, fps))


def level_histogram(entries: Iterable[VideoManifestEntry]) -> Counter:
    return Counter(entry_level(e) for e in entries)
