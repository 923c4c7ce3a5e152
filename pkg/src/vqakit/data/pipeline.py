"""End-to-end corpus construction from a manifest."""

from __future__ import annotations

import logging
import random
from typing import Iterable, Sequence

from ..quality import MOTION_LABELS, SPATIAL_LABELS
from .builders import (
    attach_system_prompt,
    build_stage1_motion_pair,
    build_stage1_spatial_pair,
    build_stage2_streaming_pair,
    build_stage2_ugc_pair,
    plan_sampling,
)
from .extension import Extender, build_stage3_pairs
from .types import InstructionPair, Stage, VideoKind, VideoManifestEntry

logger = logging.getLogger(__name__)

ALL_STAGES = tuple(Stage)


def build_corpus(
    manifest: Sequence[VideoManifestEntry],
    stages: Iterable[Stage | str] = ALL_STAGES,
    seed: int = 0,
    extender: Extender | None = None,
    target_count: int | None = None,
    stream_binary_fraction: float = 0.5,
    system_mode: str = "train",
) -> list[InstructionPair]:
    """Run sampling, the per-stage builders and system-prompt attachment.

    Output order is stage order, then manifest order within a stage.
    """
    stages = [Stage(s) for s in stages]
    entries = list(manifest)
    if target_count is not None:
        plan = plan_sampling(entries, target_count, seed)
        keep = set(plan.selected_ids)
        entries = [e for e in entries if e.id in keep]

    pairs: list[InstructionPair] = []
    for stage in ALL_STAGES:
        if stage not in stages:
            continue
        for entry in entries:
            pairs.extend(_pairs_for(entry, stage, seed, extender, stream_binary_fraction))
    by_id = {e.id: e for e in entries}
    return [attach_system_prompt(p, by_id[p.video_id], system_mode) for p in pairs]


def _pairs_for(entry, stage, seed, extender, stream_binary_fraction):
    kind = entry.kind
    if stage is Stage.S1_SPATIAL:
        if kind in (VideoKind.IMAGE, VideoKind.UGC_VIDEO):
            return [build_stage1_spatial_pair(entry, entry.distortions & SPATIAL_LABELS, seed)]
    elif stage is Stage.S1_MOTION:
        if kind is VideoKind.UGC_VIDEO:
            return [build_stage1_motion_pair(entry, entry.distortions & MOTION_LABELS, seed)]
    elif stage is Stage.S2_UGC:
        if kind is VideoKind.UGC_VIDEO and entry.mos is not None:
            return [build_stage2_ugc_pair(entry)]
    elif stage is Stage.S2_STREAM:
        if kind is VideoKind.STREAMING_VIDEO and entry.mos is not None:
            rng = random.Random(f"{seed}:{entry.id}:stream-format")
            fmt = "binary" if rng.random() < stream_binary_fraction else "summary"
            return [build_stage2_streaming_pair(entry, fmt)]
    elif stage is Stage.S3:
        out = []
        for annotation in entry.annotations:
            out.extend(build_stage3_pairs(entry, annotation, extender))
        return out
    return []
