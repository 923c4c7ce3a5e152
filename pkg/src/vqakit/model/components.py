"""Keyframe encoder, dual-rate motion extractor, projectors, motion
positions and the visual/motion/text interleaver."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import torch
from torch import nn

from .config import LAYOUTS, ModelConfig


@dataclass
class VisualTokenSeq:
    chunks: list[torch.Tensor]  # one (tokens_per_keyframe, width) matrix per keyframe

    def __post_init__(self):
        shapes = {tuple(c.shape) for c in self.chunks}
        if len(shapes) > 1:
            raise ValueError(f"visual chunks have mixed shapes {shapes}")

    def __len__(self) -> int:
        return len(self.chunks)

    @property
    def n_tokens(self) -> int:
        return sum(c.shape[0] for c in self.chunks)


@dataclass
class MotionTokenSeq:
    tokens: torch.Tensor  # (n_sampled_frames, width)
    positions_applied: bool = False

    def __len__(self) -> int:
        return self.tokens.shape[0]


@dataclass
class Span:
    kind: str  # "text" | "visual" | "motion"
    index: int
    start: int
    length: int


@dataclass
class InterleavedSequence:
    spans: list[Span]
    embeddings: torch.Tensor  # (total_length, embed_dim)

    def __len__(self) -> int:
        return self.embeddings.shape[0]

    def order(self) -> list[tuple[str, int]]:
        return [(s.kind, s.index) for s in self.spans]


def _grid(n_tokens: int) -> tuple[int, int]:
    h = int(math.isqrt(n_tokens))
    while n_tokens % h:
        h -= 1
    return h, n_tokens // h


# fixed pixel normalization applied by both encoders
PIXEL_MEAN = 0.5
PIXEL_STD = 0.25


class KeyframeEncoder(nn.Module):
    """Small strided conv patch encoder; each keyframe is encoded alone."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.grid = _grid(config.vision_tokens_per_keyframe)
        self.conv = nn.Sequential(
            nn.Conv2d(3, 32, 3, stride=2, padding=1),
            nn.GELU(),
            nn.Conv2d(32, config.vision_dim, 3, stride=2, padding=1),
            nn.GELU(),
        )
        self.pool = nn.AdaptiveAvgPool2d(self.grid)

    def forward(self, keyframes: torch.Tensor) -> torch.Tensor:
        # (K, 3, R, R) -> (K, tokens, vision_dim)
        x = self.pool(self.conv((keyframes - PIXEL_MEAN) / PIXEL_STD))
        return x.flatten(2).transpose(1, 2)


class MotionExtractor(nn.Module):
    """Dual-rate temporal conv stack; only the fast path is returned.

    The fast path samples every ``tau // alpha`` frames and keeps its temporal
    length through the convolutions, then each frame's feature map is pooled
    spatially to a single token.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.stride = config.fast_stride
        self.slow_stride = config.tau
        self.fast = nn.Sequential(
            nn.Conv3d(3, 16, (3, 5, 5), stride=(1, 2, 2), padding=(1, 2, 2)),
            nn.GELU(),
            nn.Conv3d(16, config.motion_dim, (3, 3, 3), stride=(1, 2, 2), padding=1),
            nn.GELU(),
        )
        self.slow = None
        if config.use_slow_path:
            self.slow = nn.Sequential(
                nn.Conv3d(3, 32, (1, 5, 5), stride=(1, 2, 2), padding=(0, 2, 2)),
                nn.GELU(),
            )
        self.last_slow_features: torch.Tensor | None = None

    def forward(self, frames: torch.Tensor) -> torch.Tensor:
        # (T, 3, r, r) -> (ceil(T / stride), motion_dim)
        if frames.shape[0] < self.stride:
            raise ValueError(
                f"{frames.shape[0]} frames is fewer than the fast-path stride {self.stride}"
            )
        frames = (frames - PIXEL_MEAN) / PIXEL_STD
        fast_in = frames[:: self.stride].transpose(0, 1).unsqueeze(0)  # (1, 3, T', r, r)
        feats = self.fast(fast_in)  # (1, C, T', h, w)
        tokens = feats.mean(dim=(3, 4))[0].transpose(0, 1)
        if self.slow is not None:
            slow_in = frames[:: self.slow_stride].transpose(0, 1).unsqueeze(0)
            self.last_slow_features = self.slow(slow_in).detach()
        return tokens


class Projector(nn.Module):
    """Two affine layers with a GELU in between."""

    def __init__(self, in_dim: int, out_dim: int):
        super().__init__()
        self.in_dim = in_dim
        self.fc1 = nn.Linear(in_dim, out_dim)
        self.act = nn.GELU()
        self.fc2 = nn.Linear(out_dim, out_dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] != self.in_dim:
            raise ValueError(f"projector expects width {self.in_dim}, got {x.shape[-1]}")
        return self.fc2(self.act(self.fc1(x)))


class MotionPositions(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.table = nn.Parameter(torch.randn(config.max_motion_positions, config.embed_dim) * 0.02)

    def forward(self, seq: MotionTokenSeq) -> MotionTokenSeq:
        return add_motion_positions(seq, self.table)


def encode_keyframes(encoder: KeyframeEncoder, keyframes: torch.Tensor) -> VisualTokenSeq:
    if keyframes.ndim != 4 or keyframes.shape[0] == 0:
        raise ValueError("need a (K>=1, 3, H, W) keyframe batch")
    tokens = encoder(keyframes)
    return VisualTokenSeq(list(tokens.unbind(0)))


def extract_motion_tokens(extractor: MotionExtractor, frames: torch.Tensor) -> MotionTokenSeq:
    if frames.ndim != 4 or frames.shape[0] == 0:
        raise ValueError("need a (T>=1, 3, H, W) frame batch")
    return MotionTokenSeq(extractor(frames))


def project_vision(projector: Projector, seq: VisualTokenSeq) -> VisualTokenSeq:
    return VisualTokenSeq([projector(c) for c in seq.chunks])


def project_motion(projector: Projector, seq: MotionTokenSeq) -> MotionTokenSeq:
    return replace(seq, tokens=projector(seq.tokens))


def add_motion_positions(seq: MotionTokenSeq, table: torch.Tensor) -> MotionTokenSeq:
    if seq.positions_applied:
        raise ValueError("motion positions were already applied")
    n = seq.tokens.shape[0]
    if n > table.shape[0]:
        raise ValueError(f"{n} motion tokens overflow a {table.shape[0]}-entry position table")
    return MotionTokenSeq(seq.tokens + table[:n], positions_applied=True)


def partition_sizes(n_tokens: int, n_chunks: int) -> list[int]:
    """Equal contiguous chunks; the remainder goes to the last one."""
    base = n_tokens // n_chunks
    sizes = [base] * n_chunks
    sizes[-1] += n_tokens - base * n_chunks
    return sizes


def interleave(
    visual: VisualTokenSeq | None,
    motion: MotionTokenSeq | None,
    text_spans: Sequence[torch.Tensor],
    layout: str = "per_keyframe",
    expects_media: bool = True,
) -> InterleavedSequence:
    """Compose ``prefix, media, suffix`` into one embedding matrix.

    ``per_keyframe`` emits V1 M1 V2 M2 ... Vn Mn; ``block`` emits all visual
    chunks then all motion tokens.
    """
    if layout not in LAYOUTS:
        raise ValueError(f"unknown layout {layout!r}")
    if len(text_spans) != 2:
        raise ValueError("text_spans must be (prefix, suffix)")
    visual_chunks = list(visual.chunks) if visual is not None else []
    motion_tokens = motion.tokens if motion is not None and len(motion) else None
    if motion is not None and len(motion) and not motion.positions_applied:
        raise ValueError("apply motion positions before interleaving")
    if expects_media and not visual_chunks and motion_tokens is None:
        raise ValueError("media placeholders present but no visual or motion tokens")

    pieces: list[tuple[str, int, torch.Tensor]] = [("text", 0, text_spans[0])]
    if layout == "per_keyframe" and visual_chunks:
        sizes = (
            partition_sizes(motion_tokens.shape[0], len(visual_chunks))
            if motion_tokens is not None
            else [0] * len(visual_chunks)
        )
        offset = 0
        for i, (chunk, size) in enumerate(zip(visual_chunks, sizes)):
            pieces.append(("visual", i, chunk))
            if size:
                pieces.append(("motion", i, motion_tokens[offset:offset + size]))
            offset += size
    else:
        for i, chunk in enumerate(visual_chunks):
            pieces.append(("visual", i, chunk))
        if motion_tokens is not None:
            pieces.append(("motion", 0, motion_tokens))
    pieces.append(("text", 1, text_spans[1]))

    spans, mats, pos = [], [], 0
    for kind, idx, mat in pieces:
        if mat.shape[0] == 0:
            continue
        spans.append(Span(kind, idx, pos, mat.shape[0]))
        mats.append(mat)
        pos += mat.shape[0]
    if not mats:
        raise ValueError("nothing to interleave: every span is empty")
    return InterleavedSequence(spans, torch.cat(mats, dim=0))
