"""Clip loading and the keyframe / dense-frame preprocessing."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .config import ModelConfig


@dataclass
class VideoTensors:
    keyframes: torch.Tensor  # (K, 3, R, R), values in [0, 1]
    frames: torch.Tensor  # (T, 3, r, r)


def keyframe_indices(n_frames: int, fps: float) -> list[int]:
    """One frame per second of playback."""
    n_seconds = max(1, math.ceil(n_frames / fps - 1e-9))
    return [min(n_frames - 1, int(math.floor(k * fps))) for k in range(n_seconds)]


def _resize(x: torch.Tensor, size: int) -> torch.Tensor:
    if x.shape[-1] == size and x.shape[-2] == size:
        return x
    return F.interpolate(x, size=(size, size), mode="bilinear", align_corners=False)


def preprocess_clip(frames: np.ndarray, fps: float, config: ModelConfig) -> VideoTensors:
    """``frames``: (T, H, W, 3) uint8 or float in [0, 1]."""
    arr = np.asarray(frames)
    if arr.ndim == 3:  # single image
        arr = arr[None]
    if arr.dtype == np.uint8:
        t = torch.from_numpy(arr.astype(np.float32) / 255.0)
    else:
        t = torch.from_numpy(arr.astype(np.float32))
    t = t.permute(0, 3, 1, 2).contiguous()
    idx = keyframe_indices(t.shape[0], fps)
    keyframes = _resize(t[idx], config.keyframe_resolution)
    dense = _resize(t, config.motion_frame_resolution)
    return VideoTensors(keyframes, dense)


def load_frames(path: str | os.PathLike) -> np.ndarray:
    p = Path(path)
    if p.is_dir():
        p = p / "frames.npy"
    return np.load(p, allow_pickle=False)


class MediaCache:
    """Loads and preprocesses clips once per (path, fps)."""

    def __init__(self, config: ModelConfig, root: str | os.PathLike | None = None):
        self.config = config
        self.root = Path(root) if root is not None else None
        self._cache: dict = {}

    def resolve(self, ref: str) -> Path:
        p = Path(ref)
        if not p.is_absolute() and self.root is not None:
            p = self.root / p
        return p

    def get(self, ref: str, fps: float) -> VideoTensors:
        key = (ref, fps)
        if key not in self._cache:
            self._cache[key] = preprocess_clip(load_frames(self.resolve(ref)), fps, self.config)
        return self._cache[key]

    def put(self, ref: str, fps: float, frames: np.ndarray) -> None:
        self._cache[(ref, fps)] = preprocess_clip(frames, fps, self.config)
