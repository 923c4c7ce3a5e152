"""Procedural test clips with controlled distortions and a proxy MOS.

Each clip is a moving grating plus a drifting blob. A per-clip magnitude
``m`` in [0, 1] drives every distortion applied to it, and the proxy MOS is
the fixed decreasing map ``scale_max - (scale_max - scale_min) * m``.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.ndimage import gaussian_filter

from ..quality import DistortionLabel, MosScore, StallingTrace, mos_to_level, normalize_mos
from .corpus import write_manifest
from .types import DepictionItem, OverallDepiction, VideoKind, VideoManifestEntry

DISTORTION_KINDS = ("noise", "blur", "brightness", "stutter")


@dataclass
class SyntheticConfig:
    size: int = 32
    fps: float = 8.0
    duration: float = 4.0
    noise_max: float = 0.3
    blur_max: float = 2.5
    brightness_max: float = 0.45
    stutter_max: float = 0.75
    kinds: tuple[str, ...] = DISTORTION_KINDS
    kind_probability: float = 1.0
    # fixed magnitude for every clip; None draws U(0, 1) per clip
    magnitude: Optional[float] = None
    # labels are only emitted for clearly visible distortions
    label_threshold: float = 0.25
    streaming_fraction: float = 0.0
    scale: tuple[float, float] = (1.0, 5.0)
    source_dataset: str = "synthetic"
    # attach one overall depiction per clip so Stage-3 data can be built
    with_depictions: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def proxy_mos(magnitude: float, scale=(1.0, 5.0)) -> float:
    lo, hi = scale
    return hi - (hi - lo) * float(np.clip(magnitude, 0.0, 1.0))


_DEPICTION_ATTRIBUTES = {
    DistortionLabel.SPATIAL_BLUR: "sharpness",
    DistortionLabel.NOISE: "noise",
    DistortionLabel.OVEREXPOSURE: "exposure",
    DistortionLabel.UNDEREXPOSURE: "exposure",
    DistortionLabel.STUTTERING: "fluency",
}


def _severity(m: float) -> str:
    if m < 0.5:
        return "mild"
    if m < 0.75:
        return "relatively severe"
    return "very severe"


def synthetic_depiction(labels, magnitude: float, mos: MosScore) -> OverallDepiction:
    """A templated overall depiction consistent with the injected distortions."""
    level = mos_to_level(normalize_mos(mos))
    items = []
    for label in sorted(labels, key=lambda lab: lab.value):
        attribute = _DEPICTION_ATTRIBUTES.get(label)
        if attribute is not None:
            items.append(
                DepictionItem(attribute, _severity(magnitude), "throughout the entire playback")
            )
    if not items:
        degree = "excellent" if magnitude < 0.1 else "good"
        items.append(DepictionItem("clarity", degree, "throughout the entire playback"))
    sentences = [
        f"The {it.attribute} of the video is {it.degree} {it.temporal}." for it in items
    ]
    sentences.append(f"Overall, the quality of the video is {level.word}.")
    return OverallDepiction(tuple(items), " ".join(sentences), level)


def _clean_clip(rng: np.random.Generator, n_frames: int, size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / size
    freq = rng.uniform(1.5, 4.0)
    theta = rng.uniform(0, np.pi)
    speed = rng.uniform(0.02, 0.08)
    colors = rng.uniform(0.25, 0.75, size=(2, 3))
    blob_c = rng.uniform(0.2, 0.8, size=2)
    blob_v = rng.uniform(-0.03, 0.03, size=2)
    frames = np.empty((n_frames, size, size, 3))
    for t in range(n_frames):
        phase = 2 * np.pi * (freq * (np.cos(theta) * xx + np.sin(theta) * yy) + speed * t * freq)
        g = 0.5 + 0.5 * np.sin(phase)
        img = g[..., None] * colors[0] + (1 - g[..., None]) * colors[1]
        cy, cx = (blob_c + blob_v * t) % 1.0
        blob = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / 0.01)
        img = img * (1 - 0.6 * blob[..., None]) + 0.6 * blob[..., None]
        frames[t] = img
    return frames


def _stall_trace(rng: np.random.Generator, n_frames: int, fps: float) -> StallingTrace:
    flags = np.zeros(n_frames, dtype=int)
    for _ in range(rng.integers(0, 3)):
        start = int(rng.integers(0, n_frames))
        length = int(rng.integers(1, max(2, n_frames // 4)))
        flags[start:start + length] = 1
    return StallingTrace(tuple(int(f) for f in flags), fps)


def _apply(frames, kinds, m, cfg, rng):
    labels: set[DistortionLabel] = set()
    visible = m >= cfg.label_threshold
    out = frames.copy()
    if "blur" in kinds and m > 0:
        sigma = m * cfg.blur_max
        out = np.stack([gaussian_filter(f, sigma=(sigma, sigma, 0)) for f in out])
        if visible:
            labels.add(DistortionLabel.SPATIAL_BLUR)
    if "brightness" in kinds and m > 0:
        sign = 1.0 if rng.random() < 0.5 else -1.0
        out = out + sign * m * cfg.brightness_max
        if visible:
            labels.add(DistortionLabel.OVEREXPOSURE if sign > 0 else DistortionLabel.UNDEREXPOSURE)
    if "noise" in kinds and m > 0:
        out = out + rng.normal(0.0, m * cfg.noise_max, size=out.shape)
        if visible:
            labels.add(DistortionLabel.NOISE)
    if "stutter" in kinds and m > 0:
        n = len(out)
        n_rep = int(round(m * cfg.stutter_max * (n - 1)))
        if n_rep:
            idx = np.sort(rng.choice(np.arange(1, n), size=n_rep, replace=False))
            for i in idx:
                out[i] = out[i - 1]
            if visible:
                labels.add(DistortionLabel.STUTTERING)
    return out, labels


@dataclass
class SyntheticCorpus:
    manifest: list[VideoManifestEntry]
    clips: dict[str, np.ndarray] = field(repr=False)
    magnitudes: dict[str, float] = field(default_factory=dict)
    config: Optional[SyntheticConfig] = None


def generate_synthetic_corpus(
    seed: int,
    n_videos: int,
    config: SyntheticConfig | None = None,
    out_dir: str | os.PathLike | None = None,
) -> SyntheticCorpus:
    """Build ``n_videos`` clips; optionally write ``media/*.npy`` + ``manifest.jsonl``."""
    if n_videos < 1:
        raise ValueError("n_videos must be >= 1")
    cfg = config or SyntheticConfig()
    rng = np.random.default_rng(seed)
    n_frames = max(1, int(round(cfg.duration * cfg.fps)))
    entries, clips, mags = [], {}, {}
    for i in range(n_videos):
        vid = f"syn{i:05d}"
        clip_rng = np.random.default_rng([seed, i])
        frames = _clean_clip(clip_rng, n_frames, cfg.size)
        m = float(rng.uniform(0.0, 1.0)) if cfg.magnitude is None else float(cfg.magnitude)
        kinds = [k for k in cfg.kinds if rng.random() < cfg.kind_probability]
        if not kinds:
            kinds = [cfg.kinds[int(rng.integers(len(cfg.kinds)))]]
        if cfg.magnitude is not None and cfg.magnitude >= 1.0:
            kinds = list(cfg.kinds)
        frames, labels = _apply(frames, kinds, m, cfg, clip_rng)

        kind = VideoKind.UGC_VIDEO
        stalling = None
        magnitude = m
        if rng.random() < cfg.streaming_fraction:
            kind = VideoKind.STREAMING_VIDEO
            stalling = _stall_trace(clip_rng, n_frames, cfg.fps)
            for t in range(1, n_frames):
                if stalling.flags[t]:
                    frames[t] = frames[t - 1]
            ratio = sum(stalling.flags) / n_frames
            magnitude = 1.0 - (1.0 - m) * (1.0 - ratio)

        clip = np.clip(np.round(frames * 255.0), 0, 255).astype(np.uint8)
        media_ref = f"media/{vid}.npy"
        mos = MosScore(proxy_mos(magnitude, cfg.scale), *cfg.scale)
        annotations = ()
        if cfg.with_depictions:
            annotations = (synthetic_depiction(labels, magnitude, mos),)
        entries.append(
            VideoManifestEntry(
                id=vid,
                media_ref=media_ref,
                duration=n_frames / cfg.fps,
                frame_rate=cfg.fps,
                source_dataset=cfg.source_dataset,
                kind=kind,
                mos=mos,
                stalling=stalling,
                distortions=frozenset(labels),
                annotations=annotations,
            )
        )
        clips[vid] = clip
        mags[vid] = magnitude

    corpus = SyntheticCorpus(entries, clips, mags, cfg)
    if out_dir is not None:
        save_synthetic_corpus(corpus, out_dir)
    return corpus


def save_synthetic_corpus(corpus: SyntheticCorpus, out_dir: str | os.PathLike) -> Path:
    out = Path(out_dir)
    (out / "media").mkdir(parents=True, exist_ok=True)
    for entry in corpus.manifest:
        np.save(out / entry.media_ref, corpus.clips[entry.id], allow_pickle=False)
    write_manifest(corpus.manifest, out / "manifest.jsonl")
    if corpus.config is not None:
        (out / "synthetic_config.json").write_text(
            json.dumps(corpus.config.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    return out / "manifest.jsonl"
