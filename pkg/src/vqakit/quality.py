"""Quality-assessment math: MOS normalization, level binning, level weights
and stalling-trace analytics.

Everything here is pure and deterministic.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

# Stalls longer than this are reported as "long" (rebuffering rather than stutter).
LONG_STALL_SECONDS = 2.0


class QualityLevel(str, enum.Enum):
    HIGH = "High"
    GOOD = "Good"
    FAIR = "Fair"
    POOR = "Poor"
    LOW = "Low"

    @property
    def rank(self) -> int:
        """0 for Low up to 4 for High."""
        return 4 - LEVEL_ORDER.index(self)

    @property
    def word(self) -> str:
        return self.value.lower()

    def __lt__(self, other):
        if not isinstance(other, QualityLevel):
            return NotImplemented
        return self.rank < other.rank

    def __le__(self, other):
        if not isinstance(other, QualityLevel):
            return NotImplemented
        return self.rank <= other.rank

    def __gt__(self, other):
        if not isinstance(other, QualityLevel):
            return NotImplemented
        return self.rank > other.rank

    def __ge__(self, other):
        if not isinstance(other, QualityLevel):
            return NotImplemented
        return self.rank >= other.rank

    @classmethod
    def parse(cls, text: str) -> "QualityLevel":
        """Case-insensitive lookup by level word."""
        key = text.strip().strip(".").lower()
        for level in cls:
            if level.word == key:
                return level
        raise ValueError(f"not a quality level: {text!r}")


# Index order used for logits and weights everywhere.
LEVEL_ORDER: tuple[QualityLevel, ...] = (
    QualityLevel.HIGH,
    QualityLevel.GOOD,
    QualityLevel.FAIR,
    QualityLevel.POOR,
    QualityLevel.LOW,
)
LEVEL_WORDS: tuple[str, ...] = tuple(level.word for level in LEVEL_ORDER)


@dataclass(frozen=True)
class MosScore:
    value: float
    scale_min: float
    scale_max: float

    def __post_init__(self):
        if not self.scale_min < self.scale_max:
            raise ValueError(
                f"degenerate MOS scale [{self.scale_min}, {self.scale_max}]"
            )
        if not self.scale_min <= self.value <= self.scale_max:
            raise ValueError(
                f"MOS {self.value} outside its scale [{self.scale_min}, {self.scale_max}]"
            )

    def to_dict(self) -> dict:
        return {"value": self.value, "scale_min": self.scale_min, "scale_max": self.scale_max}

    @classmethod
    def from_dict(cls, d: dict) -> "MosScore":
        return cls(float(d["value"]), float(d["scale_min"]), float(d["scale_max"]))


@dataclass(frozen=True)
class LevelWeights:
    weights: tuple[float, ...] = (1.0, 0.75, 0.5, 0.25, 0.0)

    def __post_init__(self):
        w = tuple(float(x) for x in self.weights)
        object.__setattr__(self, "weights", w)
        if len(w) != 5:
            raise ValueError("LevelWeights needs exactly 5 weights")
        if any(not 0.0 <= x <= 1.0 for x in w):
            raise ValueError("level weights must lie in [0, 1]")
        if any(a <= b for a, b in zip(w, w[1:])):
            raise ValueError("level weights must be strictly decreasing High -> Low")

    def as_array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=np.float64)


DEFAULT_WEIGHTS = LevelWeights()


def normalize_mos(mos: MosScore) -> float:
    """Map a MOS onto [0, 100] using the dataset's declared scale bounds."""
    span = mos.scale_max - mos.scale_min
    value = 100.0 * (mos.value - mos.scale_min) / span
    # guard against float drift at the bounds
    return min(100.0, max(0.0, value))


def mos_to_level(score: float) -> QualityLevel:
    """Bin a normalized score into one of five 20-point levels.

    Intervals are half-open ``[lo, lo + 20)`` except the top one, which is
    closed so that 100 maps to High.
    """
    score = float(score)
    if not 0.0 <= score <= 100.0 or np.isnan(score):
        raise ValueError(f"normalized score {score} outside [0, 100]")
    if score >= 80.0:
        return QualityLevel.HIGH
    if score >= 60.0:
        return QualityLevel.GOOD
    if score >= 40.0:
        return QualityLevel.FAIR
    if score >= 20.0:
        return QualityLevel.POOR
    return QualityLevel.LOW


def level_weight(level: QualityLevel, weights: LevelWeights = DEFAULT_WEIGHTS) -> float:
    return weights.weights[LEVEL_ORDER.index(level)]


@dataclass(frozen=True)
class StallingTrace:
    """Per-frame playback flags: 1 = stalled, 0 = smooth."""

    flags: tuple[int, ...]
    frame_rate: float

    def __post_init__(self):
        flags = tuple(int(f) for f in self.flags)
        object.__setattr__(self, "flags", flags)
        if not flags:
            raise ValueError("stalling trace must be non-empty")
        if any(f not in (0, 1) for f in flags):
            raise ValueError("stalling flags must be 0 or 1")
        if not self.frame_rate > 0:
            raise ValueError("frame_rate must be positive")

    @property
    def duration(self) -> float:
        return len(self.flags) / self.frame_rate


@dataclass(frozen=True)
class StallingSummary:
    event_count: int
    event_durations: tuple[float, ...]
    stall_ratio: float
    initial_buffering: float
    tail_gap: float
    long_stall_count: int = field(default=0, compare=False)

    def as_tuple(self) -> tuple:
        return (
            self.event_count,
            list(self.event_durations),
            self.stall_ratio,
            self.initial_buffering,
            self.tail_gap,
        )


def encode_stalling_binary(trace: StallingTrace) -> str:
    return "".join("1" if f else "0" for f in trace.flags)


def parse_stalling_binary(text: str, frame_rate: float) -> StallingTrace:
    if set(text) - {"0", "1"}:
        raise ValueError("stalling string may only contain '0' and '1'")
    return StallingTrace(tuple(int(c) for c in text), frame_rate)


def _runs_of_ones(flags: Sequence[int]) -> list[tuple[int, int]]:
    """(start, length) of every maximal run of 1s."""
    a = np.asarray(flags, dtype=np.int8)
    padded = np.concatenate(([0], a, [0]))
    edges = np.diff(padded)
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    return [(int(s), int(e - s)) for s, e in zip(starts, ends)]


def summarize_stalling(
    trace: StallingTrace, long_stall_seconds: float = LONG_STALL_SECONDS
) -> StallingSummary:
    """The five stall statistics of a playback trace.

    Durations are in seconds (run length / frame rate). ``tail_gap`` is the
    time from the end of the last stall to the end of playback; with no
    stall it is the whole duration.
    """
    n = len(trace.flags)
    fps = trace.frame_rate
    runs = _runs_of_ones(trace.flags)
    durations = tuple(length / fps for _, length in runs)
    stalled = sum(length for _, length in runs)
    initial = runs[0][1] / fps if runs and runs[0][0] == 0 else 0.0
    if runs:
        last_end = runs[-1][0] + runs[-1][1]
        tail = (n - last_end) / fps
    else:
        tail = n / fps
    return StallingSummary(
        event_count=len(runs),
        event_durations=durations,
        stall_ratio=stalled / n,
        initial_buffering=initial,
        tail_gap=tail,
        long_stall_count=sum(d > long_stall_seconds for d in durations),
    )


def levels_of(scores: Iterable[float]) -> list[QualityLevel]:
    return [mos_to_level(s) for s in scores]


class DistortionLabel(str, enum.Enum):
    COMPRESSION_ARTIFACT = "compression artifact"
    SPATIAL_BLUR = "spatial blur"
    MOTION_BLUR = "motion blur"
    NOISE = "noise"
    OVEREXPOSURE = "overexposure"
    UNDEREXPOSURE = "underexposure"
    LOW_CONTRAST = "low contrast"
    HIGH_CONTRAST = "high contrast"
    OVERSATURATION = "oversaturation"
    DESATURATION = "desaturation"
    BLOCK_EFFECT = "block effect"
    FLICKER = "flicker (camera shake)"
    STUTTERING = "stuttering"

    @property
    def is_motion(self) -> bool:
        return self in MOTION_LABELS


MOTION_LABELS = frozenset({DistortionLabel.FLICKER, DistortionLabel.STUTTERING})
SPATIAL_LABELS = frozenset(set(DistortionLabel) - MOTION_LABELS)
