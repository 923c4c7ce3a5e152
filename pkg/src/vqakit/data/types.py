"""Record types shared by the dataset builders and the corpus format."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

from ..quality import DistortionLabel, MosScore, QualityLevel, StallingTrace
from .vocabulary import load_vocabulary


class VideoKind(str, enum.Enum):
    IMAGE = "image"
    UGC_VIDEO = "ugc_video"
    STREAMING_VIDEO = "streaming_video"
    AIGC_VIDEO = "aigc_video"


class Stage(str, enum.Enum):
    S1_SPATIAL = "S1_spatial"
    S1_MOTION = "S1_motion"
    S2_UGC = "S2_ugc"
    S2_STREAM = "S2_stream"
    S3 = "S3"


class TaskTag(str, enum.Enum):
    DISTORTION = "distortion"
    LEVEL = "level"
    QUALITY_CENTRIC = "quality_centric"
    TEMPORAL_CENTRIC = "temporal_centric"
    EXTENDED = "extended"
    IN_CONTEXT = "in_context"
    CAUSAL = "causal"


VALID_TAGS: dict[Stage, frozenset[TaskTag]] = {
    Stage.S1_SPATIAL: frozenset({TaskTag.DISTORTION}),
    Stage.S1_MOTION: frozenset({TaskTag.DISTORTION}),
    Stage.S2_UGC: frozenset({TaskTag.LEVEL}),
    Stage.S2_STREAM: frozenset({TaskTag.LEVEL}),
    Stage.S3: frozenset(
        {
            TaskTag.QUALITY_CENTRIC,
            TaskTag.TEMPORAL_CENTRIC,
            TaskTag.EXTENDED,
            TaskTag.IN_CONTEXT,
            TaskTag.CAUSAL,
        }
    ),
}


@dataclass(frozen=True)
class DepictionItem:
    attribute: str
    degree: str
    temporal: str
    location: Optional[str] = None

    @property
    def polarity(self) -> str:
        return load_vocabulary().degree_polarity(self.degree)

    def to_dict(self) -> dict:
        return {
            "attribute": self.attribute,
            "degree": self.degree,
            "temporal": self.temporal,
            "location": self.location,
        }


@dataclass(frozen=True)
class OverallDepiction:
    items: tuple[DepictionItem, ...]
    free_text: str
    reference_level: QualityLevel

    def __post_init__(self):
        items = tuple(
            it if isinstance(it, DepictionItem) else DepictionItem(**it) for it in self.items
        )
        object.__setattr__(self, "items", items)
        object.__setattr__(self, "reference_level", QualityLevel(self.reference_level))
        if not items:
            raise ValueError("an overall depiction needs at least one item")
        vocab = load_vocabulary()
        for it in items:
            vocab.check_attribute(it.attribute)
            vocab.check_degree(it.degree)

    @property
    def body(self) -> str:
        return self.free_text

    def to_dict(self) -> dict:
        return {
            "type": "overall",
            "items": [it.to_dict() for it in self.items],
            "free_text": self.free_text,
            "reference_level": self.reference_level.value,
        }


@dataclass(frozen=True)
class AigcDepiction:
    visual_quality: str
    temporal_alignment: str
    dynamic_degree: str
    text_to_video_alignment: str
    factual_consistency: str
    reference_level: int

    def __post_init__(self):
        for name in ASPECT_FIELDS:
            if not getattr(self, name).strip():
                raise ValueError(f"AIGC depiction aspect {name!r} is empty")
        if self.reference_level not in (1, 2, 3, 4):
            raise ValueError("AIGC reference level must be in 1..4")

    @property
    def body(self) -> str:
        parts = []
        for name in ASPECT_FIELDS:
            label = name.replace("_", " ").replace("text to video", "text-to-video")
            parts.append(f"{label.capitalize()}: {getattr(self, name).strip()}")
        return " ".join(p if p.endswith(".") else p + "." for p in parts)

    def to_dict(self) -> dict:
        d = {"type": "aigc"}
        d.update({name: getattr(self, name) for name in ASPECT_FIELDS})
        d["reference_level"] = self.reference_level
        return d


ASPECT_FIELDS = (
    "visual_quality",
    "temporal_alignment",
    "dynamic_degree",
    "text_to_video_alignment",
    "factual_consistency",
)

FOCI = ("temporal", "spatial", "cause", "severity", "reshoot", "postprocess", "attribute")


@dataclass(frozen=True)
class InContextDepiction:
    text: str
    focus: str = "temporal"

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("depiction text is empty")
        if self.focus not in FOCI:
            raise ValueError(f"unknown focus {self.focus!r}")

    def to_dict(self) -> dict:
        return {"type": "in_context", "text": self.text, "focus": self.focus}


@dataclass(frozen=True)
class ExtendedConversation(InContextDepiction):
    focus: str = "cause"

    def to_dict(self) -> dict:
        return {"type": "extended", "text": self.text, "focus": self.focus}


def depiction_from_dict(d: dict):
    kind = d.get("type", "overall")
    body = {k: v for k, v in d.items() if k != "type"}
    if kind == "overall":
        return OverallDepiction(
            items=tuple(DepictionItem(**it) for it in body["items"]),
            free_text=body["free_text"],
            reference_level=QualityLevel(body["reference_level"]),
        )
    if kind == "aigc":
        return AigcDepiction(**body)
    if kind == "in_context":
        return InContextDepiction(**body)
    if kind == "extended":
        return ExtendedConversation(**body)
    raise ValueError(f"unknown depiction type {kind!r}")


@dataclass(frozen=True)
class VideoManifestEntry:
    id: str
    media_ref: str
    duration: float
    frame_rate: float
    source_dataset: str
    kind: VideoKind = VideoKind.UGC_VIDEO
    mos: Optional[MosScore] = None
    stalling: Optional[StallingTrace] = None
    distortions: frozenset[DistortionLabel] = frozenset()
    # human annotations for Stage-3 (overall / aigc / in-context / extended)
    annotations: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", VideoKind(self.kind))
        object.__setattr__(
            self, "distortions", frozenset(DistortionLabel(d) for d in self.distortions)
        )
        if self.kind is not VideoKind.IMAGE and not self.duration > 0:
            raise ValueError(f"{self.id}: video duration must be positive")
        if not self.frame_rate > 0:
            raise ValueError(f"{self.id}: frame_rate must be positive")
        if self.kind is VideoKind.STREAMING_VIDEO and self.stalling is None:
            raise ValueError(f"{self.id}: streaming entries need a stalling trace")

    @property
    def num_frames(self) -> int:
        return max(1, round(self.duration * self.frame_rate))

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "media_ref": self.media_ref,
            "duration": self.duration,
            "frame_rate": self.frame_rate,
            "source_dataset": self.source_dataset,
            "kind": self.kind.value,
            "mos": self.mos.to_dict() if self.mos else None,
            "stalling": (
                {
                    "flags": "".join(map(str, self.stalling.flags)),
                    "frame_rate": self.stalling.frame_rate,
                }
                if self.stalling
                else None
            ),
            "distortions": sorted(d.value for d in self.distortions),
            "annotations": [a.to_dict() for a in self.annotations],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VideoManifestEntry":
        stalling = d.get("stalling")
        return cls(
            id=str(d["id"]),
            media_ref=str(d["media_ref"]),
            duration=float(d["duration"]),
            frame_rate=float(d["frame_rate"]),
            source_dataset=str(d.get("source_dataset", "")),
            kind=VideoKind(d.get("kind", "ugc_video")),
            mos=MosScore.from_dict(d["mos"]) if d.get("mos") else None,
            stalling=(
                StallingTrace(tuple(int(c) for c in stalling["flags"]), float(stalling["frame_rate"]))
                if stalling
                else None
            ),
            distortions=frozenset(DistortionLabel(x) for x in d.get("distortions", ())),
            annotations=tuple(depiction_from_dict(a) for a in d.get("annotations", ())),
        )


@dataclass(frozen=True)
class MediaRef:
    frames_dir: Optional[str] = None
    fps: Optional[float] = None
    duration_s: Optional[float] = None

    @classmethod
    def of(cls, entry: VideoManifestEntry) -> "MediaRef":
        return cls(entry.media_ref, entry.frame_rate, entry.duration)


@dataclass(frozen=True)
class InstructionPair:
    id: str
    video_id: str
    stage: Stage
    task_tag: TaskTag
    system_prompt: str
    question: str
    answer: str
    media: MediaRef = field(default_factory=MediaRef)
    stalling: Optional[StallingTrace] = None

    def __post_init__(self):
        object.__setattr__(self, "stage", Stage(self.stage))
        object.__setattr__(self, "task_tag", TaskTag(self.task_tag))
        if not self.question.strip() or not self.answer.strip():
            raise ValueError(f"{self.id}: question and answer must be non-empty")
        if self.task_tag not in VALID_TAGS[self.stage]:
            raise ValueError(
                f"{self.id}: task tag {self.task_tag.value} invalid for stage {self.stage.value}"
            )


@dataclass(frozen=True)
class SamplingPlan:
    selected_ids: tuple[str, ...]
    per_level_counts: dict
    seed: int

    def __post_init__(self):
        if len(set(self.selected_ids)) != len(self.selected_ids):
            raise ValueError("sampling plan ids must be unique")
        if sum(self.per_level_counts.values()) != len(self.selected_ids):
            raise ValueError("per-level counts must sum to the number of selected ids")
