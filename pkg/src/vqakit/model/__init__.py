from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .components import (
    InterleavedSequence,
    MotionTokenSeq,
    VisualTokenSeq,
    add_motion_positions,
    encode_keyframes,
    extract_motion_tokens,
    interleave,
    partition_sizes,
    project_motion,
    project_vision,
)
from .config import ModelConfig
from .lm import PARAMETER_GROUPS, MiniVQAModel, generate, generation_loss
from .media import MediaCache, VideoTensors, preprocess_clip
from .tokenizer import WordTokenizer

__all__ = [
    "Checkpoint",
    "InterleavedSequence",
    "MediaCache",
    "MiniVQAModel",
    "ModelConfig",
    "MotionTokenSeq",
    "PARAMETER_GROUPS",
    "VideoTensors",
    "VisualTokenSeq",
    "WordTokenizer",
    "add_motion_positions",
    "encode_keyframes",
    "extract_motion_tokens",
    "generate",
    "generation_loss",
    "interleave",
    "load_checkpoint",
    "partition_sizes",
    "preprocess_clip",
    "project_motion",
    "project_vision",
    "save_checkpoint",
]
