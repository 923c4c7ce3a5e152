from .builders import (
    attach_system_prompt,
    build_causal_pair,
    build_stage1_motion_pair,
    build_stage1_spatial_pair,
    build_stage2_streaming_pair,
    build_stage2_ugc_pair,
    entry_level,
    plan_sampling,
    render_system_prompt,
)
from .corpus import read_corpus, read_manifest, write_corpus, write_manifest
from .extension import (
    TemplateExtender,
    build_stage3_pairs,
    parse_extension_response,
    render_extension_prompts,
)
from .pipeline import build_corpus
from .synthetic import SyntheticConfig, generate_synthetic_corpus
from .types import (
    AigcDepiction,
    DepictionItem,
    ExtendedConversation,
    InContextDepiction,
    InstructionPair,
    MediaRef,
    OverallDepiction,
    SamplingPlan,
    Stage,
    TaskTag,
    VideoKind,
    VideoManifestEntry,
)

__all__ = [
    "AigcDepiction",
    "DepictionItem",
    "ExtendedConversation",
    "InContextDepiction",
    "InstructionPair",
    "MediaRef",
    "OverallDepiction",
    "SamplingPlan",
    "Stage",
    "SyntheticConfig",
    "TaskTag",
    "TemplateExtender",
    "VideoKind",
    "VideoManifestEntry",
    "attach_system_prompt",
    "build_causal_pair",
    "build_corpus",
    "build_stage1_motion_pair",
    "build_stage1_spatial_pair",
    "build_stage2_streaming_pair",
    "build_stage2_ugc_pair",
    "build_stage3_pairs",
    "entry_level",
    "generate_synthetic_corpus",
    "parse_extension_response",
    "plan_sampling",
    "read_corpus",
    "read_manifest",
    "render_extension_prompts",
    "render_system_prompt",
    "write_corpus",
    "write_manifest",
]
