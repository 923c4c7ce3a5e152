from __future__ import annotations

from dataclasses import asdict, dataclass, fields

LAYOUTS = ("per_keyframe", "block")


@dataclass
class ModelConfig:
    """Sizes of the toy multimodal stack.

    Defaults are desk-scale. The full-size reference setup uses 196 tokens
    per keyframe, 336 px keyframes, 224 px motion frames, SigLIP-SO400m as
    the vision tower, SlowFast-R50 (fast path only) as the motion extractor,
    2-layer MLP+GELU projectors and a 7B decoder.
    """

    embed_dim: int = 64
    vision_dim: int = 48
    motion_dim: int = 32
    vision_tokens_per_keyframe: int = 16
    keyframe_resolution: int = 32
    motion_frame_resolution: int = 32
    tau: int = 4
    alpha: int = 4
    max_motion_positions: int = 256
    vocab_size: int = 0
    decoder_layers: int = 2
    decoder_heads: int = 4
    ffn_dim: int = 128
    max_seq_len: int = 1024
    use_motion: bool = True
    use_slow_path: bool = False
    layout: str = "per_keyframe"

    def __post_init__(self):
        if self.tau < 1 or self.alpha < 1:
            raise ValueError("tau and alpha must be >= 1")
        if self.tau % self.alpha:
            raise ValueError("tau must be divisible by alpha so the fast-path stride is integral")
        if self.layout not in LAYOUTS:
            raise ValueError(f"layout must be one of {LAYOUTS}")
        if self.embed_dim % self.decoder_heads:
            raise ValueError("embed_dim must be divisible by decoder_heads")
        if self.vision_tokens_per_keyframe < 1:
            raise ValueError("vision_tokens_per_keyframe must be >= 1")

    @property
    def fast_stride(self) -> int:
        return self.tau // self.alpha

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})
