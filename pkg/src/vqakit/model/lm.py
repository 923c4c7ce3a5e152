"""The toy multimodal language model, sequence assembly, loss and greedy
decoding."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import torch
import torch.nn.functional as F
from torch import nn
from torch.nn.utils.rnn import pad_sequence

from ..data.templates import IMAGE_MARKER, MOTION_MARKER
from .components import (
    InterleavedSequence,
    KeyframeEncoder,
    MotionExtractor,
    MotionPositions,
    MotionTokenSeq,
    Projector,
    VisualTokenSeq,
    encode_keyframes,
    extract_motion_tokens,
    interleave,
    project_motion,
    project_vision,
)
from .config import ModelConfig
from .media import VideoTensors
from .tokenizer import WordTokenizer

IGNORE = -100

# Names the freeze machinery and the checkpoint format key on.
PARAMETER_GROUPS = (
    "vision_encoder",
    "vision_projector",
    "motion_extractor",
    "motion_projector",
    "motion_positions",
    "decoder",
    "embeddings",
)


class Decoder(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        d = config.embed_dim
        self.positions = nn.Embedding(config.max_seq_len, d)
        layer = nn.TransformerEncoderLayer(
            d,
            config.decoder_heads,
            dim_feedforward=config.ffn_dim,
            dropout=0.0,
            activation="gelu",
            batch_first=True,
            norm_first=True,
        )
        self.layers = nn.TransformerEncoder(
            layer, config.decoder_layers, enable_nested_tensor=False
        )
        self.norm = nn.LayerNorm(d)
        self.lm_head = nn.Linear(d, config.vocab_size)

    def forward(self, x: torch.Tensor, padding_mask: torch.Tensor | None = None) -> torch.Tensor:
        L = x.shape[1]
        if L > self.positions.num_embeddings:
            raise ValueError(f"sequence of {L} exceeds max_seq_len {self.positions.num_embeddings}")
        x = x + self.positions.weight[:L]
        causal = torch.triu(torch.ones(L, L, dtype=torch.bool, device=x.device), diagonal=1)
        h = self.layers(x, mask=causal, src_key_padding_mask=padding_mask)
        return self.lm_head(self.norm(h))


@dataclass
class Example:
    sequence: InterleavedSequence
    targets: torch.Tensor  # (L,), IGNORE outside the answer
    answer_start: int
    answer_ids: list[int] = field(default_factory=list)

    @property
    def embeddings(self) -> torch.Tensor:
        return self.sequence.embeddings

    @property
    def mask(self) -> torch.Tensor:
        return self.targets != IGNORE


def split_system_prompt(system_prompt: str) -> tuple[str, str, bool]:
    """Text before the media block, text after it, and whether markers exist.

    Media goes where ``[image]`` sits; the ``[motion]`` marker is dropped since
    motion tokens travel with the visual chunks.
    """
    has_marker = IMAGE_MARKER in system_prompt or MOTION_MARKER in system_prompt
    if IMAGE_MARKER in system_prompt:
        before, after = system_prompt.split(IMAGE_MARKER, 1)
    elif MOTION_MARKER in system_prompt:
        before, after = system_prompt.split(MOTION_MARKER, 1)
    else:
        before, after = system_prompt, ""
    after = after.replace(IMAGE_MARKER, " ").replace(MOTION_MARKER, " ")
    return before, after, has_marker


class MiniVQAModel(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        if config.vocab_size < 5:
            raise ValueError("set config.vocab_size from the tokenizer before building the model")
        self.config = config
        self.vision_encoder = KeyframeEncoder(config)
        self.vision_projector = Projector(config.vision_dim, config.embed_dim)
        if config.use_motion:
            self.motion_extractor = MotionExtractor(config)
            self.motion_projector = Projector(config.motion_dim, config.embed_dim)
            self.motion_positions = MotionPositions(config)
        self.embeddings = nn.Embedding(config.vocab_size, config.embed_dim)
        self.decoder = Decoder(config)
        nn.init.normal_(self.embeddings.weight, std=0.02)
        nn.init.normal_(self.decoder.positions.weight, std=0.02)

    def groups(self) -> dict[str, nn.Module]:
        return {g: getattr(self, g) for g in PARAMETER_GROUPS if hasattr(self, g)}

    @staticmethod
    def group_of(param_name: str) -> str:
        return param_name.split(".", 1)[0]

    def embed_media(self, media: VideoTensors) -> tuple[VisualTokenSeq, MotionTokenSeq | None]:
        dtype = self.embeddings.weight.dtype
        visual = encode_keyframes(self.vision_encoder, media.keyframes.to(dtype))
        visual = project_vision(self.vision_projector, visual)
        motion = None
        if self.config.use_motion:
            motion = extract_motion_tokens(self.motion_extractor, media.frames.to(dtype))
            motion = project_motion(self.motion_projector, motion)
            motion = self.motion_positions(motion)
        return visual, motion

    def build_example(
        self,
        tokenizer: WordTokenizer,
        system_prompt: str,
        question: str,
        media: VideoTensors | None,
        answer: str | None = None,
        answer_prefix: Sequence[int] = (),
    ) -> Example:
        """Assemble ``[bos] prefix | media | rest-of-system question answer [eos]``.

        With ``answer=None`` the sequence ends after ``answer_prefix`` (used
        for teacher-forced scoring and for generation).
        """
        before, after, has_marker = split_system_prompt(system_prompt)
        prefix_ids = [tokenizer.bos_id] + tokenizer.encode(before)
        suffix_ids = tokenizer.encode(after + " " + question) + list(answer_prefix)
        answer_ids = tokenizer.encode(answer) + [tokenizer.eos_id] if answer is not None else []
        visual = motion = None
        if media is not None:
            visual, motion = self.embed_media(media)
        emb = self.embeddings
        dev = emb.weight.device
        seq = interleave(
            visual,
            motion,
            (
                emb(torch.tensor(prefix_ids, device=dev)),
                emb(torch.tensor(suffix_ids + answer_ids, device=dev, dtype=torch.long)),
            ),
            layout=self.config.layout,
            expects_media=has_marker and media is not None,
        )
        L = len(seq)
        start = L - len(answer_ids)
        targets = torch.full((L,), IGNORE, dtype=torch.long, device=dev)
        for j, tok in enumerate(answer_ids):
            targets[start + j - 1] = tok
        return Example(seq, targets, start, answer_ids)

    def forward_examples(self, examples: Sequence[Example]) -> tuple[torch.Tensor, torch.Tensor]:
        """Right-pad a batch, run the decoder; returns (logits, targets)."""
        x = pad_sequence([ex.embeddings for ex in examples], batch_first=True)
        targets = pad_sequence(
            [ex.targets for ex in examples], batch_first=True, padding_value=IGNORE
        )
        lengths = torch.tensor([len(ex.sequence) for ex in examples], device=x.device)
        pad = torch.arange(x.shape[1], device=x.device)[None, :] >= lengths[:, None]
        logits = self.decoder(x, padding_mask=pad if len(examples) > 1 else None)
        return logits, targets

    def logits_for(self, sequence_embeddings: torch.Tensor) -> torch.Tensor:
        return self.decoder(sequence_embeddings.unsqueeze(0))[0]


def generation_loss(
    logits: torch.Tensor, target_ids: torch.Tensor, answer_mask: torch.Tensor
) -> torch.Tensor:
    """Mean cross-entropy of ``logits[..., t, :]`` against ``target_ids[..., t]``
    over positions where ``answer_mask`` is set.

    Targets are already shifted: position t holds the id of token t + 1.
    """
    if logits.shape[:-1] != target_ids.shape or target_ids.shape != answer_mask.shape:
        raise ValueError("logits, targets and mask must agree in shape")
    mask = answer_mask.bool()
    if not mask.any():
        raise ValueError("answer mask selects no positions")
    logp = F.log_softmax(logits, dim=-1)
    safe = torch.where(mask, target_ids, torch.zeros_like(target_ids))
    nll = -logp.gather(-1, safe.unsqueeze(-1)).squeeze(-1)
    return (nll * mask).sum() / mask.sum()


@dataclass
class GenerationResult:
    text: str
    token_ids: list[int]
    step_logits: list[torch.Tensor]


@torch.no_grad()
def generate(
    model: MiniVQAModel,
    tokenizer: WordTokenizer,
    system_prompt: str,
    question: str,
    media: VideoTensors | None,
    max_tokens: int = 32,
    mode: str = "greedy",
) -> GenerationResult:
    """Greedy decoding; stops at the end token or after ``max_tokens``."""
    if mode != "greedy":
        raise ValueError("only greedy decoding is supported")
    if max_tokens <= 0:
        raise ValueError("max_tokens must be positive")
    was_training = model.training
    model.eval()
    ex = model.build_example(tokenizer, system_prompt, question, media)
    embeds = ex.embeddings
    ids: list[int] = []
    steps: list[torch.Tensor] = []
    for _ in range(max_tokens):
        logits = model.logits_for(embeds)[-1]
        steps.append(logits.clone())
        tok = int(torch.argmax(logits))
        if tok == tokenizer.eos_id:
            break
        ids.append(tok)
        nxt = model.embeddings(torch.tensor([tok], device=embeds.device))
        embeds = torch.cat([embeds, nxt], dim=0)
    model.train(was_training)
    return GenerationResult(tokenizer.decode(ids), ids, steps)
