"""Self-describing checkpoint container.

Layout: ``{"format", "config", "vocab", "groups": {group: state_dict},
"metadata"}`` where the group names are those of ``PARAMETER_GROUPS``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import torch

from .config import ModelConfig
from .lm import PARAMETER_GROUPS, MiniVQAModel
from .tokenizer import WordTokenizer

FORMAT = "vqakit-checkpoint/1"


@dataclass
class Checkpoint:
    model: MiniVQAModel
    tokenizer: WordTokenizer
    metadata: dict = field(default_factory=dict)

    @property
    def config(self) -> ModelConfig:
        return self.model.config


def group_state(model: MiniVQAModel) -> dict[str, dict[str, torch.Tensor]]:
    return {
        name: {k: v.detach().clone() for k, v in module.state_dict().items()}
        for name, module in model.groups().items()
    }


def save_checkpoint(ckpt: Checkpoint, path: str | os.PathLike) -> None:
    torch.save(
        {
            "format": FORMAT,
            "config": ckpt.config.to_dict(),
            "vocab": list(ckpt.tokenizer.tokens),
            "groups": group_state(ckpt.model),
            "metadata": dict(ckpt.metadata),
        },
        path,
    )


def load_checkpoint(path: str | os.PathLike) -> Checkpoint:
    blob = torch.load(path, map_location="cpu", weights_only=True)
    if blob.get("format") != FORMAT:
        raise ValueError(f"{path}: not a {FORMAT} file")
    config = ModelConfig.from_dict(blob["config"])
    model = MiniVQAModel(config)
    groups = model.groups()
    unknown = set(blob["groups"]) - set(PARAMETER_GROUPS)
    if unknown:
        raise ValueError(f"{path}: unknown parameter groups {sorted(unknown)}")
    for name, state in blob["groups"].items():
        groups[name].load_state_dict(state)
    return Checkpoint(model, WordTokenizer(blob["vocab"]), blob.get("metadata", {}))
