"""Prompt and instruction templates (package data, treated as golden)."""

from __future__ import annotations

import json
from functools import lru_cache

from .vocabulary import resource_text

SYSTEM_MODES = ("train", "score", "understand")

EXTENSION_PROMPTS = (
    "quality_centric",
    "temporal_centric",
    "extended_from_overall",
    "in_context_rewrite",
    "extended_rewrite",
)

IMAGE_MARKER = "[image]"
MOTION_MARKER = "[motion]"
OVERALL_SLOT = "[overall depiction]"
DEPICTION_SLOT = "[depiction]"


@lru_cache(maxsize=None)
def prompt_template(name: str) -> str:
    if name not in EXTENSION_PROMPTS and name not in {f"system_{m}" for m in SYSTEM_MODES}:
        raise KeyError(name)
    return resource_text(f"prompts/{name}.txt").rstrip("\n")


def system_template(mode: str) -> str:
    if mode not in SYSTEM_MODES:
        raise ValueError(f"unknown system prompt mode {mode!r}")
    return prompt_template(f"system_{mode}")


@lru_cache(maxsize=None)
def instruction_templates() -> dict:
    return json.loads(resource_text("instruction_templates.json"))
