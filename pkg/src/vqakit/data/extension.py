"""Rendering of extension prompts, tolerant parsing of the replies, and
assembly of Stage-3 instruction pairs.

Rendering and parsing are split so any text generator (a hosted LLM, a
replay file, the offline template extender below) can sit in between.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Callable, Iterator, Protocol, Union

from .builders import build_causal_pair
from .templates import DEPICTION_SLOT, OVERALL_SLOT, prompt_template
from .types import (
    AigcDepiction,
    ExtendedConversation,
    InContextDepiction,
    InstructionPair,
    MediaRef,
    OverallDepiction,
    Stage,
    TaskTag,
    VideoManifestEntry,
)

logger = logging.getLogger(__name__)

Depiction = Union[OverallDepiction, AigcDepiction, InContextDepiction, ExtendedConversation]

# prompt name -> task tag of the pairs parsed from its reply
OVERALL_PROMPTS = (
    ("quality_centric", TaskTag.QUALITY_CENTRIC),
    ("temporal_centric", TaskTag.TEMPORAL_CENTRIC),
    ("extended_from_overall", TaskTag.EXTENDED),
)
EXPECTED_PAIRS = {"quality_centric": 3, "temporal_centric": 1, "extended_from_overall": 1,
                  "in_context_rewrite": 1, "extended_rewrite": 1}


def prompt_names_for(depiction: Depiction) -> list[str]:
    if isinstance(depiction, (OverallDepiction, AigcDepiction)):
        return [name for name, _ in OVERALL_PROMPTS]
    if isinstance(depiction, ExtendedConversation):
        return ["extended_rewrite"]
    if isinstance(depiction, InContextDepiction):
        return ["in_context_rewrite"]
    raise TypeError(f"cannot render prompts for {type(depiction).__name__}")


def render_extension_prompts(depiction: Depiction) -> list[str]:
    names = prompt_names_for(depiction)
    if isinstance(depiction, (OverallDepiction, AigcDepiction)):
        body = depiction.body.strip()
        if not body:
            raise ValueError("depiction free text is empty")
        return [prompt_template(n).replace(OVERALL_SLOT, body) for n in names]
    return [prompt_template(names[0]).replace(DEPICTION_SLOT, depiction.text.strip())]


@dataclass(frozen=True)
class QAPair:
    question: str
    answer: str


@dataclass
class ParsedResponse:
    pairs: list[QAPair] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self) -> Iterator[QAPair]:
        return iter(self.pairs)

    def __getitem__(self, i):
        return self.pairs[i]


_MARKER = re.compile(
    r"(?P<header>\bquestion\s*\d+\s*:?)|(?P<q>\bquestion\s*:)|(?P<a>\banswer\s*:)",
    re.IGNORECASE,
)


def _clean(text: str) -> str:
    return " ".join(text.split()).strip()


def parse_extension_response(text: str) -> ParsedResponse:
    """Pull ordered (question, answer) pairs out of a free-form reply.

    Recognises ``Question:`` / ``Answer:`` markers in any case, with optional
    ``Question N`` headers. Incomplete fragments are dropped and reported.
    """
    result = ParsedResponse()
    marks = list(_MARKER.finditer(text))
    question: str | None = None
    for i, m in enumerate(marks):
        end = marks[i + 1].start() if i + 1 < len(marks) else len(text)
        content = _clean(text[m.end():end])
        if m.group("header"):
            # a numbered header may carry the question itself ("Question 2: Is ...?")
            if content:
                if question is not None:
                    result.diagnostics.append(f"question without answer dropped: {question!r}")
                question = content
            continue
        if m.group("q"):
            if question is not None and question:
                result.diagnostics.append(f"question without answer dropped: {question!r}")
            question = content
            continue
        # answer marker
        if question is None:
            result.diagnostics.append(f"answer without question dropped: {content!r}")
        elif not question or not content:
            result.diagnostics.append("pair with empty question or answer dropped")
        else:
            result.pairs.append(QAPair(question, content))
        question = None
    if question:
        result.diagnostics.append(f"incomplete trailing question dropped: {question!r}")
    if not result.pairs:
        result.diagnostics.append("no complete question/answer pair found")
    for d in result.diagnostics:
        logger.info("extension parse: %s", d)
    return result


class Extender(Protocol):
    """Anything that turns a rendered extension prompt into reply text."""

    def __call__(self, prompt_name: str, prompt: str, depiction: Depiction) -> str: ...


class CompletionExtender:
    """Adapter for a plain ``complete(prompt) -> str`` text generator."""

    def __init__(self, complete: Callable[[str], str]):
        self.complete = complete

    def __call__(self, prompt_name, prompt, depiction):
        return self.complete(prompt)


class TemplateExtender:
    """Deterministic offline stand-in for the LLM rewriting step.

    Produces replies in the requested ``Question: ... Answer: ...`` layout
    using only the structured fields of the depiction.
    """

    def __call__(self, prompt_name, prompt, depiction):
        fn = getattr(self, "_" + prompt_name)
        return fn(depiction)

    @staticmethod
    def _items(depiction):
        if isinstance(depiction, OverallDepiction):
            return depiction.items
        return ()

    def _quality_centric(self, depiction):
        items = self._items(depiction)
        if not items:
            aspects = [a for a in depiction.to_dict() if a not in ("type", "reference_level")]
            lines = []
            for n, name in enumerate(aspects[:3], 1):
                label = name.replace("_", " ")
                lines.append(
                    f"Question {n}: Question: How is the {label} of this video? "
                    f"Answer: {getattr(depiction, name).strip()}"
                )
            return "\n".join(lines)
        a, b, c = (items[i % len(items)] for i in range(3))
        other = "good" if b.polarity == "negative" else "relatively severe"
        return (
            f"Question 1: Question: Is the {a.attribute} of the video {a.degree} {a.temporal}? "
            f"A. Yes B. No Answer: A. Yes\n"
            f"Question 2: Question: How is the {b.attribute} of the video {b.temporal}? "
            f"A. {b.degree.capitalize()} B. {other.capitalize()} Answer: A. {b.degree.capitalize()}\n"
            f"Question 3: Question: How would you rate the {c.attribute} of the video? "
            f"Answer: The {c.attribute} is {c.degree} {c.temporal}."
        )

    def _temporal_centric(self, depiction):
        items = self._items(depiction)
        if not items:
            return (
                "Question: How is the temporal alignment of this video? "
                f"Answer: {depiction.temporal_alignment.strip()}"
            )
        it = items[-1]
        return (
            f"Question: When is the {it.attribute} of the video {it.degree}? "
            f"Answer: {it.temporal[0].upper() + it.temporal[1:]}."
        )

    def _extended_from_overall(self, depiction):
        items = self._items(depiction)
        negatives = [it for it in items if it.polarity == "negative"]
        if negatives:
            names = " and ".join(it.attribute for it in negatives)
            return (
                "Question: What post-processing could improve the quality of this video? "
                f"Answer: Post-processing that targets the {names} would improve the quality."
            )
        if items:
            return (
                "Question: What makes the quality of this video satisfying? "
                f"Answer: The {items[0].attribute} is {items[0].degree} {items[0].temporal}."
            )
        return (
            "Question: Is the content of this video factually consistent? "
            f"Answer: {depiction.factual_consistency.strip()}"
        )

    def _in_context_rewrite(self, depiction):
        return (
            "Question: What quality phenomenon can be observed at this point of the video? "
            f"Answer: {depiction.text.strip()}"
        )

    def _extended_rewrite(self, depiction):
        text = depiction.text.strip()
        parsed = parse_extension_response(text)
        if parsed.pairs:
            p = parsed.pairs[0]
            return f"Question: {p.question} Answer: {p.answer}"
        return f"Question: What can be said about the quality of this video? Answer: {text}"


def build_stage3_pairs(
    entry: VideoManifestEntry,
    depiction: Depiction,
    extender: Extender | None = None,
) -> list[InstructionPair]:
    """All Stage-3 pairs derived from one annotation of ``entry``.

    An overall depiction yields 3 quality-centric + 1 temporal-centric +
    1 extended pair from the extender, plus one causal-analysis pair.
    """
    extender = extender or TemplateExtender()
    if isinstance(depiction, (OverallDepiction, AigcDepiction)):
        plan = list(OVERALL_PROMPTS)
    elif isinstance(depiction, ExtendedConversation):
        plan = [("extended_rewrite", TaskTag.EXTENDED)]
    else:
        plan = [("in_context_rewrite", TaskTag.IN_CONTEXT)]

    prompts = render_extension_prompts(depiction)
    pairs: list[InstructionPair] = []
    for (name, tag), prompt in zip(plan, prompts):
        parsed = parse_extension_response(extender(name, prompt, depiction))
        want = EXPECTED_PAIRS[name]
        if len(parsed.pairs) != want:
            logger.warning(
                "%s: %s reply gave %d pairs, expected %d", entry.id, name, len(parsed.pairs), want
            )
        for k, qa in enumerate(parsed.pairs[:want]):
            pairs.append(
                InstructionPair(
                    id=f"{entry.id}:S3:{tag.value}:{name}:{k}",
                    video_id=entry.id,
                    stage=Stage.S3,
                    task_tag=tag,
                    system_prompt="",
                    question=qa.question,
                    answer=qa.answer,
                    media=MediaRef.of(entry),
                )
            )
    if isinstance(depiction, OverallDepiction):
        pairs.append(build_causal_pair(depiction, entry))
    return pairs

