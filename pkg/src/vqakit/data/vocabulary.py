"""Controlled vocabularies for human quality depictions.

The lists live in ``resources/vocabulary.json`` so they can be edited
without touching code.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources


@dataclass(frozen=True)
class Vocabulary:
    attributes: frozenset[str]
    degrees: dict
    temporal: dict
    aigc_aspects: tuple[str, ...]

    def check_attribute(self, attribute: str) -> None:
        if attribute.lower() not in self.attributes:
            raise ValueError(f"attribute {attribute!r} is not in the controlled vocabulary")

    def check_degree(self, degree: str) -> None:
        if degree.lower() not in self.degrees:
            raise ValueError(f"degree {degree!r} is not in the controlled vocabulary")

    def degree_polarity(self, degree: str) -> str:
        return self.degrees[degree.lower()]


@lru_cache(maxsize=None)
def load_vocabulary() -> Vocabulary:
    raw = json.loads(resource_text("vocabulary.json"))
    return Vocabulary(
        attributes=frozenset(a.lower() for a in raw["attributes"]),
        degrees={k.lower(): v for k, v in raw["degrees"].items()},
        temporal=raw["temporal"],
        aigc_aspects=tuple(raw["aigc_aspects"]),
    )


def resource_text(name: str) -> str:
    return resources.files("vqakit.data").joinpath("resources", name).read_text(encoding="utf-8")
