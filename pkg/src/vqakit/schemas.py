"""Published JSON schemas for the manifest, run config and reports."""

from __future__ import annotations

import json
from functools import lru_cache
from importlib.resources import files

import jsonschema

SCHEMAS = ("manifest_entry", "run_config", "eval_report")


@lru_cache(maxsize=None)
def load_schema(name: str) -> dict:
    if name not in SCHEMAS:
        raise KeyError(f"unknown schema {name!r}")
    text = files("vqakit").joinpath("schemas", f"{name}.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def validate(instance, name: str) -> None:
    """Raise ``ValueError`` with the offending path if ``instance`` does not conform."""
    try:
        jsonschema.validate(instance, load_schema(name))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ValueError(f"{name} schema violation at {where}: {exc.message}") from None
