"""JSON-lines instruction corpus and manifest I/O."""

from __future__ import annotations

import json
import os
from typing import Iterable, Sequence

from ..quality import StallingTrace
from .types import InstructionPair, MediaRef, VideoManifestEntry


class CorpusFormatError(ValueError):
    def __init__(self, path, lineno: int, reason: str):
        super().__init__(f"{path}:{lineno}: {reason}")
        self.lineno = lineno


def pair_to_record(pair: InstructionPair) -> dict:
    # key order is part of the format (golden files compare bytes)
    stalling = {}
    if pair.stalling is not None:
        stalling = {
            "flags": "".join(map(str, pair.stalling.flags)),
            "frame_rate": pair.stalling.frame_rate,
        }
    return {
        "id": pair.id,
        "video_id": pair.video_id,
        "stage": pair.stage.value,
        "task_tag": pair.task_tag.value,
        "system_prompt": pair.system_prompt,
        "question": pair.question,
        "answer": pair.answer,
        "media": {
            "frames_dir": pair.media.frames_dir,
            "fps": pair.media.fps,
            "duration_s": pair.media.duration_s,
        },
        "stalling": stalling,
    }


def record_to_pair(rec: dict) -> InstructionPair:
    media = rec.get("media") or {}
    stalling = rec.get("stalling") or {}
    trace = None
    if stalling.get("flags"):
        trace = StallingTrace(tuple(int(c) for c in stalling["flags"]), float(stalling["frame_rate"]))
    return InstructionPair(
        id=rec["id"],
        video_id=rec["video_id"],
        stage=rec["stage"],
        task_tag=rec["task_tag"],
        system_prompt=rec["system_prompt"],
        question=rec["question"],
        answer=rec["answer"],
        media=MediaRef(media.get("frames_dir"), media.get("fps"), media.get("duration_s")),
        stalling=trace,
    )


def dumps_pair(pair: InstructionPair) -> str:
    return json.dumps(pair_to_record(pair), ensure_ascii=False)


def write_corpus(pairs: Iterable[InstructionPair], path: str | os.PathLike) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for pair in pairs:
            f.write(dumps_pair(pair))
            f.write("\n")
            n += 1
    return n


def _read_jsonl(path, convert):
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                out.append(convert(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise CorpusFormatError(path, lineno, str(exc)) from exc
    return out


def read_corpus(path: str | os.PathLike) -> list[InstructionPair]:
    return _read_jsonl(path, record_to_pair)


def write_manifest(entries: Sequence[VideoManifestEntry], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for e in entries:
            f.write(json.dumps(e.to_dict(), ensure_ascii=False))
            f.write("\n")


def read_manifest(path: str | os.PathLike) -> list[VideoManifestEntry]:
    return _read_jsonl(path, VideoManifestEntry.from_dict)
