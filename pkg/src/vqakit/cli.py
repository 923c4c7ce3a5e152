"""Command-line entry points.

Logs go to standard error and data goes to files. Any failure exits
non-zero after printing one JSON error line to standard error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import torch

from . import __version__
from .data.builders import render_system_prompt
from .data.corpus import read_corpus, read_manifest, write_corpus
from .data.pipeline import build_corpus
from .data.synthetic import SyntheticConfig, generate_synthetic_corpus, save_synthetic_corpus
from .data.templates import instruction_templates
from .data.types import Stage
from .evaluation import (
    HttpJudge,
    LabeledScoreSet,
    RecordingJudge,
    ReplayJudge,
    StubJudge,
    evaluate_scoring,
    evaluate_understanding,
    model_answerer,
    read_benchmark,
)
from .model.checkpoint import Checkpoint, load_checkpoint
from .model.config import ModelConfig
from .model.lm import MiniVQAModel
from .model.media import MediaCache, load_frames, preprocess_clip
from .model.tokenizer import WordTokenizer
from .quality import normalize_mos
from .schemas import validate
from .scoring import (
    DEFAULT_ANSWER_TEMPLATE,
    read_scores,
    score_manifest,
    score_video,
    write_scores,
)
from .training import (
    CurriculumPlan,
    Hyperparams,
    StageId,
    check_resume,
    media_loader,
    run_curriculum,
)
from .utils.seeding import derive_seed

logger = logging.getLogger("vqakit")


class CommandError(Exception):
    """A user-facing failure (bad input, missing file, refused resume)."""


def _need_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise CommandError(f"{what} not found: {path}")
    return p


def _load_manifest(path: str):
    p = _need_file(path, "manifest")
    with open(p, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                try:
                    validate(json.loads(line), "manifest_entry")
                except ValueError as exc:
                    raise CommandError(f"{p}:{lineno}: {exc}") from None
    return read_manifest(p)


def _write_json(obj, path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_synth_data(args) -> int:
    if args.count < 1:
        raise CommandError("--count must be >= 1")
    cfg = SyntheticConfig(
        streaming_fraction=args.streaming_fraction, with_depictions=args.with_depictions
    )
    corpus = generate_synthetic_corpus(derive_seed(args.seed, "synth-data", "clips"), args.count, cfg)
    for entry in corpus.manifest:
        validate(entry.to_dict(), "manifest_entry")
    path = save_synthetic_corpus(corpus, args.out)
    logger.info("wrote %d clips and %s", args.count, path)
    return 0


def cmd_build_dataset(args) -> int:
    try:
        stages = [Stage(s.strip()) for s in args.stages.split(",") if s.strip()]
    except ValueError as exc:
        raise CommandError(str(exc)) from None
    if not stages:
        raise CommandError("--stages selects nothing")
    manifest = _load_manifest(args.manifest)
    pairs = build_corpus(
        manifest,
        stages,
        seed=derive_seed(args.seed, "build-dataset", "corpus"),
        target_count=args.target_count,
        stream_binary_fraction=args.stream_binary_fraction,
        system_mode=args.system_mode,
    )
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    n = write_corpus(pairs, args.out)
    logger.info("wrote %d instruction pairs to %s", n, args.out)
    return 0


def load_run_config(path: str) -> tuple[dict, Path]:
    p = _need_file(path, "config")
    try:
        config = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CommandError(f"{p}: invalid JSON: {exc}") from None
    try:
        validate(config, "run_config")
    except ValueError as exc:
        raise CommandError(str(exc)) from None
    return config, p.parent


def _resolve(base: Path, path: str) -> Path:
    p = Path(path)
    return p if p.is_absolute() else base / p


def _hyperparams(config: dict) -> dict:
    raw = dict(config.get("hyperparams") or {})
    per_stage = raw.pop("per_stage", {}) or {}
    out = {"default": Hyperparams.from_dict(raw)}
    for name, over in per_stage.items():
        out[name] = Hyperparams.from_dict({**raw, **over})
    return out


def cmd_train(args) -> int:
    config, base = load_run_config(args.config)
    corpora = []
    for spec in config["stages"]:
        path = _resolve(base, spec["corpus"])
        if not path.is_file():
            raise CommandError(f"corpus not found: {path}")
        corpora.append((StageId(spec["stage"]), read_corpus(path)))
    try:
        hps = _hyperparams(config)
        seed = int(config.get("seed", 0))
        plan = CurriculumPlan(corpora, combine=config.get("combine", "sequential"), seed=seed)
        model_cfg = ModelConfig.from_dict(config.get("model") or {})
    except ValueError as exc:
        raise CommandError(str(exc)) from None

    out_dir = _resolve(base, config["out_dir"])
    try:
        digest = check_resume(out_dir, config)
    except ValueError as exc:
        raise CommandError(str(exc)) from None

    texts = [p.system_prompt + " " + p.question + " " + p.answer for _, c in corpora for p in c]
    texts += [
        render_system_prompt("score", 1, 1),
        render_system_prompt("understand", 1, 1),
        instruction_templates()["stage2_question"],
        DEFAULT_ANSWER_TEMPLATE,
    ]
    tokenizer = WordTokenizer.fit(texts)
    model_cfg.vocab_size = len(tokenizer)
    torch.manual_seed(derive_seed(seed, "train", "init"))
    model = MiniVQAModel(model_cfg)
    media_root = _resolve(base, config["media_root"]) if config.get("media_root") else base
    cache = MediaCache(model_cfg, media_root)

    checkpoints = run_curriculum(
        plan, model, tokenizer, hps, media=media_loader(cache), out_dir=out_dir, config_hash=digest
    )
    lineage = {name: ck.metadata for name, ck in checkpoints.items()}
    _write_json(lineage, out_dir / "lineage.json")
    logger.info("trained checkpoints %s in %s", sorted(checkpoints), out_dir)
    return 0


def _media_for_manifest(ckpt: Checkpoint, root: Path):
    cache = MediaCache(ckpt.config, root)
    return lambda entry: cache.get(entry.media_ref, entry.frame_rate)


def _checkpoint(path: str) -> Checkpoint:
    p = _need_file(path, "checkpoint")
    try:
        return load_checkpoint(p)
    except (ValueError, RuntimeError, KeyError) as exc:
        raise CommandError(f"{p}: {exc}") from None


def cmd_score(args) -> int:
    manifest = _load_manifest(args.manifest)
    ckpt = _checkpoint(args.checkpoint)
    root = Path(args.media_root) if args.media_root else Path(args.manifest).parent
    result = score_manifest(ckpt.model, ckpt.tokenizer, manifest, _media_for_manifest(ckpt, root))
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_scores(result.rows, args.out)
    if result.failures:
        logger.warning("%d of %d videos failed to score", len(result.failures), len(manifest))
    if not result.rows:
        raise CommandError("no video could be scored")
    logger.info("scored %d videos into %s", len(result.rows), args.out)
    return 0


def cmd_eval_scoring(args) -> int:
    if (args.checkpoint is None) == (args.predictions is None):
        raise CommandError("give exactly one of --checkpoint or --predictions")
    manifest = _load_manifest(args.data)
    labeled = [e for e in manifest if e.mos is not None]
    if len(labeled) < 3:
        raise CommandError("need at least 3 entries with MOS labels")
    labels = LabeledScoreSet([e.id for e in labeled], [normalize_mos(e.mos) for e in labeled])
    if args.predictions is not None:
        preds = {r["video_id"]: r["score"] for r in read_scores(_need_file(args.predictions, "predictions"))}
        scorer = preds.__getitem__
    else:
        ckpt = _checkpoint(args.checkpoint)
        root = Path(args.media_root) if args.media_root else Path(args.data).parent
        media = _media_for_manifest(ckpt, root)
        by_id = {e.id: e for e in labeled}
        def scorer(vid):
            e = by_id[vid]
            return score_video(ckpt.model, ckpt.tokenizer, e, media(e)).value

    report = evaluate_scoring(scorer, labels, logistic=args.logistic)
    doc = {"task": "scoring", **report.to_dict()}
    for key in ("srcc", "plcc"):
        if doc[key] != doc[key]:  # NaN is not valid JSON
            doc[key] = None
    validate(doc, "eval_report")
    _write_json(doc, args.out)
    logger.info("srcc %.4f plcc %.4f over %d videos", report.srcc, report.plcc, report.n)
    return 0


def _judge(spec: str | None, record: str | None):
    judge = None
    if spec is None or spec == "none":
        judge = None
    elif spec.startswith("stub"):
        default = spec.split(":", 1)[1] if ":" in spec else "correct"
        judge = StubJudge(default)
    elif spec.startswith("replay:"):
        judge = ReplayJudge(_need_file(spec.split(":", 1)[1], "replay file"))
    elif spec.startswith("http://") or spec.startswith("https://"):
        judge = HttpJudge(spec)
    else:
        raise CommandError(f"unknown judge {spec!r}; use none, stub[:verdict], replay:PATH or a URL")
    if record and judge is not None:
        judge = RecordingJudge(judge, record)
    return judge


def cmd_eval_understanding(args) -> int:
    data = _need_file(args.data, "benchmark")
    ingested = read_benchmark(data)
    judge = _judge(args.judge, args.record)
    ckpt = _checkpoint(args.checkpoint)
    root = Path(args.media_root) if args.media_root else data.parent

    def media(item):
        if not item.video:
            return None
        frames = load_frames(root / item.video)
        return preprocess_clip(frames, item.fps or 1.0, ckpt.config)

    answer = model_answerer(ckpt.model, ckpt.tokenizer, media, max_tokens=args.max_tokens)
    report = evaluate_understanding(answer, ingested.items, judge, ingested.skipped_multi_video)
    doc = {"task": "understanding", **report.to_dict()}
    validate(doc, "eval_report")
    _write_json(doc, args.out)
    Path(args.out).with_suffix(".txt").write_text(report.to_table() + "\n", encoding="utf-8")
    logger.info("\n%s", report.to_table())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vqakit", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--log-level", default="INFO")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="generate a synthetic corpus and manifest")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--streaming-fraction", type=float, default=0.0)
    p.add_argument("--with-depictions", action="store_true")
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("build-dataset", help="build a JSON-lines instruction corpus")
    p.add_argument("--manifest", required=True)
    p.add_argument("--stages", default=",".join(s.value for s in Stage))
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--target-count", type=int)
    p.add_argument("--stream-binary-fraction", type=float, default=0.5)
    p.add_argument("--system-mode", choices=("train", "score", "understand"), default="train")
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("train", help="run the curriculum described by a run config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="batch-score a manifest")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--media-root")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval-scoring", help="SRCC/PLCC of a scorer against MOS labels")
    p.add_argument("--checkpoint")
    p.add_argument("--predictions", help="JSON-lines scores from the score command")
    p.add_argument("--data", required=True, help="manifest with MOS labels")
    p.add_argument("--out", required=True)
    p.add_argument("--media-root")
    p.add_argument("--logistic", action="store_true", help="fit a 4-parameter logistic before PLCC")
    p.set_defaults(func=cmd_eval_scoring)

    p = sub.add_parser("eval-understanding", help="category accuracy on a question benchmark")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="JSON-lines benchmark items")
    p.add_argument("--judge", default="none", help="none, stub[:verdict], replay:PATH or URL")
    p.add_argument("--record", help="append judge exchanges to this replay file")
    p.add_argument("--out", required=True)
    p.add_argument("--media-root")
    p.add_argument("--max-tokens", type=int, default=32)
    p.set_defaults(func=cmd_eval_understanding)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (CommandError, ValueError, OSError, KeyError) as exc:
        line = {
            "status": "error",
            "command": args.command,
            "error": type(exc).__name__,
            "message": str(exc),
        }
        print(json.dumps(line), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
