import json
import subprocess
import sys

import numpy as np
import pytest

from model_checks import TINY
from vqakit.cli import build_parser, main
from vqakit.data.corpus import read_corpus, read_manifest
from vqakit.model.checkpoint import load_checkpoint
from vqakit.model.media import MediaCache
from vqakit.schemas import validate
from vqakit.scoring import read_scores, score_video

SUBCOMMANDS = ["synth-data", "build-dataset", "train", "score", "eval-scoring", "eval-understanding"]


def run(*argv):
    return main([str(a) for a in argv])


def error_line(capsys) -> dict:
    lines = [l for l in capsys.readouterr().err.splitlines() if l.startswith("{")]
    assert len(lines) == 1
    return json.loads(lines[0])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Synthetic data, a stage-2 corpus and a tiny trained run shared by the tests."""
    root = tmp_path_factory.mktemp("cli")
    assert run("synth-data", "--seed", 2, "--count", 8, "--out", root / "data", "--with-depictions") == 0
    manifest = root / "data" / "manifest.jsonl"
    for stages, name in (("S1_spatial", "s1.jsonl"), ("S2_ugc", "s2.jsonl")):
        assert run("build-dataset", "--manifest", manifest, "--stages", stages, "--out", root / name) == 0
    config = {
        "stages": [
            {"stage": "S1_spatial_image", "corpus": "s1.jsonl"},
            {"stage": "S2_ugc", "corpus": "s2.jsonl"},
        ],
        "seed": 1,
        "media_root": "data",
        "out_dir": "run",
        "model": {**TINY, "max_seq_len": 512},
        "hyperparams": {"lr_max": 1e-3, "batch_videos": 4, "epochs": 1},
    }
    (root / "config.json").write_text(json.dumps(config))
    assert run("train", "--config", root / "config.json") == 0
    return root


def test_every_subcommand_is_registered():
    parser = build_parser()
    choices = parser._subparsers._group_actions[0].choices
    assert sorted(choices) == sorted(SUBCOMMANDS)


def test_console_module_runs():
    out = subprocess.run(
        [sys.executable, "-m", "vqakit.cli", "--help"], capture_output=True, text=True, check=True
    )
    for name in SUBCOMMANDS:
        assert name in out.stdout


# ---- synth-data -------------------------------------------------------------


def test_synth_data_deterministic_and_valid(tmp_path):
    for name in ("a", "b"):
        assert run("synth-data", "--seed", 5, "--count", 4, "--out", tmp_path / name) == 0
    a = (tmp_path / "a" / "manifest.jsonl").read_bytes()
    assert a == (tmp_path / "b" / "manifest.jsonl").read_bytes()
    entries = [json.loads(l) for l in a.decode().splitlines()]
    assert len(entries) == 4
    for e in entries:
        validate(e, "manifest_entry")
        clip_a = np.load(tmp_path / "a" / e["media_ref"])
        assert np.array_equal(clip_a, np.load(tmp_path / "b" / e["media_ref"]))
    assert run("synth-data", "--seed", 6, "--count", 4, "--out", tmp_path / "c") == 0
    assert (tmp_path / "c" / "manifest.jsonl").read_bytes() != a


def test_synth_data_rejects_zero_count(tmp_path, capsys):
    assert run("synth-data", "--count", 0, "--out", tmp_path) == 1
    assert error_line(capsys)["command"] == "synth-data"


# ---- build-dataset ----------------------------------------------------------


def test_build_dataset_count_law_for_one_depiction(tmp_path):
    run("synth-data", "--count", 1, "--with-depictions", "--out", tmp_path)
    assert run("build-dataset", "--manifest", tmp_path / "manifest.jsonl", "--stages", "S3", "--out", tmp_path / "s3.jsonl") == 0
    pairs = read_corpus(tmp_path / "s3.jsonl")
    assert len(pairs) == 6
    assert {p.stage.value for p in pairs} == {"S3"}


def test_build_dataset_is_byte_stable_and_filters(workspace, tmp_path):
    manifest = workspace / "data" / "manifest.jsonl"
    for name in ("x.jsonl", "y.jsonl"):
        run("build-dataset", "--manifest", manifest, "--seed", 4, "--out", tmp_path / name)
    assert (tmp_path / "x.jsonl").read_bytes() == (tmp_path / "y.jsonl").read_bytes()
    assert {p.stage.value for p in read_corpus(workspace / "s2.jsonl")} == {"S2_ugc"}
    stages = {p.stage.value for p in read_corpus(tmp_path / "x.jsonl")}
    assert {"S1_spatial", "S1_motion", "S2_ugc", "S3"} <= stages


def test_build_dataset_errors(tmp_path, capsys):
    assert run("build-dataset", "--manifest", tmp_path / "missing.jsonl", "--out", tmp_path / "o") == 1
    assert error_line(capsys)["error"] == "CommandError"
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"id": "x"}\n')
    assert run("build-dataset", "--manifest", bad, "--out", tmp_path / "o") == 1
    assert "bad.jsonl:1" in error_line(capsys)["message"]
    good = tmp_path / "good"
    run("synth-data", "--count", 1, "--out", good)
    assert run("build-dataset", "--manifest", good / "manifest.jsonl", "--stages", "S9", "--out", tmp_path / "o") == 1
    error_line(capsys)


# ---- train ------------------------------------------------------------------


def test_train_writes_checkpoints_and_lineage(workspace):
    lineage = json.loads((workspace / "run" / "lineage.json").read_text())
    assert set(lineage) == {"pretrained", "ugc_scorer"}
    assert lineage["ugc_scorer"]["parent"] == "pretrained"
    assert lineage["pretrained"]["stages"] == ["S1_spatial_image"]
    assert (workspace / "run" / "ugc_scorer.pt").is_file()
    metrics = (workspace / "run" / "metrics.jsonl").read_text().splitlines()
    assert metrics and all("loss" in json.loads(l) for l in metrics)


def test_train_resumes_same_config_and_refuses_changed_one(workspace, capsys):
    before = (workspace / "run" / "ugc_scorer.pt").read_bytes()
    assert run("train", "--config", workspace / "config.json") == 0
    assert (workspace / "run" / "ugc_scorer.pt").read_bytes() == before
    config = json.loads((workspace / "config.json").read_text())
    config["seed"] = 2
    changed = workspace / "changed.json"
    changed.write_text(json.dumps(config))
    assert run("train", "--config", changed) == 1
    line = error_line(capsys)
    assert line["status"] == "error" and "refusing" in line["message"]


def test_train_rejects_invalid_config(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"stages": [], "out_dir": "o"}))
    assert run("train", "--config", cfg) == 1
    error_line(capsys)
    cfg.write_text(json.dumps({"stages": [{"stage": "S2_ugc", "corpus": "none.jsonl"}], "out_dir": "o"}))
    assert run("train", "--config", cfg) == 1
    assert "corpus not found" in error_line(capsys)["message"]


# ---- score and eval-scoring -------------------------------------------------


def test_score_matches_library_call(workspace, tmp_path):
    manifest = workspace / "data" / "manifest.jsonl"
    ckpt_path = workspace / "run" / "ugc_scorer.pt"
    assert run("score", "--checkpoint", ckpt_path, "--manifest", manifest, "--out", tmp_path / "s.jsonl") == 0
    rows = read_scores(tmp_path / "s.jsonl")
    ckpt = load_checkpoint(ckpt_path)
    cache = MediaCache(ckpt.config, workspace / "data")
    entries = read_manifest(manifest)
    assert [r["video_id"] for r in rows] == [e.id for e in entries]
    for row, e in zip(rows, entries):
        expected = score_video(ckpt.model, ckpt.tokenizer, e, cache.get(e.media_ref, e.frame_rate))
        assert row["score"] == expected.value


def test_eval_scoring_with_perfect_predictions(workspace, tmp_path):
    manifest = workspace / "data" / "manifest.jsonl"
    preds = tmp_path / "p.jsonl"
    with open(preds, "w") as fh:
        for e in read_manifest(manifest):
            fh.write(json.dumps({"video_id": e.id, "score": e.mos.value}) + "\n")
    assert run("eval-scoring", "--predictions", preds, "--data", manifest, "--out", tmp_path / "r.json") == 0
    doc = json.loads((tmp_path / "r.json").read_text())
    validate(doc, "eval_report")
    assert doc["srcc"] == pytest.approx(1.0) and doc["plcc"] == pytest.approx(1.0)
    assert doc["n"] == 8


def test_eval_scoring_from_checkpoint(workspace, tmp_path):
    manifest = workspace / "data" / "manifest.jsonl"
    out = tmp_path / "r.json"
    assert run("eval-scoring", "--checkpoint", workspace / "run" / "ugc_scorer.pt", "--data", manifest, "--out", out) == 0
    doc = json.loads(out.read_text())
    validate(doc, "eval_report")
    assert doc["task"] == "scoring" and doc["failures"] == 0


def test_eval_scoring_needs_exactly_one_source(workspace, tmp_path, capsys):
    manifest = workspace / "data" / "manifest.jsonl"
    assert run("eval-scoring", "--data", manifest, "--out", tmp_path / "r.json") == 1
    assert "exactly one" in error_line(capsys)["message"]


# ---- eval-understanding -----------------------------------------------------


@pytest.fixture
def benchmark(workspace, tmp_path):
    entries = read_manifest(workspace / "data" / "manifest.jsonl")
    items = [
        {"id": "b1", "question": "Is the video blurry?", "reference_answer": "Yes",
         "qtype": "Binary", "concern": "Tech", "video": entries[0].media_ref, "fps": entries[0].frame_rate},
        {"id": "m1", "question": "Which distortion appears?", "reference_answer": "A",
         "options": ["A. noise", "B. flicker"], "qtype": "Multi", "concern": "Temp",
         "video": entries[1].media_ref, "fps": entries[1].frame_rate},
        {"id": "o1", "question": "Describe the quality.", "reference_answer": "It is poor.",
         "qtype": "Open", "concern": "Other", "video": entries[2].media_ref, "fps": entries[2].frame_rate},
        {"id": "pair", "question": "Which is better?", "reference_answer": "first",
         "qtype": "Open", "concern": "Other", "video": ["a.npy", "b.npy"]},
    ]
    path = tmp_path / "bench.jsonl"
    path.write_text("".join(json.dumps(i) + "\n" for i in items))
    return path


def understanding(workspace, bench, out, *extra):
    return run(
        "eval-understanding", "--checkpoint", workspace / "run" / "ugc_scorer.pt", "--data", bench,
        "--media-root", workspace / "data", "--out", out, "--max-tokens", 6, *extra,
    )


def test_eval_understanding_with_stub_judge(workspace, benchmark, tmp_path):
    out = tmp_path / "u.json"
    assert understanding(workspace, benchmark, out, "--judge", "stub:correct") == 0
    doc = json.loads(out.read_text())
    validate(doc, "eval_report")
    assert doc["skipped"] == 1
    assert doc["qtype"]["Open"]["total"] == 1 and doc["qtype"]["Open"]["correct"] == 1
    assert out.with_suffix(".txt").read_text().strip()


def test_eval_understanding_without_judge_is_partial(workspace, benchmark, tmp_path):
    out = tmp_path / "u.json"
    assert understanding(workspace, benchmark, out, "--judge", "none") == 0
    doc = json.loads(out.read_text())
    validate(doc, "eval_report")
    assert doc["partial"] is True and doc["overall"]["ungraded"] >= 1


def test_recorded_judge_replays_identically(workspace, benchmark, tmp_path):
    record = tmp_path / "judge.jsonl"
    first, second = tmp_path / "first.json", tmp_path / "second.json"
    assert understanding(workspace, benchmark, first, "--judge", "stub:partial", "--record", record) == 0
    assert record.read_text().strip()
    assert understanding(workspace, benchmark, second, "--judge", f"replay:{record}") == 0
    assert json.loads(first.read_text()) == json.loads(second.read_text())


def test_unknown_judge_is_an_error(workspace, benchmark, tmp_path, capsys):
    assert understanding(workspace, benchmark, tmp_path / "u.json", "--judge", "oracle") == 1
    assert "unknown judge" in error_line(capsys)["message"]
