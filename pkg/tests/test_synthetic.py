import hashlib

import numpy as np
import pytest

from vqakit.data.corpus import read_manifest
from vqakit.data.synthetic import SyntheticConfig, generate_synthetic_corpus, proxy_mos
from vqakit.data.types import VideoKind
from vqakit.schemas import validate


def digest(directory):
    h = hashlib.sha256()
    for path in sorted(directory.rglob("*")):
        if path.is_file():
            h.update(str(path.relative_to(directory)).encode())
            h.update(path.read_bytes())
    return h.hexdigest()


def test_clean_clip_scores_scale_max():
    corpus = generate_synthetic_corpus(0, 3, SyntheticConfig(magnitude=0.0))
    assert all(e.mos.value == 5.0 for e in corpus.manifest)
    assert all(not e.distortions for e in corpus.manifest)


def test_full_distortion_scores_scale_min():
    corpus = generate_synthetic_corpus(0, 3, SyntheticConfig(magnitude=1.0))
    assert all(e.mos.value == 1.0 for e in corpus.manifest)
    assert all(e.distortions for e in corpus.manifest)


def test_proxy_mos_is_monotone_decreasing():
    values = [proxy_mos(m) for m in np.linspace(0, 1, 101)]
    assert all(a >= b for a, b in zip(values, values[1:]))
    assert values[0] == 5.0 and values[-1] == 1.0


def test_same_seed_is_byte_identical(tmp_path):
    cfg = SyntheticConfig(streaming_fraction=0.5, with_depictions=True)
    generate_synthetic_corpus(4, 6, cfg, out_dir=tmp_path / "a")
    generate_synthetic_corpus(4, 6, cfg, out_dir=tmp_path / "b")
    generate_synthetic_corpus(5, 6, cfg, out_dir=tmp_path / "c")
    assert digest(tmp_path / "a") == digest(tmp_path / "b")
    assert digest(tmp_path / "a") != digest(tmp_path / "c")


def test_written_manifest_reads_back_and_validates(tmp_path):
    corpus = generate_synthetic_corpus(2, 5, SyntheticConfig(streaming_fraction=0.5), out_dir=tmp_path)
    entries = read_manifest(tmp_path / "manifest.jsonl")
    assert entries == corpus.manifest
    for e in entries:
        validate(e.to_dict(), "manifest_entry")
        frames = np.load(tmp_path / e.media_ref)
        assert frames.dtype == np.uint8
        assert frames.shape[0] == round(e.duration * e.frame_rate)


def test_streaming_clips_carry_traces():
    corpus = generate_synthetic_corpus(1, 20, SyntheticConfig(streaming_fraction=1.0))
    for e in corpus.manifest:
        assert e.kind is VideoKind.STREAMING_VIDEO
        assert len(e.stalling.flags) == corpus.clips[e.id].shape[0]


def test_depictions_agree_with_mos(small_synthetic):
    for e in small_synthetic.manifest:
        (dep,) = e.annotations
        assert dep.free_text.endswith(f"the quality of the video is {dep.reference_level.word}.")


def test_rejects_empty_request():
    with pytest.raises(ValueError):
        generate_synthetic_corpus(0, 0)
