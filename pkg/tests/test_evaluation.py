import json
import threading
import time
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import covariance_pearson, pearson, rank_then_pearson, spearman
from vqakit.evaluation import (
    BenchmarkItem,
    HttpJudge,
    LabeledScoreSet,
    RecordingJudge,
    ReplayJudge,
    StubJudge,
    UndefinedCorrelationWarning,
    Verdict,
    evaluate_scoring,
    evaluate_understanding,
    grade_item,
    match_option,
    model_answerer,
    plcc,
    rankdata_average,
    read_benchmark,
    srcc,
)

# ---- correlation metrics -------------------------------------------------


def test_fixed_cases():
    assert abs(srcc([1, 2, 3], [10, 20, 30]) - 1.0) < 1e-9
    assert abs(srcc([1, 2, 3], [3, 2, 1]) + 1.0) < 1e-9
    x = np.array([0.3, 1.7, 2.2, 5.0])
    assert abs(plcc(x, x) - 1.0) < 1e-9
    assert abs(plcc(x, -2 * x + 5) + 1.0) < 1e-9
    assert abs(plcc([1, 2, 3, 4], [1, 3, 2, 4]) - 0.8) < 1e-9
    assert abs(covariance_pearson([1, 2, 3, 4], [1, 3, 2, 4]) - 0.8) < 1e-12


def test_ranks_average_ties():
    assert rankdata_average([10, 20, 20, 30]).tolist() == [1, 2.5, 2.5, 4]


def test_random_pairs_with_ties_match_oracles():
    rng = np.random.default_rng(0)
    for k in range(200):
        n = int(rng.integers(3, 40))
        # coarse rounding produces plenty of ties
        x = np.round(rng.normal(size=n), 1 if k % 2 else 3)
        y = np.round(0.5 * x + rng.normal(size=n), 1)
        if np.ptp(x) == 0 or np.ptp(y) == 0:
            continue
        assert abs(srcc(x, y) - spearman(x, y)) < 1e-9
        assert abs(srcc(x, y) - rank_then_pearson(x, y)) < 1e-9
        assert abs(plcc(x, y) - pearson(x, y)) < 1e-9


# integer-valued draws keep ties common and monotone maps exact in floating point
vectors = st.lists(st.integers(-1000, 1000), min_size=3, max_size=30)


@given(vectors, st.data())
def test_metric_invariances(x, data):
    y = data.draw(st.lists(st.integers(-1000, 1000), min_size=len(x), max_size=len(x)))
    x, y = np.array(x, dtype=float), np.array(y, dtype=float)
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        return
    s, p = srcc(x, y), plcc(x, y)
    assert -1.0 <= s <= 1.0 and -1.0 <= p <= 1.0
    assert srcc(y, x) == pytest.approx(s, abs=1e-12)
    assert plcc(y, x) == pytest.approx(p, abs=1e-12)
    # strictly monotone transform keeps ranks
    assert srcc(x**3 + 5.0, y) == pytest.approx(s, abs=1e-9)
    assert srcc(x, -np.exp(-y / 1000.0)) == pytest.approx(s, abs=1e-9)
    assert plcc(3.0 * x + 11.0, y) == pytest.approx(p, abs=1e-9)


def test_constant_input_is_undefined():
    with pytest.warns(UndefinedCorrelationWarning):
        assert np.isnan(srcc([1, 1, 1], [1, 2, 3]))
    with pytest.warns(UndefinedCorrelationWarning):
        assert np.isnan(plcc([1, 2, 3], [4, 4, 4]))


def test_metric_input_checks():
    with pytest.raises(ValueError):
        srcc([1, 2], [1, 2])
    with pytest.raises(ValueError):
        plcc([1, 2, 3], [1, 2])
    with pytest.raises(ValueError):
        plcc([1, 2, np.nan], [1, 2, 3])


def test_logistic_plcc_improves_monotone_fit():
    x = np.linspace(-3, 3, 30)
    y = 1 / (1 + np.exp(-2 * x))
    assert plcc(x, y, logistic=True) > plcc(x, y)
    assert plcc(x, y, logistic=True) == pytest.approx(1.0, abs=1e-6)


# ---- evaluate_scoring ----------------------------------------------------


def test_perfect_and_reversed_predictions():
    labeled = LabeledScoreSet(("a", "b", "c", "d"), (1.0, 2.5, 3.0, 4.5))
    table = dict(zip(labeled.ids, labeled.labels))
    report = evaluate_scoring(table.__getitem__, labeled)
    assert report.srcc == pytest.approx(1.0) and report.plcc == pytest.approx(1.0)
    assert evaluate_scoring(lambda i: -table[i], labeled).srcc == pytest.approx(-1.0)


def test_scoring_failures_are_counted():
    labeled = LabeledScoreSet(("a", "b", "c", "d", "e"), (1, 2, 3, 4, 5))

    def scorer(vid):
        if vid == "c":
            raise OSError("unreadable")
        return {"a": 0.1, "b": 0.2, "d": 0.4, "e": float("nan")}[vid]

    report = evaluate_scoring(scorer, labeled)
    assert report.failures == 2 and report.failed_ids == ["c", "e"] and report.n == 3
    assert report.srcc == pytest.approx(1.0)
    with pytest.raises(ValueError):
        evaluate_scoring(lambda v: 1.0 if v in "ab" else float("inf"), labeled)


def test_labeled_set_validation():
    with pytest.raises(ValueError):
        LabeledScoreSet(("a", "b"), (1, 2))
    with pytest.raises(ValueError):
        LabeledScoreSet(("a", "a", "b"), (1, 2, 3))


# ---- option matching and grading -----------------------------------------


def test_match_option():
    opts = ("A. Sharp", "B. Blurry", "C. Noisy")
    assert match_option("B", opts) == 1
    assert match_option("The answer is C.", opts) == 2
    assert match_option("It looks blurry to me", opts) == 1
    assert match_option("A or B", opts) is None
    assert match_option("yes", ("Yes", "No")) == 0
    assert match_option("something else", opts) is None


def item(id, qtype, concern, ref, options=None, question="q?"):
    return BenchmarkItem(id, question, ref, qtype, concern, f"{id}.npy", options)


def test_verbatim_binary_needs_no_judge():
    r = grade_item(item("1", "Binary", "Tech", "Yes"), "Yes", judge=None)
    assert r.verdict is Verdict.CORRECT and r.graded_by == "option"


def test_open_without_judge_is_ungraded_and_partial():
    report = evaluate_understanding(lambda it: "blurry", [item("1", "Open", "Tech", "blur")], judge=None)
    assert report.partial and report.overall()["ungraded"] == 1
    assert report.overall()["accuracy"] is None


def test_always_correct_stub():
    items = [item("1", "Open", "Tech", "x"), item("2", "Multi", "Temp", "A", ("A. a", "B. b"))]
    report = evaluate_understanding(lambda it: "unmatched words", items, StubJudge("correct"))
    assert report.overall()["accuracy"] == 1.0
    assert all(c["accuracy"] in (None, 1.0) for c in report.by_qtype().values())


def ten_item_fixture():
    """Ten items whose grades were worked out by hand (see expected values below)."""
    ab = ("A. Good", "B. Poor")
    abc = ("A. Smooth", "B. Stuttering", "C. Frozen")
    items = [
        item("1", "Binary", "Tech", "Yes"),
        item("2", "Binary", "Temp", "No"),
        item("3", "Binary", "Other", "Yes"),
        item("4", "Multi", "Tech", "B. Poor", ab),
        item("5", "Multi", "Temp", "A", abc),
        item("6", "Multi", "Other", "C", abc),
        item("7", "Open", "Tech", "blur"),
        item("8", "Open", "Temp", "stalls at 3s"),
        item("9", "Open", "Other", "bright"),
        item("10", "Multi", "Tech", "A", ab),
    ]
    responses = {
        "1": "Yes",  # option match, correct
        "2": "Yes",  # option match, wrong
        "3": "I cannot tell",  # no unique option -> judge: partial
        "4": "B",  # correct
        "5": "B. Stuttering",  # wrong
        "6": "A or C",  # ambiguous -> judge: correct
        "7": "r7",  # judge: correct
        "8": "r8",  # judge: partial
        "9": "r9",  # judge: wrong
        "10": "A",  # correct
    }
    judge = StubJudge(
        default="wrong",
        script={"I cannot tell": "partial", "A or C": "correct", "r7": "correct", "r8": "partial"},
    )
    return items, responses, judge


def test_hand_graded_fixture():
    items, responses, judge = ten_item_fixture()
    report = evaluate_understanding(lambda it: responses[it.id], items, judge)
    q, c, o = report.by_qtype(), report.by_concern(), report.overall()
    assert (q["Binary"]["correct"], q["Binary"]["total"]) == (1.5, 3)
    assert (q["Multi"]["correct"], q["Multi"]["total"]) == (3.0, 4)
    assert (q["Open"]["correct"], q["Open"]["total"]) == (1.5, 3)
    assert (c["Tech"]["correct"], c["Tech"]["total"]) == (4.0, 4)
    assert (c["Temp"]["correct"], c["Temp"]["total"]) == (0.5, 3)
    assert (c["Other"]["correct"], c["Other"]["total"]) == (1.5, 3)
    assert o == {"correct": 6.0, "total": 10, "ungraded": 0, "accuracy": 0.6}
    assert not report.partial
    by = {r.id: r.graded_by for r in report.items}
    assert [by[k] for k in ("1", "3", "6", "7")] == ["option", "judge", "judge", "judge"]


def test_report_consistency_and_table():
    items, responses, judge = ten_item_fixture()
    report = evaluate_understanding(lambda it: responses[it.id], items, judge, skipped=2)
    total = report.overall()["correct"]
    assert sum(v["correct"] for v in report.by_qtype().values()) == total
    assert sum(v["correct"] for v in report.by_concern().values()) == total
    assert sum(v["total"] for v in report.by_qtype().values()) == report.overall()["total"]
    table = report.to_table()
    assert "Binary" in table and "Overall" in table and "60.00%" in table
    assert json.loads(report.to_json())["skipped"] == 2


# ---- judges ----------------------------------------------------------------


def test_replay_judge_reproduces_recorded_run(tmp_path):
    items, responses, judge = ten_item_fixture()
    log = tmp_path / "judge.jsonl"
    first = evaluate_understanding(lambda it: responses[it.id], items, RecordingJudge(judge, log))
    replayed = [
        evaluate_understanding(lambda it: responses[it.id], items, ReplayJudge(log)).to_json()
        for _ in range(2)
    ]
    assert replayed[0] == replayed[1] == first.to_json()


def test_replay_judge_missing_entry_is_ungraded(tmp_path):
    log = tmp_path / "empty.jsonl"
    log.write_text("")
    assert ReplayJudge(log).grade("q", "r", "x").verdict is Verdict.UNGRADED


class _Handler(BaseHTTPRequestHandler):
    delay = 0.0

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        time.sleep(self.delay)
        verdict = "correct" if body["response"] == body["reference"] else "wrong"
        payload = json.dumps({"verdict": verdict, "rationale": "server"}).encode()
        try:
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.end_headers()
            self.wfile.write(payload)
        except (BrokenPipeError, ConnectionResetError):
            pass

    def log_message(self, *args):
        pass


@pytest.fixture
def judge_server():
    servers = []

    def start(delay):
        handler = type("H", (_Handler,), {"delay": delay})
        server = HTTPServer(("127.0.0.1", 0), handler)
        threading.Thread(target=server.serve_forever, daemon=True).start()
        servers.append(server)
        return f"http://127.0.0.1:{server.server_address[1]}/grade"

    yield start
    for s in servers:
        s.shutdown()
        s.server_close()


def test_http_judge_round_trip(judge_server):
    judge = HttpJudge(judge_server(0.0), timeout=5)
    assert judge.grade("q", "blur", "blur").verdict is Verdict.CORRECT
    assert judge.grade("q", "blur", "noise").verdict is Verdict.WRONG


def test_http_judge_timeout_is_ungraded(judge_server):
    waits = []
    judge = HttpJudge(judge_server(1.0), timeout=0.1, retries=3, backoff=0.5, max_backoff=1.0,
                      sleep=waits.append)
    items = [item("1", "Open", "Tech", "blur")]
    report = evaluate_understanding(lambda it: "blur", items, judge)
    assert report.overall()["ungraded"] == 1 and report.partial
    assert waits == [0.5, 1.0, 1.0]


# ---- ingestion and model answers -----------------------------------------


def test_read_benchmark_skips_multi_video(tmp_path):
    path = tmp_path / "bench.jsonl"
    rows = [
        {"id": "1", "question": "q", "reference_answer": "Yes", "qtype": "Binary", "concern": "Tech", "video": "a.npy"},
        {"id": "2", "question": "q", "reference_answer": "A", "qtype": "Multi", "concern": "Temp",
         "video": ["a.npy", "b.npy"], "options": ["A. x", "B. y"]},
        {"id": "3", "question": "q", "reference_answer": "x", "qtype": "Open", "concern": "Other", "video": ["c.npy"]},
    ]
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    got = read_benchmark(path)
    assert [i.id for i in got.items] == ["1", "3"] and got.skipped_multi_video == 1
    assert got.items[1].video == "c.npy"


def test_multi_item_needs_options():
    with pytest.raises(ValueError):
        item("x", "Multi", "Tech", "A", ("A. only",))


def test_model_answerer_is_deterministic(tiny_setup, small_synthetic):
    model, tok, cache = tiny_setup
    e = small_synthetic.manifest[0]
    bench = [BenchmarkItem("1", "How is the sharpness?", "Yes", "Binary", "Tech", e.media_ref, fps=e.frame_rate)]
    answer = model_answerer(model, tok, lambda it: cache.get(it.video, it.fps), max_tokens=4)
    a = evaluate_understanding(answer, bench, StubJudge("wrong")).to_json()
    b = evaluate_understanding(answer, bench, StubJudge("wrong")).to_json()
    assert a == b
