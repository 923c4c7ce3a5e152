"""Correlation metrics for scoring, category accuracy for understanding, and
the judge clients used to grade free-form answers."""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import os
import re
import threading
import time
import urllib.error
import urllib.request
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Protocol, Sequence

import numpy as np

from .utils.validation import check_array_1d, check_consistent_length, check_finite

logger = logging.getLogger(__name__)


class UndefinedCorrelationWarning(UserWarning):
    """A correlation was requested for a constant input."""


def rankdata_average(x) -> np.ndarray:
    """1-based ranks with ties sharing the mean of the ranks they span."""
    x = check_array_1d(x)
    order = np.argsort(x, kind="mergesort")
    sorted_x = x[order]
    ranks = np.empty(len(x), dtype=np.float64)
    i = 0
    n = len(x)
    while i < n:
        j = i
        while j + 1 < n and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _prepare(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = check_finite(check_array_1d(x, "x"), "x")
    y = check_finite(check_array_1d(y, "y"), "y")
    check_consistent_length(x, y, min_length=3)
    return x, y


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    dx = x - x.mean()
    dy = y - y.mean()
    sx = np.sqrt(np.dot(dx, dx))
    sy = np.sqrt(np.dot(dy, dy))
    if sx == 0.0 or sy == 0.0:
        warnings.warn(
            "correlation is undefined for a constant input", UndefinedCorrelationWarning, stacklevel=3
        )
        return float("nan")
    r = float(np.dot(dx, dy) / (sx * sy))
    return max(-1.0, min(1.0, r))


def logistic4(x, beta1, beta2, beta3, beta4):
    return (beta1 - beta2) / (1.0 + np.exp(-(x - beta3) / np.abs(beta4))) + beta2


def fit_logistic4(pred, target) -> np.ndarray:
    """Map predictions onto the target scale with the 4-parameter logistic."""
    from scipy.optimize import curve_fit

    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    p0 = [target.max(), target.min(), float(np.mean(pred)), float(np.std(pred)) or 1.0]
    params, _ = curve_fit(logistic4, pred, target, p0=p0, maxfev=20000)
    return logistic4(pred, *params)


def srcc(x, y) -> float:
    """Spearman correlation: Pearson on average ranks. NaN when undefined."""
    x, y = _prepare(x, y)
    return _pearson(rankdata_average(x), rankdata_average(y))


def plcc(x, y, logistic: bool = False) -> float:
    """Pearson correlation; ``logistic=True`` first fits ``x`` onto ``y``."""
    x, y = _prepare(x, y)
    if logistic:
        x = fit_logistic4(x, y)
    return _pearson(x, y)


@dataclass
class ScoringReport:
    srcc: float
    plcc: float
    n: int
    failures: int = 0
    failed_ids: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "srcc": self.srcc,
            "plcc": self.plcc,
            "n": self.n,
            "failures": self.failures,
            "failed_ids": list(self.failed_ids),
        }


@dataclass(frozen=True)
class LabeledScoreSet:
    ids: tuple
    labels: tuple

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "labels", tuple(float(v) for v in self.labels))
        check_consistent_length(self.ids, self.labels, min_length=3)
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("labeled set ids must be unique")


def evaluate_scoring(
    scorer: Callable[[object], float], labeled: LabeledScoreSet, logistic: bool = False
) -> ScoringReport:
    """Score every id and correlate against the labels; failing ids are skipped."""
    preds, labels, failed = [], [], []
    for vid, label in zip(labeled.ids, labeled.labels):
        try:
            value = float(scorer(vid))
            if not np.isfinite(value):
                raise ValueError("non-finite score")
        except Exception as exc:  # any scorer failure excludes the item
            logger.warning("scoring %s failed: %s", vid, exc)
            failed.append(vid)
            continue
        preds.append(value)
        labels.append(label)
    if len(preds) < 3:
        raise ValueError(f"only {len(preds)} items scored; need at least 3 for correlation")
    return ScoringReport(
        srcc=srcc(preds, labels),
        plcc=plcc(preds, labels, logistic=logistic),
        n=len(preds),
        failures=len(failed),
        failed_ids=failed,
    )


class QType(str, enum.Enum):
    BINARY = "Binary"
    MULTI = "Multi"
    OPEN = "Open"


class Concern(str, enum.Enum):
    TECH = "Tech"
    TEMP = "Temp"
    OTHER = "Other"


@dataclass(frozen=True)
class BenchmarkItem:
    id: str
    question: str
    reference_answer: str
    qtype: QType
    concern: Concern
    video: str
    options: Optional[tuple] = None
    fps: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "qtype", QType(self.qtype))
        object.__setattr__(self, "concern", Concern(self.concern))
        if self.options is not None:
            object.__setattr__(self, "options", tuple(self.options))
        if self.qtype is QType.MULTI and (self.options is None or len(self.options) < 2):
            raise ValueError(f"{self.id}: multiple-choice items need at least two options")

    @property
    def prompt(self) -> str:
        if not self.options:
            return self.question
        return self.question + " " + " ".join(self.options)


@dataclass
class Ingested:
    items: list
    skipped_multi_video: int = 0


def read_benchmark(path: str | os.PathLike) -> Ingested:
    """Load JSON-lines benchmark items, counting and skipping multi-video ones."""
    out = Ingested([])
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            rec = json.loads(line)
            video = rec.get("video")
            if isinstance(video, list):
                if len(video) != 1:
                    out.skipped_multi_video += 1
                    continue
                video = video[0]
            try:
                out.items.append(
                    BenchmarkItem(
                        id=str(rec.get("id", lineno)),
                        question=rec["question"],
                        reference_answer=rec["reference_answer"],
                        qtype=rec["qtype"],
                        concern=rec["concern"],
                        video=video,
                        options=rec.get("options"),
                        fps=rec.get("fps"),
                    )
                )
            except (KeyError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad benchmark item: {exc}") from exc
    if out.skipped_multi_video:
        logger.info("skipped %d multi-video items", out.skipped_multi_video)
    return out


def _norm(text: str) -> str:
    return " ".join(re.sub(r"[^\w\s]", " ", text.lower()).split())


_OPTION_PREFIX = re.compile(r"^\s*\(?([A-Za-z])[\.\):]\s*(.*)$")


def _split_option(option: str, index: int) -> tuple[str, str]:
    m = _OPTION_PREFIX.match(option)
    if m:
        return m.group(1).upper(), m.group(2)
    return chr(ord("A") + index), option


def match_option(text: str, options: Sequence[str]) -> Optional[int]:
    """Index of the single option ``text`` refers to, or None if not unique."""
    parsed = [_split_option(o, i) for i, o in enumerate(options)]
    hits = set()
    stripped = text.strip()
    for i, (letter, _) in enumerate(parsed):
        if re.search(rf"(?:^|[\s(]){letter}(?=[\.\):,;]|\s|$)", stripped) or stripped.upper() == letter:
            hits.add(i)
    norm = f" {_norm(text)} "
    for i, (_, body) in enumerate(parsed):
        body = _norm(body)
        if body and f" {body} " in norm:
            hits.add(i)
    return hits.pop() if len(hits) == 1 else None


class Verdict(str, enum.Enum):
    CORRECT = "correct"
    PARTIAL = "partial"
    WRONG = "wrong"
    UNGRADED = "ungraded"


CREDIT = {Verdict.CORRECT: 1.0, Verdict.PARTIAL: 0.5, Verdict.WRONG: 0.0}


@dataclass(frozen=True)
class Judgement:
    verdict: Verdict
    rationale: str = ""


class Judge(Protocol):
    def grade(self, question: str, reference: str, response: str) -> Judgement: ...


class StubJudge:
    """Deterministic judge for tests.

    ``script`` maps a response (or question) string to a verdict; anything
    unscripted gets ``default``.
    """

    def __init__(self, default: str = "correct", script: dict | None = None):
        self.default = Verdict(default)
        self.script = {k: Verdict(v) for k, v in (script or {}).items()}

    def grade(self, question, reference, response):
        for key in (response, question):
            if key in self.script:
                return Judgement(self.script[key], "scripted")
        return Judgement(self.default, "stub default")


def _request_key(question: str, reference: str, response: str) -> str:
    blob = json.dumps([question, reference, response], ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class ReplayJudge:
    """Grades from a recorded JSON-lines file of past judge exchanges."""

    def __init__(self, path: str | os.PathLike, missing: str = "ungraded"):
        self.records = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    rec = json.loads(line)
                    key = _request_key(rec["question"], rec["reference"], rec["response"])
                    self.records[key] = Judgement(Verdict(rec["verdict"]), rec.get("rationale", ""))
        self.missing = Verdict(missing)

    def grade(self, question, reference, response):
        return self.records.get(
            _request_key(question, reference, response),
            Judgement(self.missing, "no recorded response"),
        )


class RecordingJudge:
    """Wraps a judge and appends every exchange to a replay file."""

    def __init__(self, inner: Judge, path: str | os.PathLike):
        self.inner = inner
        self.path = path

    def grade(self, question, reference, response):
        j = self.inner.grade(question, reference, response)
        with open(self.path, "a", encoding="utf-8") as fh:
            rec = {
                "question": question,
                "reference": reference,
                "response": response,
                "verdict": j.verdict.value,
                "rationale": j.rationale,
            }
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")
        return j


class HttpJudge:
    """POSTs ``{question, reference, response}`` and expects ``{verdict, rationale}``.

    Transient failures are retried with capped exponential backoff; when
    retries run out the item is returned as ungraded.
    """

    def __init__(
        self,
        url: str,
        timeout: float = 30.0,
        retries: int = 3,
        backoff: float = 0.5,
        max_backoff: float = 8.0,
        max_in_flight: int = 4,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.url = url
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self.max_backoff = max_backoff
        self.sleep = sleep
        self._slots = threading.BoundedSemaphore(max_in_flight)

    def _post(self, body: dict) -> dict:
        req = urllib.request.Request(
            self.url,
            data=json.dumps(body).encode("utf-8"),
            headers={"Content-Type": "application/json"},
            method="POST",
        )
        with urllib.request.urlopen(req, timeout=self.timeout) as resp:
            return json.loads(resp.read().decode("utf-8"))

    def grade(self, question, reference, response):
        body = {"question": question, "reference": reference, "response": response}
        last = ""
        for attempt in range(self.retries + 1):
            if attempt:
                self.sleep(min(self.max_backoff, self.backoff * 2 ** (attempt - 1)))
            try:
                with self._slots:
                    reply = self._post(body)
                j = Judgement(Verdict(reply["verdict"]), str(reply.get("rationale", "")))
                logger.info("judge verdict %s", j.verdict.value)
                return j
            except (urllib.error.URLError, TimeoutError, OSError, ValueError, KeyError) as exc:
                last = f"{type(exc).__name__}: {exc}"
                logger.warning("judge request failed (attempt %d): %s", attempt + 1, last)
        return Judgement(Verdict.UNGRADED, f"judge unavailable: {last}")


@dataclass
class ItemResult:
    id: str
    qtype: QType
    concern: Concern
    response: str
    verdict: Verdict
    graded_by: str
    rationale: str = ""

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "qtype": self.qtype.value,
            "concern": self.concern.value,
            "response": self.response,
            "verdict": self.verdict.value,
            "graded_by": self.graded_by,
            "rationale": self.rationale,
        }


def _cell(results: Sequence[ItemResult]) -> dict:
    graded = [r for r in results if r.verdict is not Verdict.UNGRADED]
    correct = sum(CREDIT[r.verdict] for r in graded)
    return {
        "correct": correct,
        "total": len(graded),
        "ungraded": len(results) - len(graded),
        "accuracy": correct / len(graded) if graded else None,
    }


@dataclass
class EvalReport:
    items: list
    skipped: int = 0

    @property
    def partial(self) -> bool:
        return any(r.verdict is Verdict.UNGRADED for r in self.items)

    def by_qtype(self) -> dict:
        return {q.value: _cell([r for r in self.items if r.qtype is q]) for q in QType}

    def by_concern(self) -> dict:
        return {c.value: _cell([r for r in self.items if r.concern is c]) for c in Concern}

    def overall(self) -> dict:
        return _cell(self.items)

    def to_dict(self) -> dict:
        return {
            "qtype": self.by_qtype(),
            "concern": self.by_concern(),
            "overall": self.overall(),
            "partial": self.partial,
            "skipped": self.skipped,
            "items": [r.to_dict() for r in self.items],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_table(self) -> str:
        cols = [q.value for q in QType] + [c.value for c in Concern] + ["Overall"]
        cells = {**self.by_qtype(), **self.by_concern(), "Overall": self.overall()}

        def fmt(c):
            return "-" if c["total"] == 0 else f"{100 * c['accuracy']:.2f}%"

        head = "| " + " | ".join(f"{c:>8}" for c in cols) + " |"
        rule = "|" + "|".join("-" * 10 for _ in cols) + "|"
        row = "| " + " | ".join(f"{fmt(cells[c]):>8}" for c in cols) + " |"
        lines = ["Question Types: Binary, Multi, Open; Quality Concerns: Tech, Temp, Other", head, rule, row]
        if self.partial:
            lines.append(f"partial report: {self.overall()['ungraded']} items ungraded")
        return "\n".join(lines)


BINARY_OPTIONS = ("Yes", "No")


def grade_item(item: BenchmarkItem, response: str, judge: Judge | None) -> ItemResult:
    """Option matching for closed questions when unambiguous, the judge otherwise."""
    if item.qtype is not QType.OPEN:
        options = item.options or BINARY_OPTIONS
        picked = match_option(response, options)
        truth = match_option(item.reference_answer, options)
        if picked is not None and truth is not None:
            verdict = Verdict.CORRECT if picked == truth else Verdict.WRONG
            return ItemResult(item.id, item.qtype, item.concern, response, verdict, "option")
    if judge is None:
        return ItemResult(
            item.id, item.qtype, item.concern, response, Verdict.UNGRADED, "none", "no judge"
        )
    j = judge.grade(item.prompt, item.reference_answer, response)
    logger.info("item %s judged %s", item.id, j.verdict.value)
    return ItemResult(item.id, item.qtype, item.concern, response, j.verdict, "judge", j.rationale)


def evaluate_understanding(
    answer: Callable[[BenchmarkItem], str],
    items: Iterable[BenchmarkItem],
    judge: Judge | None = None,
    skipped: int = 0,
) -> EvalReport:
    """``answer`` produces the model's response for one item (greedy decoding)."""
    results = [grade_item(item, answer(item), judge) for item in items]
    return EvalReport(results, skipped)


def model_answerer(model, tokenizer, media: Callable[[BenchmarkItem], object], max_tokens: int = 32):
    """Answer function backed by greedy decoding under the understand-mode prompt."""
    from .data.builders import render_system_prompt
    from .model.lm import generate

    def answer(item: BenchmarkItem) -> str:
        tensors = media(item)
        fps = item.fps or 1.0
        duration = tensors.frames.shape[0] / fps if tensors is not None else 1.0
        system = render_system_prompt("understand", duration, fps)
        return generate(model, tokenizer, system, item.prompt, tensors, max_tokens).text

    return answer
