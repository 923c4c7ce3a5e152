"""Independent reference implementations the tests compare against.

Each oracle is written the slow, obvious way and shares no code with the
package.
"""

from __future__ import annotations

import math

import numpy as np
import torch
from scipy import stats


def run_length_summary(flags, fps):
    """Frame-by-frame scan for stall events."""
    events = []
    current = 0
    for f in flags:
        if f == 1:
            current += 1
        elif current:
            events.append(current)
            current = 0
    if current:
        events.append(current)
    n = len(flags)
    leading = 0
    for f in flags:
        if f != 1:
            break
        leading += 1
    last_one = max((i for i, f in enumerate(flags) if f == 1), default=None)
    tail = n if last_one is None else n - 1 - last_one
    return (
        len(events),
        [e / fps for e in events],
        sum(events) / n,
        leading / fps,
        tail / fps,
    )


def interval_level(score):
    """Level by explicit interval lookup."""
    table = [
        (0.0, 20.0, "Low"),
        (20.0, 40.0, "Poor"),
        (40.0, 60.0, "Fair"),
        (60.0, 80.0, "Good"),
    ]
    for lo, hi, name in table:
        if lo <= score < hi:
            return name
    if 80.0 <= score <= 100.0:
        return "High"
    raise ValueError(score)


def softmax_dot(logits, weights=(1.0, 0.75, 0.5, 0.25, 0.0)):
    """Softmax with math.fsum, then a dot product."""
    m = max(logits)
    exps = [math.exp(v - m) for v in logits]
    total = math.fsum(exps)
    return math.fsum(w * e / total for w, e in zip(weights, exps))


def spearman(x, y):
    return float(stats.spearmanr(x, y)[0])


def pearson(x, y):
    return float(stats.pearsonr(x, y)[0])


def rank_then_pearson(x, y):
    return float(np.corrcoef(stats.rankdata(x), stats.rankdata(y))[0, 1])


def covariance_pearson(x, y):
    """Textbook sample covariance over the product of standard deviations."""
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(x, y))
    vx = sum((a - mx) ** 2 for a in x)
    vy = sum((b - my) ** 2 for b in y)
    return cov / math.sqrt(vx * vy)


def largest_remainder(counts, target):
    """Hamilton apportionment by repeatedly handing seats to the largest remainder."""
    total = sum(counts)
    quotas = [c * target / total for c in counts]
    seats = [math.floor(q) for q in quotas]
    rema = sorted(
        range(len(counts)), key=lambda i: (quotas[i] - seats[i], counts[i], -i), reverse=True
    )
    for i in rema[: target - sum(seats)]:
        seats[i] += 1
    return seats


def cross_entropy(logits_row, target):
    m = max(logits_row)
    lse = m + math.log(sum(math.exp(v - m) for v in logits_row))
    return lse - logits_row[target]


def central_difference(loss_fn, tensor, index, eps=1e-6):
    """d loss / d tensor[index] by symmetric perturbation, in place and restored."""
    original = tensor[index].item()
    with torch.no_grad():
        tensor[index] = original + eps
        up = float(loss_fn())
        tensor[index] = original - eps
        down = float(loss_fn())
        tensor[index] = original
    return (up - down) / (2 * eps)
