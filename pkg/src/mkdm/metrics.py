"""Accuracy, ranking AUC, and throughput measurement.

Both quality metrics are percentages. AUC follows the pairwise definition
(probability a random positive outranks a random negative, ties worth 0.5)
but is computed by rank sums in O(n log n); average ranks keep the two
formulations exactly equal, not just approximately.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, MetricUndefinedError


def _check_pair(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.ndim != 1 or labels.ndim != 1:
        raise ContractError("scores and labels must be 1-D")
    if scores.shape != labels.shape:
        raise ContractError(
            f"scores ({scores.shape[0]}) and labels ({labels.shape[0]}) differ in length"
        )
    if scores.size == 0:
        raise ContractError("cannot evaluate zero examples")
    if not np.isin(labels, (0, 1)).all():
        raise ContractError(f"labels must be 0 or 1, got {np.unique(labels)}")
    return scores, labels.astype(np.int64)


def accuracy(scores, labels, threshold=0.5):
    """Percent of examples where (score >= threshold) matches the label."""
    scores, labels = _check_pair(scores, labels)
    predicted = (scores >= threshold).astype(np.int64)
    return 100.0 * float((predicted == labels).sum()) / scores.size


def auc(scores, labels):
    """Percent AUC via Mann-Whitney rank sums with average ranks for ties."""
    scores, labels = _check_pair(scores, labels)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricUndefinedError(
            f"AUC needs both classes, got {n_pos} positives and {n_neg} negatives"
        )
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(labels.size, dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < labels.size:
        j = i
        while j + 1 < labels.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    pos_rank_sum = float(ranks[labels == 1].sum())
    u = pos_rank_sum - n_pos * (n_pos + 1) / 2.0
    return 100.0 * u / (n_pos * n_neg)


def auc_pairwise(scores, labels):
    """Brute-force O(P*N) pairwise AUC; the oracle rank-sum must match."""
    scores, labels = _check_pair(scores, labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    if pos.size == 0 or neg.size == 0:
        raise MetricUndefinedError("AUC needs both classes")
    wins = (pos[:, None] > neg[None, :]).sum()
    ties = (pos[:, None] == neg[None, :]).sum()
    return 100.0 * (float(wins) + 0.5 * float(ties)) / (pos.size * neg.size)


@dataclass
class QpsResult:
    mean: float
    std: float
    batch_size: int
    repetitions: int
    warmup_batches: int

    @property
    def qps(self):
        return self.mean


def qps_benchmark(step, n_examples, batch_size=1, warmup_batches=10,
                  min_duration_seconds=0.5, repetitions=3):
    """Steady-state throughput of ``step()`` (one batch per call).

    Runs ``warmup_batches`` unmeasured calls, then ``repetitions`` timed
    windows of at least ``min_duration_seconds`` each.
    """
    if repetitions < 3:
        raise ContractError(f"need >= 3 repetitions, got {repetitions}")
    for _ in range(warmup_batches):
        step()
    rates = []
    for _ in range(repetitions):
        calls = 0
        start = time.perf_counter()
        while True:
            step()
            calls += 1
            elapsed = time.perf_counter() - start
            if elapsed >= min_duration_seconds:
                break
        rates.append(calls * batch_size / elapsed)
    rates = np.asarray(rates)
    return QpsResult(mean=float(rates.mean()), std=float(rates.std()),
                     batch_size=batch_size, repetitions=repetitions,
                     warmup_batches=warmup_batches)


@dataclass
class EvalReport:
    """One evaluation outcome, serializable to JSON and the results CSV."""

    acc: float
    auc: float
    n_examples: int
    threshold: float = 0.5
    qps: float | None = None
    qps_std: float | None = None
    qps_batch_size: int | None = None

    def __post_init__(self):
        if not (0.0 <= self.acc <= 100.0 and 0.0 <= self.auc <= 100.0):
            raise ContractError(
                f"acc/auc must be percentages, got {self.acc}, {self.auc}"
            )
        if self.qps is not None and self.qps <= 0:
            raise ContractError(f"qps must be positive, got {self.qps}")

    def to_dict(self):
        out = {"acc": self.acc, "auc": self.auc, "n_examples": self.n_examples,
               "threshold": self.threshold}
        if self.qps is not None:
            out.update(qps=self.qps, qps_std=self.qps_std,
                       qps_batch_size=self.qps_batch_size)
        return out

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: d[k] for k in
                      ("acc", "auc", "n_examples", "threshold",
                       "qps", "qps_std", "qps_batch_size") if k in d})


RESULTS_CSV_HEADER = "run_id,layers,alpha,mode,acc,auc,qps"


def results_csv_row(run_id, layers, alpha, mode, report):
    qps = "" if report.qps is None else f"{report.qps:.6g}"
    return f"{run_id},{layers},{alpha},{mode},{report.acc:.6f},{report.auc:.6f},{qps}"


def append_results_csv(path, rows):
    """Create-with-header or append rows to the shared results CSV."""
    import os
    new = not os.path.exists(path)
    with open(path, "a", encoding="utf-8") as f:
        if new:
            f.write(RESULTS_CSV_HEADER + "\n")
        for row in rows:
            f.write(row + "\n")
