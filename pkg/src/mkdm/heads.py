"""Student output layer: one golden-label head, n per-teacher soft heads.

The golden head is a two-way softmax over the [CLS] state trained with
cross-entropy against binary labels. Each soft head is a sigmoid scalar
trained with squared error against one teacher's cached score. The training
loss mixes them as (1-alpha) * l_gold + alpha * mean(l_soft); at inference
the heads' outputs are averaged into a single relevance score.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, ContractError, DataError
from .params import normal_param, zeros_param
from .tensor import Tensor

PROB_FLOOR = 1e-12


class StudentHeads:
    """Golden head (h -> 2) plus n_teachers soft heads (h -> 1).

    ``no_bias`` drops the bias terms, leaving the bare matrix projections.
    """

    def __init__(self, gold_w, gold_b, soft_ws, soft_bs):
        self.gold_w = gold_w
        self.gold_b = gold_b
        self.soft_ws = list(soft_ws)
        self.soft_bs = list(soft_bs)

    @classmethod
    def create(cls, hidden, n_teachers, seed, no_bias=False, prefix="heads"):
        if n_teachers < 0:
            raise ConfigError(f"n_teachers must be >= 0, got {n_teachers}")
        gold_w = normal_param(f"{prefix}.gold.w", (hidden, 2), seed)
        gold_b = None if no_bias else zeros_param(f"{prefix}.gold.b", (2,))
        soft_ws, soft_bs = [], []
        for i in range(n_teachers):
            soft_ws.append(normal_param(f"{prefix}.soft{i}.w", (hidden, 1), seed))
            soft_bs.append(None if no_bias else zeros_param(f"{prefix}.soft{i}.b", (1,)))
        return cls(gold_w, gold_b, soft_ws, soft_bs)

    @property
    def n_teachers(self):
        return len(self.soft_ws)

    def parameters(self):
        out = [self.gold_w]
        if self.gold_b is not None:
            out.append(self.gold_b)
        for w, b in zip(self.soft_ws, self.soft_bs):
            out.append(w)
            if b is not None:
                out.append(b)
        return out

    def param_count(self):
        return sum(p.data.size for p in self.parameters())


def head_param_count(hidden, n_teachers, no_bias=False):
    """Extra elements the heads add on top of a bare trunk."""
    if no_bias:
        return 2 * hidden + n_teachers * hidden
    return (2 * hidden + 2) + n_teachers * (hidden + 1)


def _as_batch(h_1):
    if h_1.ndim == 1:
        return T.reshape(h_1, (1,) + h_1.shape), True
    return h_1, False


def golden_forward(heads, h_1):
    """Softmax probabilities over {0, 1}: [B,2] from [B,h] (or [2] from [h])."""
    h, squeezed = _as_batch(h_1)
    logits = T.matmul(h, heads.gold_w)
    if heads.gold_b is not None:
        logits = T.add(logits, heads.gold_b)
    probs = T.softmax_rows(logits)
    if squeezed:
        probs = T.reshape(probs, (2,))
    return probs


def soft_forward(heads, h_1, index):
    """Head ``index``'s sigmoid relevance score: [B] from [B,h]."""
    if not 0 <= index < heads.n_teachers:
        raise ContractError(
            f"soft head index {index} out of range for {heads.n_teachers} heads"
        )
    h, squeezed = _as_batch(h_1)
    z = T.matmul(h, heads.soft_ws[index])
    if heads.soft_bs[index] is not None:
        z = T.add(z, heads.soft_bs[index])
    score = T.sigmoid(T.reshape(z, (h.shape[0],)))
    if squeezed:
        score = T.reshape(score, ())
    return score


def golden_loss(probs, gold):
    """Mean cross-entropy -log p[gold], with p clamped to >= 1e-12.

    probs: [B,2] (or [2]); gold: matching {0,1} integer array.
    """
    probs, _ = _as_batch(probs)
    gold = np.atleast_1d(np.asarray(gold))
    if not np.isin(gold, (0, 1)).all():
        raise ContractError(f"gold labels must be 0 or 1, got {np.unique(gold)}")
    picked = T.gather_rows(probs, gold)
    return T.scale(T.mean_all(T.log(T.clamp_min(picked, PROB_FLOOR))), -1.0)


def soft_loss(z, r):
    """Mean squared error between cached teacher scores z and head outputs r."""
    z = np.atleast_1d(np.asarray(z, dtype=r.dtype if hasattr(r, "dtype") else np.float32))
    if z.min() < 0.0 or z.max() > 1.0:
        raise DataError(
            f"teacher scores must lie in [0,1], got range [{z.min()}, {z.max()}]"
        )
    if r.ndim == 0:
        r = T.reshape(r, (1,))
    diff = T.sub(Tensor(z, dtype=r.dtype), r)
    return T.mean_all(T.mul(diff, diff))


def combined_loss(l_gold, soft_losses, alpha):
    """(1-alpha) * l_gold + alpha * mean(soft_losses).

    alpha=0 returns l_gold itself (the soft terms are never touched);
    alpha=1 returns the bare soft mean, so a gold-free graph stays legal.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"alpha must be in [0,1], got {alpha}")
    if alpha == 0.0:
        if l_gold is None:
            raise ConfigError("alpha=0 requires a golden loss term")
        return l_gold
    if not soft_losses:
        raise ConfigError(f"alpha={alpha} > 0 requires at least one soft loss")
    total = soft_losses[0]
    for term in soft_losses[1:]:
        total = T.add(total, term)
    soft_mean = T.scale(total, 1.0 / len(soft_losses))
    if alpha == 1.0:
        return soft_mean
    return T.add(T.scale(l_gold, 1.0 - alpha), T.scale(soft_mean, alpha))


def aggregate_prediction(golden_prob, teacher_scores, include_golden=True):
    """Average the heads into one relevance score.

    include_golden: (P(1) + sum R_i) / (1 + n); otherwise sum(R_i) / n,
    the mode where only soft heads drive the final output.
    """
    p = np.asarray(golden_prob, dtype=np.float64)
    scores = [np.asarray(s, dtype=np.float64) for s in teacher_scores]
    for arr, what in [(p, "golden_prob")] + [(s, "teacher score") for s in scores]:
        if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
            raise ContractError(f"{what} outside [0,1]: range [{arr.min()}, {arr.max()}]")
    n = len(scores)
    if not include_golden:
        if n == 0:
            raise ConfigError("cannot exclude the golden head with zero teachers")
        return sum(scores) / n
    if n == 0:
        return p
    return (p + sum(scores)) / (1 + n)


@dataclass
class PredictionBundle:
    """One batch's head outputs plus their aggregate."""

    golden_prob: np.ndarray
    teacher_scores: np.ndarray
    aggregate: np.ndarray
