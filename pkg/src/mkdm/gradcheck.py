"""Finite-difference oracle for taped gradients.

The whole check runs in float64: central differences in float32 lose most
of their significant digits to rounding, which would drown the signal the
check exists to catch. Callers build their graph with float64 parameters
and a loss function that is pure (same value on every call; in particular
no dropout, or dropout with a pre-drawn mask).
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError
from .tensor import Tape, backward


def fd_grad_check(fn, params, eps=1e-5, max_entries=None, rng=None):
    """Compare taped gradients of ``fn()`` against central differences.

    fn: nullary callable returning a scalar Tensor loss, closing over
        ``params``. Re-evaluated twice per checked entry.
    params: Parameters (float64) to perturb.
    max_entries: optional per-parameter cap; entries are subsampled with
        ``rng`` when a parameter has more. Default checks every entry.

    Returns the worst relative error max(|a - n|) / max(1, |a|, |n|).
    """
    params = list(params)
    for p in params:
        if p.data.dtype != np.float64:
            raise ContractError(
                f"gradient check requires float64 parameters, {p.name} is {p.data.dtype}"
            )
    if max_entries is not None and rng is None:
        rng = np.random.default_rng(0)

    with Tape() as tape:
        loss = fn()
    backward(tape, loss, params)
    analytic = [p.grad.copy() for p in params]

    worst = 0.0
    for p, full in zip(params, analytic):
        flat = p.data.reshape(-1)
        ana = full.reshape(-1)
        if max_entries is not None and flat.size > max_entries:
            idxs = rng.choice(flat.size, size=max_entries, replace=False)
        else:
            idxs = range(flat.size)
        for i in idxs:
            orig = flat[i]
            flat[i] = orig + eps
            up = float(fn().data)
            flat[i] = orig - eps
            down = float(fn().data)
            flat[i] = orig
            numeric = (up - down) / (2.0 * eps)
            rel = abs(ana[i] - numeric) / max(1.0, abs(ana[i]), abs(numeric))
            if rel > worst:
                worst = rel
    return worst
