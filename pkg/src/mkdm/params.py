"""Deterministic per-parameter initialization.

Each parameter draws from its own RNG stream derived from (master seed,
parameter name). Adding or removing parameters elsewhere in a model
therefore never shifts another parameter's initial values, which is what
makes ablations (drop the soft heads, vary head count) start from
bit-identical shared weights.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .tensor import Parameter


def param_rng(seed, name):
    digest = hashlib.blake2s(name.encode("utf-8"), digest_size=8).digest()
    return np.random.default_rng(
        np.random.SeedSequence([int(seed), int.from_bytes(digest, "little")])
    )


def normal_param(name, shape, seed, std=0.02):
    rng = param_rng(seed, name)
    data = rng.normal(0.0, std, size=shape).astype(np.float32)
    return Parameter(name, data)


def zeros_param(name, shape):
    return Parameter(name, np.zeros(shape, dtype=np.float32))


def ones_param(name, shape):
    return Parameter(name, np.ones(shape, dtype=np.float32))
