"""Kernel backend selection.

The numerically heavy inner loops (GELU, sigmoid, row softmax, layer norm,
the Adam update) exist twice: fused Cython loops in ``mkdm._native_kernels``
and plain numpy in ``mkdm._numpy_kernels``. The compiled path is picked at
import time when the extension built and the environment does not force the
fallback; everything else in the package calls through this module and never
cares which one is active.

Routing rules:
  - float32 contiguous arrays go to the compiled kernels when available;
  - float64 always uses numpy (only the gradient-check oracle runs in
    float64, so speed is irrelevant there);
  - ``MKDM_PURE_PYTHON=1`` disables the extension entirely (the kernel
    benchmark instead imports both implementation modules directly, so it
    compares them in one process regardless of this setting).

Both backends compute the same formulas; results agree to float32 rounding
but are not bitwise identical across backends (each backend is bitwise
deterministic with itself, which is what the reproducibility contract
needs).
"""

import os

import numpy as np

from . import _numpy_kernels as _np_k

if os.environ.get("MKDM_PURE_PYTHON", "0") not in ("", "0"):
    _native = None
else:
    try:
        from . import _native_kernels as _native  # type: ignore[attr-defined]
    except ImportError:
        _native = None

BACKEND = "native" if _native is not None else "numpy"


def has_native():
    return _native is not None


def _f32c(*arrays):
    return _native is not None and all(
        a.dtype == np.float32 and a.flags.c_contiguous for a in arrays
    )


def gelu_fwd(x):
    if _f32c(x):
        return _native.gelu_fwd(x.reshape(-1)).reshape(x.shape)
    return _np_k.gelu_fwd(x)


def gelu_bwd(x, dy):
    if _f32c(x, dy):
        return _native.gelu_bwd(x.reshape(-1), dy.reshape(-1)).reshape(x.shape)
    return _np_k.gelu_bwd(x, dy)


def sigmoid_fwd(x):
    if _f32c(x):
        return _native.sigmoid_fwd(x.reshape(-1)).reshape(x.shape)
    return _np_k.sigmoid_fwd(x)


def sigmoid_bwd(y, dy):
    if _f32c(y, dy):
        return _native.sigmoid_bwd(y.reshape(-1), dy.reshape(-1)).reshape(y.shape)
    return _np_k.sigmoid_bwd(y, dy)


def softmax_fwd(x):
    """Softmax over the last axis, max-subtracted for stability."""
    rows = x.reshape(-1, x.shape[-1])
    if _f32c(rows):
        return _native.softmax_fwd(rows).reshape(x.shape)
    return _np_k.softmax_fwd(rows).reshape(x.shape)


def softmax_bwd(y, dy):
    yr = y.reshape(-1, y.shape[-1])
    dyr = dy.reshape(-1, dy.shape[-1])
    if _f32c(yr, dyr):
        return _native.softmax_bwd(yr, dyr).reshape(y.shape)
    return _np_k.softmax_bwd(yr, dyr).reshape(y.shape)


def layernorm_fwd(x2d, gain, bias, eps):
    if _f32c(x2d, gain, bias):
        return _native.layernorm_fwd(x2d, gain, bias, eps)
    return _np_k.layernorm_fwd(x2d, gain, bias, eps)


def layernorm_bwd(dy2d, x2d, mean, rstd, gain):
    if _f32c(dy2d, x2d, mean, rstd, gain):
        return _native.layernorm_bwd(dy2d, x2d, mean, rstd, gain)
    return _np_k.layernorm_bwd(dy2d, x2d, mean, rstd, gain)


def adam_update(param, grad, m, v, lr, beta1, beta2, eps, bc1, bc2):
    """In-place fused Adam step on one parameter."""
    if _f32c(param, grad, m, v):
        _native.adam_update(
            param.reshape(-1), grad.reshape(-1), m.reshape(-1), v.reshape(-1),
            lr, beta1, beta2, eps, bc1, bc2,
        )
        return
    _np_k.adam_update(param, grad, m, v, lr, beta1, beta2, eps, bc1, bc2)
