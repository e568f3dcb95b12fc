"""Reference numpy implementations of the hot kernels.

These are the fallback backend when the compiled extension is unavailable
(and the only backend for float64 inputs, which the gradient-check oracle
uses). Shapes follow the dispatcher's conventions: elementwise kernels take
arrays of any shape, row kernels take 2D arrays and reduce over the last
axis.
"""

import numpy as np

# sqrt(2/pi) for the tanh-form GELU
_GELU_C = 0.7978845608028654
_GELU_A = 0.044715


def gelu_fwd(x):
    u = _GELU_C * (x + _GELU_A * x * x * x)
    return 0.5 * x * (1.0 + np.tanh(u))


def gelu_bwd(x, dy):
    u = _GELU_C * (x + _GELU_A * x * x * x)
    t = np.tanh(u)
    du = _GELU_C * (1.0 + 3.0 * _GELU_A * x * x)
    return dy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)


def sigmoid_fwd(x):
    # Split by sign so the exponential never overflows.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_bwd(y, dy):
    return dy * y * (1.0 - y)


def softmax_fwd(x):
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_bwd(y, dy):
    inner = (dy * y).sum(axis=-1, keepdims=True)
    return (dy - inner) * y


def layernorm_fwd(x, gain, bias, eps):
    mean = x.mean(axis=-1)
    centered = x - mean[:, None]
    var = np.mean(centered * centered, axis=-1)
    rstd = 1.0 / np.sqrt(var + eps)
    y = centered * rstd[:, None] * gain + bias
    return y, mean, rstd


def layernorm_bwd(dy, x, mean, rstd, gain):
    xhat = (x - mean[:, None]) * rstd[:, None]
    dgain = (dy * xhat).sum(axis=0)
    dbias = dy.sum(axis=0)
    dxhat = dy * gain
    m1 = dxhat.mean(axis=-1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
    dx = (dxhat - m1 - xhat * m2) * rstd[:, None]
    return dx, dgain, dbias


def adam_update(param, grad, m, v, lr, beta1, beta2, eps, bc1, bc2):
    # bc1/bc2 are the bias-correction denominators 1 - beta^t.
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    mhat = m / bc1
    vhat = v / bc2
    param -= lr * mhat / (np.sqrt(vhat) + eps)
