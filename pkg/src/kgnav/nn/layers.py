"""Differentiable building blocks with hand-written backward passes.

Each forward takes plain ndarrays and never mutates them; each backward
takes the upstream gradient plus whatever the forward returned and gives
gradients for every input. Leading batch dimensions are allowed wherever a
weight is applied to the last axis.
"""

from __future__ import annotations

import numpy as np

_checked = False


class NonFiniteError(FloatingPointError):
    pass


def set_checked(flag: bool) -> None:
    """Turn NaN/Inf rejection at layer boundaries on or off."""
    global _checked
    _checked = bool(flag)


def check_finite(name: str, *arrays) -> None:
    if not _checked:
        return
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NonFiniteError(f"non-finite values in {name}")


def _shape_error(op, *shapes):
    return ValueError(f"{op}: incompatible shapes {' '.join(str(s) for s in shapes)}")


# ---------------------------------------------------------------- dense / relu


def dense(x, W, b):
    if x.shape[-1] != W.shape[1] or b.shape != (W.shape[0],):
        raise _shape_error("dense", x.shape, W.shape, b.shape)
    y = x @ W.T + b
    check_finite("dense", y)
    return y


def dense_backward(dy, x, W):
    """Returns (dx, dW, db)."""
    dx = dy @ W
    dy2 = dy.reshape(-1, dy.shape[-1])
    dW = dy2.T @ x.reshape(-1, x.shape[-1])
    return dx, dW, dy2.sum(axis=0)


def relu(x):
    return np.maximum(x, 0.0)


def relu_backward(dy, y):
    return dy * (y > 0)


# -------------------------------------------------------------------- softmax


def softmax(x, mask=None):
    """Softmax over the last axis; masked entries come out exactly 0."""
    x = np.asarray(x, dtype=np.float64) if not isinstance(x, np.ndarray) else x
    if mask is None:
        z = x - x.max(axis=-1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=-1, keepdims=True)
    m = np.asarray(mask).astype(bool)
    if m.shape != x.shape:
        raise _shape_error("softmax", x.shape, m.shape)
    if not m.any(axis=-1).all():
        raise ValueError("softmax: every entry is masked")
    z = np.where(m, x, -np.inf)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.where(m, np.exp(z), 0.0)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_backward(dp, p):
    # masked entries have p == 0 and therefore receive no gradient
    return p * (dp - (dp * p).sum(axis=-1, keepdims=True))


def log_softmax(x):
    z = x - x.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def cross_entropy(logits, targets):
    """Summed cross entropy of integer targets; returns (loss, dlogits)."""
    logp = log_softmax(logits)
    t = np.asarray(targets, dtype=np.int64)
    rows = np.arange(t.size)
    loss = -logp[rows, t].sum()
    d = np.exp(logp)
    d[rows, t] -= 1.0
    return float(loss), d


# ------------------------------------------------------------------------ GCN


def gcn_layer(a_hat, h, w):
    """ReLU(Â H W)."""
    if a_hat.shape[0] != a_hat.shape[1] or a_hat.shape[1] != h.shape[0] or h.shape[1] != w.shape[0]:
        raise _shape_error("gcn_layer", a_hat.shape, h.shape, w.shape)
    out = relu(a_hat @ h @ w)
    check_finite("gcn_layer", out)
    return out


def gcn_layer_backward(dout, a_hat, h, w, out):
    """Returns (dh, dw)."""
    dpre = relu_backward(dout, out)
    ah = a_hat @ h
    dw = ah.T @ dpre
    dh = a_hat.T @ (dpre @ w.T)
    return dh, dw


# ----------------------------------------------------------------------- LSTM


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def lstm_step(x, h, c, W, b):
    """One LSTM cell step; gate rows of W are ordered input, forget, output, cell.

    Returns (h_next, c_next, cache).
    """
    n = h.shape[-1]
    if W.shape != (4 * n, x.shape[-1] + n) or b.shape != (4 * n,) or c.shape != h.shape:
        raise _shape_error("lstm_step", x.shape, h.shape, c.shape, W.shape, b.shape)
    z = np.concatenate([x, h], axis=-1)
    gates = z @ W.T + b
    i = sigmoid(gates[..., :n])
    f = sigmoid(gates[..., n : 2 * n])
    o = sigmoid(gates[..., 2 * n : 3 * n])
    g = np.tanh(gates[..., 3 * n :])
    c_next = f * c + i * g
    tc = np.tanh(c_next)
    h_next = o * tc
    check_finite("lstm_step", h_next, c_next)
    return h_next, c_next, (z, c, i, f, o, g, tc)


def lstm_gate_backward(dh, dc, cache):
    """Gradient w.r.t. the pre-activation gates; returns (dgates, dc_prev)."""
    z, c, i, f, o, g, tc = cache
    do = dh * tc
    dc = dc + dh * o * (1.0 - tc * tc)
    dgates = np.concatenate(
        [dc * g * i * (1 - i), dc * c * f * (1 - f), do * o * (1 - o), dc * i * (1 - g * g)], axis=-1
    )
    return dgates, dc * f


def lstm_step_backward(dh, dc, cache, W):
    """Returns (dx, dh_prev, dc_prev, dW, db)."""
    z = cache[0]
    n = cache[1].shape[-1]
    dgates, dc_prev = lstm_gate_backward(dh, dc, cache)
    dz = dgates @ W
    dg2 = dgates.reshape(-1, 4 * n)
    dW = dg2.T @ z.reshape(-1, z.shape[-1])
    db = dg2.sum(axis=0)
    nx = z.shape[-1] - n
    return dz[..., :nx], dz[..., nx:], dc_prev, dW, db
