"""Gradient application: shared-statistics RMSProp and plain SGD."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kernels
from .layers import NonFiniteError
from .params import ParameterSet


@dataclass
class OptimConfig:
    kind: str = "rmsprop"  # or "sgd"
    alpha: float = 0.99
    eps: float = 1e-5
    clip_norm: float = 40.0  # <= 0 disables clipping
    checked: bool = False


def global_norm(grads: dict) -> float:
    return float(np.sqrt(sum(float(np.vdot(g, g)) for g in grads.values())))


def clip_by_global_norm(grads: dict, max_norm: float) -> tuple[dict, float]:
    norm = global_norm(grads)
    if max_norm <= 0 or norm <= max_norm:
        return grads, norm
    scale = max_norm / (norm + 1e-12)
    return {k: g * scale for k, g in grads.items()}, norm


def init_state(params: ParameterSet, config: OptimConfig) -> ParameterSet | None:
    if config.kind == "sgd":
        return None
    return ParameterSet({k: np.zeros_like(v) for k, v in params.items()})


def apply_gradients(params: ParameterSet, grads: dict, lr: float, config: OptimConfig, state=None):
    """Update ``params`` in place, one tensor at a time under its lock."""
    if set(grads) != set(params.names()):
        missing = set(params.names()) ^ set(grads)
        raise ValueError(f"gradients do not align with parameters: {sorted(missing)[:3]}")
    for k, g in grads.items():
        if g.shape != params[k].shape:
            raise ValueError(f"{k}: gradient shape {g.shape} != parameter shape {params[k].shape}")
        if config.checked and not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for {k}")
    grads, _ = clip_by_global_norm(grads, config.clip_norm)
    if config.kind == "sgd":
        for k, g in grads.items():
            w = params[k]
            with params.lock(k):
                w -= (lr * g).astype(w.dtype)
        return params
    if config.kind != "rmsprop":
        raise ValueError(f"unknown optimizer {config.kind!r}")
    if state is None:
        raise ValueError("rmsprop needs optimizer state")
    for k, g in grads.items():
        with params.lock(k):
            kernels.rmsprop_update(params[k], state[k], g, lr, config.alpha, config.eps)
    return params
