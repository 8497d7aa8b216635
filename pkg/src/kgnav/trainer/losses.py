"""k-step returns, the actor-critic loss, and the imitation loss."""

from __future__ import annotations

import numpy as np

from .. import kernels
from ..nn import layers as L
from ..policy import PolicyModel
from ..trajectory import Trajectory


def compute_returns(rewards, bootstrap: float, gamma: float) -> np.ndarray:
    """R_t = r_t + gamma * R_{t+1}, seeded with the bootstrap value."""
    if len(rewards) == 0:
        raise ValueError("compute_returns needs at least one reward")
    return kernels.discounted_returns(np.asarray(rewards, dtype=np.float64), bootstrap, gamma)


def a3c_loss(logits, values, actions, returns, value_coef: float, entropy_coef: float):
    """Loss and its gradient w.r.t. (logits, values).

    L = -sum A_t log pi(a_t) + value_coef * sum (R_t - V_t)^2 - entropy_coef * sum H(pi_t),
    where the advantage A_t = R_t - V_t is held constant in the policy term.
    """
    logits = np.asarray(logits, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    returns = np.asarray(returns, dtype=np.float64)
    actions = np.asarray(actions, dtype=np.int64)
    T = actions.size
    logp = L.log_softmax(logits)
    p = np.exp(logp)
    rows = np.arange(T)
    adv = returns - values
    entropy = -(p * logp).sum(axis=1)
    policy_loss = -(adv * logp[rows, actions]).sum()
    value_loss = (adv**2).sum()
    loss = policy_loss + value_coef * value_loss - entropy_coef * entropy.sum()

    onehot = np.zeros_like(p)
    onehot[rows, actions] = 1.0
    dlogits = -adv[:, None] * (onehot - p)
    dlogits += entropy_coef * p * (logp + entropy[:, None])
    dvalues = 2.0 * value_coef * (values - returns)
    L.check_finite("a3c_loss", np.array([loss]))
    parts = {"policy": float(policy_loss), "value": float(value_loss), "entropy": float(entropy.sum())}
    return float(loss), dlogits, dvalues, parts


def a3c_gradients(model: PolicyModel, params, ctx, traj: Trajectory, gamma: float, value_coef: float,
                  entropy_coef: float):
    """Recompute the trajectory under ``params`` and return (loss, grads)."""
    out, tape = model.unroll(params, ctx, traj.observations, traj.lstm_state)
    returns = compute_returns(traj.rewards, 0.0 if traj.done else traj.bootstrap, gamma)
    loss, dlogits, dvalues, _ = a3c_loss(out.logits, out.values, traj.actions, returns, value_coef, entropy_coef)
    return loss, model.backward(params, ctx, tape, dlogits, dvalues)


def il_loss(logits, expert_actions):
    """Summed cross entropy between the policy and the expert's actions."""
    return L.cross_entropy(np.asarray(logits, dtype=np.float64), expert_actions)


def il_update(model: PolicyModel, params, ctx, expert: Trajectory):
    """Teacher-forced cross entropy along the unrolled LSTM; returns (loss, grads)."""
    out, tape = model.unroll(params, ctx, expert.observations, None)
    loss, dlogits = il_loss(out.logits, expert.actions)
    return loss, model.backward(params, ctx, tape, dlogits, np.zeros(len(expert)))


def action_accuracy(model: PolicyModel, params, ctx, expert: Trajectory) -> float:
    out, _ = model.unroll(params, ctx, expert.observations, None, keep_tape=False)
    return float(np.mean(np.argmax(out.logits, axis=1) == np.asarray(expert.actions)))
