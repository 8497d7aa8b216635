"""Sub-target extraction: relabel trajectory prefixes as successes."""

from __future__ import annotations

import numpy as np

from ..scene_sim.env import STEP_PENALTY, STOP, SUCCESS_REWARD
from ..scene_sim.scene import Scene
from ..trajectory import Trajectory

RELABELED_REWARD = SUCCESS_REWARD + STEP_PENALTY


def novel_categories(scenes, training_categories, exclude=()) -> frozenset:
    """Pickupable categories present in ``scenes`` that are not training targets."""
    cats = set()
    for scene in scenes:
        for o in scene.objects:
            if o.pickupable:
                cats.add(o.category)
    return frozenset(cats - set(training_categories) - set(exclude))


def target_categories(scene: Scene, target_indices) -> frozenset:
    return frozenset(scene.object_by_id(scene.targets[i].target_object_id).category for i in target_indices)


def candidate_indices(traj: Trajectory, pool, novel) -> list:
    """Steps whose observation shows a pooled target or a novel object."""
    wanted = np.zeros(traj.target_obs.visible.shape[0], dtype=bool)
    wanted[list(set(pool) | set(novel))] = True
    return [j for j, o in enumerate(traj.observations) if (o.visible.astype(bool) & wanted).any()]


def tse_extract(traj: Trajectory, training_target_pool, novel_object_set, sample_count: int, rng=None) -> list:
    """Prefix sub-trajectories ending in a relabeled successful stop.

    A candidate at 0-based step ``j`` yields the prefix s_1..s_{j+1}: earlier
    actions and rewards are kept, the last action becomes stop with reward
    SUCCESS_REWARD + STEP_PENALTY, and the target becomes the final observation.
    Sub-trajectories start from a fresh LSTM state.
    """
    cands = candidate_indices(traj, training_target_pool, novel_object_set)
    if not cands or sample_count <= 0:
        return []
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    k = min(sample_count, len(cands))
    chosen = sorted(int(c) for c in rng.choice(cands, size=k, replace=False))
    subs = []
    for j in chosen:
        n = j + 1
        sub = Trajectory(
            target_obs=traj.observations[j],
            observations=list(traj.observations[:n]),
            actions=list(traj.actions[: n - 1]) + [STOP],
            rewards=list(traj.rewards[: n - 1]) + [RELABELED_REWARD],
            dones=[False] * (n - 1) + [True],
            values=list(traj.values[:n]),
            bootstrap=0.0,
            lstm_state=None,
            start=traj.start,
            target_index=None,
        )
        subs.append(sub)
    return subs
