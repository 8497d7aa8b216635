"""Demonstrations by reverse exploration from a goal pose.

The walk starts on a goal pose and uses only move_back, move_left and
rotate_right, preferring them in that order (with epsilon-random choice among
the eligible ones). An action is eligible when it changes the pose and takes
the agent strictly farther from the goal set, so the reversed walk is a
shortest path in the movement graph. The reversed walk maps every action to
its inverse; pitch starts at level and look actions bring it to the goal
pitch first.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .scene_sim import env
from .scene_sim.env import (
    LOOK_DOWN,
    LOOK_UP,
    MOVE_BACK,
    MOVE_FORWARD,
    MOVE_LEFT,
    MOVE_RIGHT,
    OPEN,
    ROTATE_LEFT,
    ROTATE_RIGHT,
    STOP,
)
from .scene_sim.scene import Scene, SceneError
from .trajectory import Trajectory, load_actions, save_actions

REVERSE_ACTIONS = (MOVE_BACK, MOVE_LEFT, ROTATE_RIGHT)  # priority order
INVERSE = {MOVE_BACK: MOVE_FORWARD, MOVE_LEFT: MOVE_RIGHT, ROTATE_RIGHT: ROTATE_LEFT}
LEVEL = 1


class ExpertError(RuntimeError):
    pass


def reverse_walk(scene: Scene, goal_pose: int, dist: np.ndarray, n_steps: int, rng, epsilon: float = 0.3):
    """Walk away from the goal; returns (actions, end pose). Stops early when stuck."""
    nxt = scene.transitions[0]
    p = goal_pose
    actions = []
    for _ in range(n_steps):
        eligible = [a for a in REVERSE_ACTIONS if nxt[p, a] != p and dist[nxt[p, a]] > dist[p]]
        if not eligible:
            break
        a = eligible[rng.integers(len(eligible))] if rng.random() < epsilon else eligible[0]
        actions.append(a)
        p = int(nxt[p, a])
    return actions, p


def forward_actions(scene: Scene, walk: list, end_pose: int, goal_pitch: int, actionable: bool) -> tuple[int, list]:
    """Start pose (pitch level) and the action list that leads back to the goal."""
    start = scene.pose_at(end_pose)._replace(pitch=LEVEL)
    looks = [LOOK_UP if goal_pitch > LEVEL else LOOK_DOWN] * abs(goal_pitch - LEVEL)
    acts = looks + [INVERSE[a] for a in reversed(walk)]
    acts += [OPEN, STOP] if actionable else [STOP]
    return scene.pose_index(start), acts


def replay(scene: Scene, target_index: int, start_pose: int, actions, target_obs=None) -> tuple[Trajectory, env.EpisodeState]:
    state, obs = env.start_at(scene, target_index, start_pose, max_episode_steps=len(actions) + 1)
    traj = Trajectory(
        target_obs=target_obs or scene.targets[target_index].target_observation,
        start=state.copy(),
        target_index=target_index,
    )
    for a in actions:
        nobs, r, done, _ = env.step(state, a)
        traj.append(obs, a, r, done)
        obs = nobs
        if done:
            break
    return traj, state


def generate_expert(
    scene: Scene,
    target_index: int,
    rng_seed,
    *,
    n_range: tuple = (10, 40),
    epsilon: float = 0.3,
    min_walk: int = 3,
    max_retries: int = 50,
) -> Trajectory:
    """One demonstration that replays to a successful stop."""
    target = scene.targets[target_index]
    tid = target.target_object_id
    dist = env.goal_distance(scene, tid)
    if (dist[scene.free_pose_mask] < 0).all():
        raise ExpertError(f"target {tid} unreachable")
    goals = np.flatnonzero(dist == 0)
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    best = None
    for _ in range(max_retries):
        g = int(goals[rng.integers(goals.size)])
        n = int(rng.integers(n_range[0], n_range[1] + 1))
        walk, end = reverse_walk(scene, g, dist, n, rng, epsilon)
        start, acts = forward_actions(scene, walk, end, scene.pose_at(g).pitch, target.kind == "actionable")
        traj, state = replay(scene, target_index, start, acts)
        if state.outcome != "success":
            continue
        shortest = env.shortest_path_length(scene, start, target)
        if len(acts) > 2 * shortest:
            continue
        if len(walk) >= min_walk:
            return traj
        if best is None or len(walk) > len(best.actions):
            best = traj
    if best is not None:
        return best
    raise ExpertError(f"reverse walk trapped for target {tid} after {max_retries} retries")


def generate_experts(scene: Scene, target_indices, seed: int) -> dict:
    """One demonstration per training target."""
    return {i: generate_expert(scene, i, np.random.default_rng([seed, i])) for i in target_indices}


def save_expert(path, scene: Scene, traj: Trajectory) -> None:
    p = traj.start.pose
    header = {
        "scene_seed": scene.seed,
        "target_index": traj.target_index,
        "target_object": scene.targets[traj.target_index].target_object_id,
        "start": f"{p.x},{p.y},{p.heading},{p.pitch}",
    }
    save_actions(path, traj.actions, header)


def load_expert(path, scene: Scene) -> Trajectory:
    actions, header = load_actions(path)
    try:
        ti = int(header["target_index"])
        x, y, h, pt = (int(v) for v in header["start"].split(","))
    except (KeyError, ValueError) as exc:
        raise SceneError(f"{Path(path).name}: bad expert header: {exc}") from None
    traj, state = replay(scene, ti, scene.pose_index(env.Pose(x, y, h, pt)), actions)
    if state.outcome != "success":
        raise ExpertError(f"{Path(path).name}: cached expert no longer replays to success")
    return traj
