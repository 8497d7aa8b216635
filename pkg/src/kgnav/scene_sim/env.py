"""Episode mechanics: observation, reset, step, and the BFS path oracle."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .. import kernels
from .scene import Observation, Pose, Scene, SceneError, TargetSpec

ACTIONS = (
    "move_forward",
    "move_back",
    "move_right",
    "move_left",
    "rotate_right",
    "rotate_left",
    "look_up",
    "look_down",
    "open",
    "stop",
)
N_ACTIONS = len(ACTIONS)
ACTION_INDEX = {name: i for i, name in enumerate(ACTIONS)}
MOVE_FORWARD, MOVE_BACK, MOVE_RIGHT, MOVE_LEFT = 0, 1, 2, 3
ROTATE_RIGHT, ROTATE_LEFT, LOOK_UP, LOOK_DOWN = 4, 5, 6, 7
OPEN, STOP = 8, 9

STEP_PENALTY = -0.01
ARRIVAL_BONUS = 0.01
SUCCESS_REWARD = 10.0
MIN_START_DISTANCE = 10
DEFAULT_MAX_STEPS = 5000


class EpisodeFinishedError(RuntimeError):
    """step() was called on an episode that already ended."""


@dataclass
class EpisodeState:
    scene: Scene
    pose_idx: int
    target: TargetSpec
    target_index: int
    max_episode_steps: int = DEFAULT_MAX_STEPS
    steps: int = 0
    opened_receptacle: Optional[int] = None
    arrived_flag: bool = False
    collisions: int = 0
    done: bool = False
    outcome: str = "running"
    start_pose_idx: int = field(default=-1)

    @property
    def pose(self) -> Pose:
        return self.scene.pose_at(self.pose_idx)

    def copy(self) -> "EpisodeState":
        return EpisodeState(**self.__dict__)


# ----------------------------------------------------------------- visibility


def _open_index(scene: Scene, opened_id: Optional[int]) -> int:
    return -1 if opened_id is None else scene._id_index[opened_id]


def visible_object_mask(scene: Scene, pose_idx: int, open_idx: int = -1) -> np.ndarray:
    """Per-object visibility from a pose given which receptacle (index) is open."""
    vis = scene.visibility[0][pose_idx]
    cont = scene.object_arrays["container"]
    return vis & ((cont < 0) | (cont == open_idx))


def observe(scene: Scene, pose_idx: int, open_idx: int = -1, collision: bool = False) -> Observation:
    """Observation for a pose; cached per (pose, open receptacle, collision)."""
    key = (pose_idx, open_idx, collision)
    cache = scene._obs_cache
    obs = cache.get(key)
    if obs is not None:
        return obs
    v = scene.vocab_size
    visible = np.zeros(v, dtype=np.int8)
    depth = np.zeros(v, dtype=np.int8)
    direction = np.zeros(v, dtype=np.int8)
    open_flags = np.zeros(v, dtype=np.int8)
    mask = visible_object_mask(scene, pose_idx, open_idx)
    _, dep, side = scene.visibility
    cats = scene.object_arrays["category"]
    for j in np.flatnonzero(mask):
        c = cats[j]
        # nearest instance of a category wins; ties go to the lower index
        if visible[c] and depth[c] <= dep[pose_idx, j]:
            continue
        visible[c] = 1
        depth[c] = dep[pose_idx, j]
        direction[c] = side[pose_idx, j]
        open_flags[c] = 1 if j == open_idx else 0
    for arr in (visible, depth, direction, open_flags):
        arr.flags.writeable = False
    obs = Observation(visible, depth, direction, open_flags, bool(collision))
    cache[key] = obs
    return obs


def visible_objects(scene: Scene, pose: Pose) -> Observation:
    """What the agent sees from ``pose`` with every receptacle closed."""
    return observe(scene, scene.pose_index(pose))


def open_choice(scene: Scene) -> np.ndarray:
    """Object index the open action would open from each pose, -1 if none."""
    cached = scene.__dict__.get("_open_choice")
    if cached is not None:
        return cached
    vis, _, _ = scene.visibility
    arrs = scene.object_arrays
    cand = vis & arrs["openable"][None, :] & (arrs["container"] < 0)[None, :]
    choice = np.full(scene.n_poses, -1, dtype=np.int64)
    if cand.any():
        cells = np.array([scene.object_cell(o) for o in scene.objects], dtype=np.float64)
        idx = np.arange(scene.n_poses)
        px = (idx // 12) % scene.width
        py = (idx // 12) // scene.width
        d2 = (cells[None, :, 0] - px[:, None]) ** 2 + (cells[None, :, 1] - py[:, None]) ** 2
        d2 = np.where(cand, d2, np.inf)
        best = np.argmin(d2, axis=1)  # first minimum = lowest index on ties
        choice = np.where(np.isfinite(d2[idx, best]), best, -1)
    scene.__dict__["_open_choice"] = choice
    return choice


# --------------------------------------------------------------------- goals


def goal_pose_mask(scene: Scene, target_object_id: int) -> np.ndarray:
    """Boolean mask over pose indices from which the target counts as reached."""
    j = scene._id_index[target_object_id]
    obj = scene.objects[j]
    vis = scene.visibility[0][:, j] & scene.free_pose_mask
    if obj.container_id is None:
        return vis
    box = scene._id_index[obj.container_id]
    return vis & (open_choice(scene) == box)


def goal_distance(scene: Scene, target_object_id: int) -> np.ndarray:
    """BFS distance (movement actions) from every pose to the nearest goal pose."""
    cache = scene.__dict__.setdefault("_goal_dist", {})
    d = cache.get(target_object_id)
    if d is None:
        d = kernels.bfs_distances(scene.transitions[0], goal_pose_mask(scene, target_object_id))
        cache[target_object_id] = d
    return d


def _designated_goal(scene: Scene, target_object_id: int, mask: np.ndarray) -> int:
    j = scene._id_index[target_object_id]
    _, dep, side = scene.visibility
    idx = np.flatnonzero(mask)
    # closest, then most centered, then lowest pose index
    key = np.lexsort((idx, np.abs(side[idx, j].astype(int) - 2), dep[idx, j]))
    return int(idx[key[0]])


def compute_targets(scene: Scene) -> tuple:
    targets = []
    for tid in scene.target_object_ids:
        obj = scene.object_by_id(tid)
        mask = goal_pose_mask(scene, tid)
        if not mask.any():
            raise SceneError(f"target {tid} has no goal pose")
        kind = "actionable" if obj.container_id is not None else "static"
        g = _designated_goal(scene, tid, mask)
        open_idx = scene._id_index[obj.container_id] if obj.container_id is not None else -1
        target_obs = observe(scene, g, open_idx)
        poses = frozenset(scene.pose_at(i) for i in np.flatnonzero(mask))
        targets.append(TargetSpec(tid, kind, poses, target_obs))
    return tuple(targets)


def finalize(scene: Scene) -> Scene:
    """Attach computed TargetSpecs to a validated scene."""
    object.__setattr__(scene, "targets", compute_targets(scene))
    return scene


# ------------------------------------------------------------------ episodes


def start_candidates(scene: Scene, target_index: int, min_distance: int = MIN_START_DISTANCE) -> np.ndarray:
    tid = scene.targets[target_index].target_object_id
    d = goal_distance(scene, tid)
    return np.flatnonzero(scene.free_pose_mask & (d >= min_distance))


def reset(
    scene: Scene,
    target_index: int,
    rng_seed,
    *,
    max_episode_steps: int = DEFAULT_MAX_STEPS,
    min_distance: int = MIN_START_DISTANCE,
) -> tuple[EpisodeState, Observation]:
    """Start an episode from a uniformly drawn pose at least ``min_distance`` from the goal."""
    if not 0 <= target_index < len(scene.targets):
        raise IndexError(f"target index {target_index} out of range")
    cands = start_candidates(scene, target_index, min_distance)
    if cands.size == 0:
        raise SceneError(f"no start pose at least {min_distance} steps from target {target_index}")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    p = int(cands[rng.integers(cands.size)])
    state = EpisodeState(
        scene=scene,
        pose_idx=p,
        target=scene.targets[target_index],
        target_index=target_index,
        max_episode_steps=max_episode_steps,
        start_pose_idx=p,
    )
    return state, observe(scene, p)


def start_at(scene: Scene, target_index: int, pose: Pose, *, max_episode_steps: int = DEFAULT_MAX_STEPS):
    """Episode from an explicit pose (no distance constraint); used by replays."""
    p = scene.pose_index(pose) if isinstance(pose, Pose) else int(pose)
    state = EpisodeState(scene, p, scene.targets[target_index], target_index, max_episode_steps, start_pose_idx=p)
    return state, observe(scene, p)


def is_goal(state: EpisodeState, pose_idx: Optional[int] = None) -> bool:
    p = state.pose_idx if pose_idx is None else pose_idx
    return bool(goal_distance(state.scene, state.target.target_object_id)[p] == 0)


def step(state: EpisodeState, action: int) -> tuple[Observation, float, bool, dict]:
    if state.done:
        raise EpisodeFinishedError("episode already finished; call reset()")
    action = int(action)
    if not 0 <= action < N_ACTIONS:
        raise ValueError(f"action {action} outside the 10-action space")
    scene = state.scene
    state.steps += 1
    reward = STEP_PENALTY
    info = {"collision": False, "open_failed": False, "success": False}
    collided = False

    if action == STOP:
        target = state.target
        ok = is_goal(state)
        if ok and target.kind == "actionable":
            obj = scene.object_by_id(target.target_object_id)
            ok = state.opened_receptacle == obj.container_id and bool(
                visible_object_mask(scene, state.pose_idx, _open_index(scene, obj.container_id))[
                    scene._id_index[obj.id]
                ]
            )
        state.done = True
        state.outcome = "success" if ok else "failure"
        if ok:
            reward += SUCCESS_REWARD
            info["success"] = True
    else:
        state.opened_receptacle = None  # auto-close
        if action < kernels.N_MOVE_ACTIONS:
            nxt, bump = scene.transitions
            collided = bool(bump[state.pose_idx, action])
            state.pose_idx = int(nxt[state.pose_idx, action])
            if collided:
                state.collisions += 1
                info["collision"] = True
        else:
            j = open_choice(scene)[state.pose_idx]
            if j < 0:
                info["open_failed"] = True
            else:
                state.opened_receptacle = scene.objects[j].id

    if not state.arrived_flag and is_goal(state):
        state.arrived_flag = True
        reward += ARRIVAL_BONUS
    if not state.done and state.steps >= state.max_episode_steps:
        state.done = True
        state.outcome = "failure"
    obs = observe(scene, state.pose_idx, _open_index(scene, state.opened_receptacle), collided)
    return obs, reward, state.done, info


def shortest_path_length(scene: Scene, start: Pose, target) -> int:
    """Minimum number of actions from ``start`` to a successful stop."""
    if isinstance(target, int):
        target = scene.targets[target]
    p = scene.pose_index(start) if isinstance(start, Pose) else int(start)
    d = int(goal_distance(scene, target.target_object_id)[p])
    if d < 0:
        raise SceneError(f"target {target.target_object_id} unreachable from {scene.pose_at(p)}")
    return d + (2 if target.kind == "actionable" else 1)
