"""Evaluation: SR, SPL, collision and last-frame visibility statistics.

Every variant is evaluated on the same start poses: episode ``k`` of target
``(scene, t)`` draws its start from ``default_rng([seed, scene, t, k])``.
Evaluation reads the parameters and the knowledge graph but never writes
them.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .kg import KnowledgeGraph
from .policy import PolicyModel
from .scene_sim import env
from .scene_sim.env import N_ACTIONS

SEEN_STEP_CAP = 100
UNSEEN_STEP_CAP = 1000
COLUMNS = ("scene", "target", "kind", "episodes", "sr", "spl", "collisions", "visible_end")


@dataclass(frozen=True)
class EpisodeResult:
    success: bool
    path_length: int
    shortest: int
    collisions: int = 0
    target_visible_at_end: bool = False
    target: int = 0
    scene: int = 0

    def __post_init__(self):
        if self.path_length < 1 or self.shortest < 1:
            raise ValueError("path_length and shortest must be >= 1")


def success_rate(results) -> float:
    results = list(results)
    if not results:
        raise ValueError("success_rate of an empty result set")
    return sum(1 for r in results if r.success) / len(results)


def spl(results) -> float:
    """(1/N) sum S_i L_i / max(P_i, L_i)."""
    results = list(results)
    if not results:
        raise ValueError("spl of an empty result set")
    total = 0.0
    for r in results:
        if r.shortest <= 0:
            raise ValueError(f"nonpositive shortest path length {r.shortest}")
        if r.success:
            total += r.shortest / max(r.path_length, r.shortest)
    return total / len(results)


# ---------------------------------------------------------------------- agents


class ModelAgent:
    """Acts from a trained network; greedy argmax unless ``sample`` is set."""

    def __init__(self, model: PolicyModel, params, graph: KnowledgeGraph | None, sample: bool = False):
        self.model = model
        self.params = params
        self.graph = graph
        self.sample = sample

    def begin(self, scene, target_index, target_obs, rng):
        if scene.vocab_size != self.model.config.vocab_size:
            raise ValueError(
                f"checkpoint vocabulary size {self.model.config.vocab_size} != scene vocabulary {scene.vocab_size}"
            )
        self.rng = rng
        graph = self.graph if self.model.config.use_kg else None
        self.ctx = self.model.context(self.params, target_obs, graph)
        self.state = self.model.initial_state(self.params.dtype)
        self.last_attention = None

    def act(self, obs, episode_state) -> int:
        out = self.model.act(self.params, self.ctx, obs, self.state)
        self.state = out.lstm_state
        self.last_attention = out.attention
        if self.sample:
            z = out.logits.astype(np.float64)
            p = np.exp(z - z.max())
            return int(self.rng.choice(N_ACTIONS, p=p / p.sum()))
        return int(np.argmax(out.logits))  # argmax returns the lowest index on ties


class RandomAgent:
    def begin(self, scene, target_index, target_obs, rng):
        self.rng = rng

    def act(self, obs, episode_state) -> int:
        return int(self.rng.integers(N_ACTIONS))


class ShortestPathAgent:
    """Privileged oracle: follows the BFS distance field (it reads the pose)."""

    def begin(self, scene, target_index, target_obs, rng):
        self.scene = scene
        self.target = scene.targets[target_index]
        self.dist = env.goal_distance(scene, self.target.target_object_id)
        self.opened = False

    def act(self, obs, st) -> int:
        p = st.pose_idx
        if self.dist[p] == 0:
            if self.target.kind == "actionable" and not self.opened:
                self.opened = True
                return env.OPEN
            return env.STOP
        nxt = self.scene.transitions[0][p]
        return int(np.argmin(np.where(self.dist[nxt] >= 0, self.dist[nxt], np.iinfo(np.int32).max)))


# --------------------------------------------------------------------- running


def episode_seed(seed: int, scene_index: int, target_index: int, k: int):
    return np.random.default_rng([seed, scene_index, target_index, k])


def run_episode(agent, scene, scene_index, target_index, rng, step_cap, min_distance=env.MIN_START_DISTANCE):
    state, obs = env.reset(scene, target_index, rng, max_episode_steps=step_cap, min_distance=min_distance)
    target = state.target
    shortest = env.shortest_path_length(scene, scene.pose_at(state.pose_idx), target)
    agent.begin(scene, target_index, target.target_observation, rng)
    while not state.done:
        obs, _, _, _ = env.step(state, agent.act(obs, state))
    cat = scene.object_by_id(target.target_object_id).category
    return EpisodeResult(
        success=state.outcome == "success",
        path_length=state.steps,
        shortest=shortest,
        collisions=state.collisions,
        target_visible_at_end=bool(obs.visible[cat]),
        target=target_index,
        scene=scene_index,
    )


@dataclass
class EvalReport:
    results: list
    rows: list

    @property
    def sr(self) -> float:
        return success_rate(self.results)

    @property
    def spl(self) -> float:
        return spl(self.results)

    def format_table(self) -> str:
        cells = [list(COLUMNS)]
        for r in self.rows:
            cells.append([_fmt(r[c]) for c in COLUMNS])
        widths = [max(len(row[i]) for row in cells) for i in range(len(COLUMNS))]
        return "".join("  ".join(v.rjust(w) for v, w in zip(row, widths)).rstrip() + "\n" for row in cells)

    def write_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for r in self.rows:
                fh.write(json.dumps(r, sort_keys=True) + "\n")

    def write_episodes(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for r in self.results:
                fh.write(json.dumps(asdict(r), sort_keys=True) + "\n")


def _fmt(v) -> str:
    return f"{v:.4f}" if isinstance(v, float) else str(v)


def summarize(results, scene="all", target="all", kind="all") -> dict:
    results = list(results)
    return {
        "scene": scene,
        "target": target,
        "kind": kind,
        "episodes": len(results),
        "sr": success_rate(results),
        "spl": spl(results),
        "collisions": float(np.mean([r.collisions for r in results])),
        "visible_end": float(np.mean([r.target_visible_at_end for r in results])),
    }


def run_eval(agent, scenes, targets, episodes_per_target: int = 100, step_cap: int = SEEN_STEP_CAP,
             seed: int = 0, min_distance: int = env.MIN_START_DISTANCE) -> EvalReport:
    """Evaluate ``agent`` on ``targets`` = [(scene index, target index), ...]."""
    if episodes_per_target < 1 or not targets:
        raise ValueError("evaluation needs at least one target and one episode")
    results, rows = [], []
    for si, ti in targets:
        scene = scenes[si]
        res = [
            run_episode(agent, scene, si, ti, episode_seed(seed, si, ti, k), step_cap, min_distance)
            for k in range(episodes_per_target)
        ]
        results.extend(res)
        rows.append(summarize(res, si, ti, scene.targets[ti].kind))
    for kind in ("static", "actionable"):
        sub = [r for r in results if scenes[r.scene].targets[r.target].kind == kind]
        if sub:
            rows.append(summarize(sub, kind=kind))
    rows.append(summarize(results))
    return EvalReport(results, rows)


def agent_from_checkpoint(path, sample: bool = False) -> ModelAgent:
    from .trainer.train import read_checkpoint

    ck = read_checkpoint(Path(path), np.float32)
    return ModelAgent(ck.model, ck.params, ck.graph, sample)
