"""Rollout containers shared by the trainer, TSE, and the expert generator."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional

from .scene_sim.env import ACTION_INDEX, ACTIONS, EpisodeState
from .scene_sim.scene import Observation


class Transition(NamedTuple):
    observation: Observation
    action: int
    reward: float
    done: bool
    value: float


@dataclass
class Trajectory:
    """Ordered transitions toward one target.

    ``observations[t]`` is the observation the agent acted on at step t.
    ``start`` is a copy of the episode state before the first action, which
    is what replay checks start from.
    """

    target_obs: Observation
    observations: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    dones: list = field(default_factory=list)
    values: list = field(default_factory=list)
    bootstrap: float = 0.0
    lstm_state: Optional[tuple] = None
    start: Optional[EpisodeState] = None
    target_index: Optional[int] = None

    def __len__(self) -> int:
        return len(self.actions)

    def append(self, obs, action, reward, done, value=0.0) -> None:
        self.observations.append(obs)
        self.actions.append(int(action))
        self.rewards.append(float(reward))
        self.dones.append(bool(done))
        self.values.append(float(value))

    @property
    def transitions(self) -> list:
        return [Transition(*t) for t in zip(self.observations, self.actions, self.rewards, self.dones, self.values)]

    @property
    def done(self) -> bool:
        return bool(self.dones and self.dones[-1])

    def check(self) -> None:
        if not self.actions:
            raise ValueError("trajectory is empty")
        if any(self.dones[:-1]):
            raise ValueError("done set before the final transition")
        if self.done and self.bootstrap != 0.0:
            raise ValueError("terminal trajectory must bootstrap from 0")


def save_actions(path, actions, header: dict) -> None:
    """Action-name-per-line cache file with a ``# key value`` header."""
    lines = [f"# {k} {v}" for k, v in header.items()]
    lines += [ACTIONS[a] for a in actions]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_actions(path) -> tuple[list, dict]:
    header, actions = {}, []
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition(" ")
            header[key] = val
        else:
            if line not in ACTION_INDEX:
                raise ValueError(f"unknown action {line!r}")
            actions.append(ACTION_INDEX[line])
    return actions, header
