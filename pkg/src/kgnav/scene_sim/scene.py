"""Scene description and the per-scene lookup tables built from it."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Optional

import numpy as np

from .. import kernels

HEADINGS = ("N", "E", "S", "W")
PITCHES = ("down", "level", "up")
LEVELS = ("floor", "counter", "high")  # seen at pitch down / level / up

VISIBILITY_METERS = 1.5


class SceneError(ValueError):
    """A scene file failed to parse or a scene violates an invariant."""


class Pose(NamedTuple):
    x: int
    y: int
    heading: int
    pitch: int

    @property
    def cell(self) -> tuple[int, int]:
        return (self.x, self.y)


@dataclass(frozen=True)
class ObjectInstance:
    id: int
    category: int
    cell: Optional[tuple[int, int]]  # None when contained
    height_level: int
    openable: bool = False
    pickupable: bool = False
    container_id: Optional[int] = None
    blocks_movement: bool = False
    # Scenes are immutable: an object's open state lives in EpisodeState.
    is_open: bool = False


@dataclass(frozen=True, eq=False)
class TargetSpec:
    target_object_id: int
    kind: str  # "static" | "actionable"
    goal_poses: frozenset
    target_observation: "Observation"


@dataclass(frozen=True, eq=False)
class Observation:
    """Egocentric symbolic view, per vocabulary category.

    ``direction`` uses 0 for absent, 1/2/3 for left/center/right. ``depth`` is
    the forward distance in cells (1..3), 0 when absent.
    """

    visible: np.ndarray
    depth: np.ndarray
    direction: np.ndarray
    open_flags: np.ndarray
    collision_last: bool = False

    def __eq__(self, other):
        if not isinstance(other, Observation):
            return NotImplemented
        return (
            self.collision_last == other.collision_last
            and np.array_equal(self.visible, other.visible)
            and np.array_equal(self.depth, other.depth)
            and np.array_equal(self.direction, other.direction)
            and np.array_equal(self.open_flags, other.open_flags)
        )

    def __hash__(self):
        return hash((self.visible.tobytes(), self.depth.tobytes(), self.direction.tobytes(),
                     self.open_flags.tobytes(), self.collision_last))

    @classmethod
    def empty(cls, vocab_size: int) -> "Observation":
        z = np.zeros(vocab_size, dtype=np.int8)
        z.flags.writeable = False
        return cls(z, z, z, z, False)


@dataclass(frozen=True, eq=False)
class Scene:
    width: int
    height: int
    grid_step: float
    walls: frozenset
    objects: tuple
    vocabulary: tuple
    target_object_ids: tuple
    seed: int = 0
    targets: tuple = field(default=(), compare=False)

    @property
    def vocab_size(self) -> int:
        return len(self.vocabulary)

    @property
    def n_poses(self) -> int:
        return self.width * self.height * 4 * 3

    def object_by_id(self, oid: int) -> ObjectInstance:
        return self.objects[self._id_index[oid]]

    def object_cell(self, obj: ObjectInstance) -> tuple[int, int]:
        if obj.container_id is not None:
            return self.object_cell(self.object_by_id(obj.container_id))
        return obj.cell

    def pose_index(self, pose: Pose) -> int:
        return ((pose.y * self.width + pose.x) * 4 + pose.heading) * 3 + pose.pitch

    def pose_at(self, idx: int) -> Pose:
        idx = int(idx)
        pitch = idx % 3
        idx //= 3
        heading = idx % 4
        idx //= 4
        return Pose(idx % self.width, idx // self.width, heading, pitch)

    def in_bounds(self, cell) -> bool:
        return 0 <= cell[0] < self.width and 0 <= cell[1] < self.height

    # -- tables -----------------------------------------------------------

    @cached_property
    def _id_index(self) -> dict:
        return {o.id: i for i, o in enumerate(self.objects)}

    @cached_property
    def blocked(self) -> np.ndarray:
        grid = np.zeros((self.height, self.width), dtype=bool)
        for x, y in self.walls:
            grid[y, x] = True
        for o in self.objects:
            if o.blocks_movement and o.container_id is None:
                x, y = o.cell
                grid[y, x] = True
        return grid

    @cached_property
    def free_pose_mask(self) -> np.ndarray:
        free = ~self.blocked
        return np.repeat(free.ravel(), 12)

    @cached_property
    def transitions(self) -> tuple:
        return kernels.pose_transitions(self.width, self.height, self.blocked)

    @cached_property
    def radius_cells(self) -> float:
        return VISIBILITY_METERS / self.grid_step

    @cached_property
    def visibility(self) -> tuple:
        cells = [self.object_cell(o) for o in self.objects]
        xs = np.array([c[0] for c in cells], dtype=np.int64)
        ys = np.array([c[1] for c in cells], dtype=np.int64)
        lv = np.array([o.height_level for o in self.objects], dtype=np.int64)
        return kernels.visibility_table(self.width, self.height, xs, ys, lv, self.radius_cells)

    @cached_property
    def object_arrays(self) -> dict:
        objs = self.objects
        cont = np.array(
            [self._id_index[o.container_id] if o.container_id is not None else -1 for o in objs],
            dtype=np.int64,
        )
        return {
            "category": np.array([o.category for o in objs], dtype=np.int64),
            "container": cont,
            "openable": np.array([o.openable for o in objs], dtype=bool),
            "pickupable": np.array([o.pickupable for o in objs], dtype=bool),
        }

    @cached_property
    def _obs_cache(self) -> dict:
        return {}

    def target_index_of(self, object_id: int) -> int:
        for i, t in enumerate(self.targets):
            if t.target_object_id == object_id:
                return i
        raise KeyError(object_id)


def validate(scene: Scene) -> None:
    """Raise SceneError naming the first violated invariant."""
    if scene.width < 1 or scene.height < 1:
        raise SceneError("grid must be at least 1x1")
    if scene.grid_step <= 0:
        raise SceneError("grid_step must be positive")
    for cell in scene.walls:
        if not scene.in_bounds(cell):
            raise SceneError(f"wall {cell} out of bounds")
    ids = [o.id for o in scene.objects]
    if len(set(ids)) != len(ids):
        raise SceneError("object ids must be unique")
    by_id = {o.id: o for o in scene.objects}
    v = scene.vocab_size
    if len(set(scene.vocabulary)) != v:
        raise SceneError("vocabulary names must be unique")
    for o in scene.objects:
        if not 0 <= o.category < v:
            raise SceneError(f"object {o.id}: vocabulary index {o.category} >= |V| = {v}")
        if o.height_level not in (0, 1, 2):
            raise SceneError(f"object {o.id}: bad height level {o.height_level}")
        if o.is_open and not o.openable:
            raise SceneError(f"object {o.id}: is_open set on a non-openable object")
        if o.container_id is not None:
            if o.cell is not None:
                raise SceneError(f"object {o.id}: contained object must not carry its own cell")
            box = by_id.get(o.container_id)
            if box is None:
                raise SceneError(f"object {o.id}: container {o.container_id} does not exist")
            if not box.openable:
                raise SceneError(f"object {o.id}: container {o.container_id} is not openable")
            if box.container_id is not None:
                raise SceneError(f"object {o.id}: nested containers are not supported")
        else:
            if o.cell is None or not scene.in_bounds(o.cell):
                raise SceneError(f"object {o.id}: cell out of bounds")
            if tuple(o.cell) in scene.walls:
                raise SceneError(f"object {o.id}: cell {o.cell} is a wall")
    for tid in scene.target_object_ids:
        if tid not in by_id:
            raise SceneError(f"target references missing object {tid}")
    if len(set(scene.target_object_ids)) != len(scene.target_object_ids):
        raise SceneError("duplicate target")
