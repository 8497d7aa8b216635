"""Procedural single-room kitchen scenes."""

from __future__ import annotations

from collections import deque
from dataclasses import asdict, dataclass

import numpy as np

from .env import finalize, goal_distance, goal_pose_mask
from .scene import ObjectInstance, Scene, SceneError, validate

# name -> (group, height level)
_CATALOG = {
    # openable receptacles (block movement)
    "Fridge": ("receptacle", 1),
    "Cabinet": ("receptacle", 2),
    "Drawer": ("receptacle", 0),
    "Microwave": ("receptacle", 1),
    "Dishwasher": ("receptacle", 0),
    # furniture (blocks movement, not openable)
    "CounterTop": ("furniture", 1),
    "DiningTable": ("furniture", 1),
    "StoveBurner": ("furniture", 1),
    "Sink": ("furniture", 1),
    "Chair": ("furniture", 0),
    "Shelf": ("furniture", 1),
    "GarbageCan": ("furniture", 0),
    "Stool": ("furniture", 0),
    # wall-mounted decor
    "Painting": ("decor", 2),
    "Window": ("decor", 2),
    "Clock": ("decor", 2),
    "LightSwitch": ("decor", 2),
    "Lamp": ("decor", 2),
}
_SMALL = (
    "Apple Mug Bowl Cup Knife Bread Egg Tomato Potato Lettuce Spoon Fork Plate "
    "Pan Pot Kettle Bottle Vase Book Box SaltShaker PepperShaker"
).split()
DEFAULT_VOCABULARY = tuple(list(_CATALOG) + _SMALL)


def make_vocabulary(size: int) -> tuple:
    if size <= len(DEFAULT_VOCABULARY):
        return DEFAULT_VOCABULARY[:size]
    extra = [f"Object{i}" for i in range(len(DEFAULT_VOCABULARY), size)]
    return DEFAULT_VOCABULARY + tuple(extra)


def _group(name: str) -> tuple[str, int]:
    return _CATALOG.get(name, ("small", 1))


@dataclass
class GeneratorConfig:
    width: int = 6
    height: int = 6
    n_walls: int = 0
    divider: bool = True  # interior wall line with one doorway
    n_receptacles: int = 2
    n_furniture: int = 2
    n_decor: int = 2
    n_small: int = 7
    n_contained: int = 3
    n_static_targets: int = 2
    n_actionable_targets: int = 1
    vocab_size: int = 40
    grid_step: float = 0.5
    min_start_distance: int = 10
    max_attempts: int = 400

    def to_dict(self) -> dict:
        return asdict(self)


def _cells_connected(free: np.ndarray) -> bool:
    cells = list(zip(*np.nonzero(free)))
    if not cells:
        return False
    seen = {cells[0]}
    queue = deque([cells[0]])
    while queue:
        y, x = queue.popleft()
        for dy, dx in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            n = (y + dy, x + dx)
            if 0 <= n[0] < free.shape[0] and 0 <= n[1] < free.shape[1] and free[n] and n not in seen:
                seen.add(n)
                queue.append(n)
    return len(seen) == len(cells)


def _divider(rng, w: int, h: int) -> list:
    vertical = bool(rng.integers(2))
    span, length = (w, h) if vertical else (h, w)
    k = int(rng.integers(1, span - 1)) if span > 2 else 0
    door = int(rng.integers(length))
    return [(k, i) if vertical else (i, k) for i in range(length) if i != door]


def _check_params(cfg: GeneratorConfig, vocab: tuple) -> dict:
    groups: dict = {"receptacle": [], "furniture": [], "decor": [], "small": []}
    for i, name in enumerate(vocab):
        groups[_group(name)[0]].append(i)
    need = {
        "receptacle": cfg.n_receptacles,
        "furniture": cfg.n_furniture,
        "decor": cfg.n_decor,
        "small": cfg.n_small + cfg.n_contained,
    }
    for g, n in need.items():
        if n > len(groups[g]):
            raise SceneError(f"infeasible: {n} {g} objects requested, vocabulary has {len(groups[g])}")
    cells = cfg.width * cfg.height
    if cfg.n_walls + cfg.n_receptacles + cfg.n_furniture >= cells:
        raise SceneError("infeasible: more blocking objects than free cells")
    if cfg.n_contained and not cfg.n_receptacles:
        raise SceneError("infeasible: contained objects need a receptacle")
    if cfg.n_static_targets > cfg.n_small:
        raise SceneError("infeasible: not enough free-standing objects for static targets")
    if cfg.n_actionable_targets > cfg.n_contained:
        raise SceneError("infeasible: not enough contained objects for actionable targets")
    return groups


def _attempt(seed: int, attempt: int, cfg: GeneratorConfig, vocab: tuple, groups: dict) -> Scene:
    rng = np.random.default_rng([seed, attempt])
    w, h = cfg.width, cfg.height
    all_cells = [(x, y) for y in range(h) for x in range(w)]
    walls = _divider(rng, w, h) if cfg.divider else []
    rest = [c for c in all_cells if c not in walls]
    order = rng.permutation(len(rest))
    pick = iter(rest[i] for i in order)
    walls += [next(pick) for _ in range(cfg.n_walls)]
    blocking = [next(pick) for _ in range(cfg.n_receptacles + cfg.n_furniture)]
    free = np.ones((h, w), dtype=bool)
    for x, y in walls + blocking:
        free[y, x] = False
    if not _cells_connected(free):
        raise SceneError("disconnected")

    def cats(group, n):
        return [int(c) for c in rng.choice(groups[group], size=n, replace=False)] if n else []

    rec_cats = cats("receptacle", cfg.n_receptacles)
    fur_cats = cats("furniture", cfg.n_furniture)
    dec_cats = cats("decor", cfg.n_decor)
    small_cats = cats("small", cfg.n_small + cfg.n_contained)

    objects = []
    oid = 0
    for k, (c, cell) in enumerate(zip(rec_cats + fur_cats, blocking)):
        objects.append(
            ObjectInstance(oid, c, cell, _group(vocab[c])[1], openable=k < cfg.n_receptacles, blocks_movement=True)
        )
        oid += 1
    open_cells = [c for c in all_cells if c not in walls]
    for c in dec_cats:
        cell = open_cells[rng.integers(len(open_cells))]
        objects.append(ObjectInstance(oid, c, cell, 2))
        oid += 1
    free_standing = []
    for c in small_cats[: cfg.n_small]:
        cell = open_cells[rng.integers(len(open_cells))]
        level = 0 if free[cell[1], cell[0]] else 1
        objects.append(ObjectInstance(oid, c, cell, level, pickupable=True))
        free_standing.append(oid)
        oid += 1
    contained = []
    receptacles = list(range(cfg.n_receptacles))
    for c in small_cats[cfg.n_small:]:
        box = objects[receptacles[rng.integers(len(receptacles))]]
        objects.append(ObjectInstance(oid, c, None, box.height_level, pickupable=True, container_id=box.id))
        contained.append(oid)
        oid += 1

    probe = Scene(w, h, cfg.grid_step, frozenset(walls), tuple(objects), vocab, (), seed)
    validate(probe)
    ok = [oid for oid in free_standing + contained if _target_feasible(probe, oid, cfg.min_start_distance)]
    ok_static = [i for i in free_standing if i in ok]
    ok_act = [i for i in contained if i in ok]
    if len(ok_static) < cfg.n_static_targets or len(ok_act) < cfg.n_actionable_targets:
        raise SceneError("not enough feasible targets")
    static_t = [int(i) for i in rng.choice(ok_static, size=cfg.n_static_targets, replace=False)]
    act_t = [int(i) for i in rng.choice(ok_act, size=cfg.n_actionable_targets, replace=False)]
    scene = Scene(
        width=w,
        height=h,
        grid_step=cfg.grid_step,
        walls=frozenset(walls),
        objects=tuple(objects),
        vocabulary=vocab,
        target_object_ids=tuple(static_t + act_t),
        seed=seed,
    )
    validate(scene)
    return finalize(scene)


def _target_feasible(scene: Scene, oid: int, min_distance: int) -> bool:
    """Goal poses exist, are reachable from every free pose, and some start is far enough."""
    if not goal_pose_mask(scene, oid).any():
        return False
    d = goal_distance(scene, oid)[scene.free_pose_mask]
    return bool((d >= 0).all() and (d >= min_distance).any())


def generate_scene(seed: int, params: GeneratorConfig | None = None) -> Scene:
    """Deterministic scene for (seed, params); retries internally until feasible."""
    cfg = params or GeneratorConfig()
    vocab = make_vocabulary(cfg.vocab_size)
    groups = _check_params(cfg, vocab)
    for attempt in range(cfg.max_attempts):
        try:
            return _attempt(seed, attempt, cfg, vocab, groups)
        except SceneError:
            continue
    raise SceneError(f"infeasible: no valid scene after {cfg.max_attempts} attempts (seed {seed})")
