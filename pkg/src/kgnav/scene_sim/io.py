"""Scene file reader/writer.

Format (UTF-8, one record per line, ``#`` starts a comment line)::

    kgnav-scene 1
    width 6
    height 6
    grid_step 0.5
    seed 11
    vocab Fridge Cabinet Apple Mug
    wall 3 2
    object id=0 cat=0 cell=1,4 level=counter openable=1 pickupable=0 blocks=1
    object id=1 cat=2 in=0 level=counter openable=0 pickupable=1 blocks=0
    target object=1

The header keys must appear before any record, in any order. ``cell=x,y``
places a free-standing object; ``in=<id>`` puts it inside an openable
receptacle instead. Target kind and goal poses are derived on load.
``save_scene`` writes walls sorted by (x, y) and objects/targets in scene
order, so ``save(load(save(s)))`` is byte-identical to ``save(s)``.
"""

from __future__ import annotations

from pathlib import Path

from .env import finalize
from .scene import LEVELS, ObjectInstance, Scene, SceneError, validate

MAGIC = "kgnav-scene"
VERSION = 1
_HEADER_KEYS = ("width", "height", "grid_step", "seed", "vocab")
_FLAG_KEYS = ("openable", "pickupable", "blocks")


class SceneParseError(SceneError):
    def __init__(self, lineno: int, field: str, msg: str):
        super().__init__(f"line {lineno}: {field}: {msg}")
        self.lineno = lineno
        self.field = field


def _int(lineno, field, text):
    try:
        return int(text)
    except ValueError:
        raise SceneParseError(lineno, field, f"expected integer, got {text!r}") from None


def _flag(lineno, field, text):
    if text not in ("0", "1"):
        raise SceneParseError(lineno, field, f"expected 0 or 1, got {text!r}")
    return text == "1"


def _parse_object(lineno: int, tokens: list[str]) -> ObjectInstance:
    kv = {}
    for tok in tokens:
        key, sep, val = tok.partition("=")
        if not sep:
            raise SceneParseError(lineno, tok, "expected key=value")
        if key in kv:
            raise SceneParseError(lineno, key, "duplicate field")
        kv[key] = val
    for key in ("id", "cat", "level"):
        if key not in kv:
            raise SceneParseError(lineno, key, "missing field")
    if ("cell" in kv) == ("in" in kv):
        raise SceneParseError(lineno, "cell/in", "exactly one of cell= or in= is required")
    unknown = set(kv) - {"id", "cat", "cell", "in", "level", *_FLAG_KEYS}
    if unknown:
        raise SceneParseError(lineno, sorted(unknown)[0], "unknown field")
    if kv["level"] not in LEVELS:
        raise SceneParseError(lineno, "level", f"expected one of {LEVELS}")
    cell = None
    container = None
    if "cell" in kv:
        parts = kv["cell"].split(",")
        if len(parts) != 2:
            raise SceneParseError(lineno, "cell", "expected x,y")
        cell = (_int(lineno, "cell", parts[0]), _int(lineno, "cell", parts[1]))
    else:
        container = _int(lineno, "in", kv["in"])
    flags = {k: _flag(lineno, k, kv.get(k, "0")) for k in _FLAG_KEYS}
    return ObjectInstance(
        id=_int(lineno, "id", kv["id"]),
        category=_int(lineno, "cat", kv["cat"]),
        cell=cell,
        height_level=LEVELS.index(kv["level"]),
        openable=flags["openable"],
        pickupable=flags["pickupable"],
        container_id=container,
        blocks_movement=flags["blocks"],
    )


def parse_scene(text: str) -> Scene:
    """Parse and validate a scene file, computing goal poses for its targets."""
    header: dict = {}
    walls, objects, targets = [], [], []
    seen_magic = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, *rest = line.split()
        if not seen_magic:
            if key != MAGIC or rest != [str(VERSION)]:
                raise SceneParseError(lineno, "magic", f"expected '{MAGIC} {VERSION}'")
            seen_magic = True
            continue
        if key in _HEADER_KEYS:
            if walls or objects or targets:
                raise SceneParseError(lineno, key, "header key after records")
            if key in header:
                raise SceneParseError(lineno, key, "duplicate header key")
            if key == "vocab":
                if not rest:
                    raise SceneParseError(lineno, key, "empty vocabulary")
                header[key] = tuple(rest)
            elif len(rest) != 1:
                raise SceneParseError(lineno, key, "expected one value")
            elif key == "grid_step":
                try:
                    header[key] = float(rest[0])
                except ValueError:
                    raise SceneParseError(lineno, key, f"expected number, got {rest[0]!r}") from None
            else:
                header[key] = _int(lineno, key, rest[0])
        elif key == "wall":
            if len(rest) != 2:
                raise SceneParseError(lineno, "wall", "expected 'wall x y'")
            walls.append((_int(lineno, "wall", rest[0]), _int(lineno, "wall", rest[1])))
        elif key == "object":
            objects.append(_parse_object(lineno, rest))
        elif key == "target":
            if len(rest) != 1 or not rest[0].startswith("object="):
                raise SceneParseError(lineno, "target", "expected 'target object=<id>'")
            targets.append(_int(lineno, "target", rest[0][len("object="):]))
        else:
            raise SceneParseError(lineno, key, "unknown record")
    if not seen_magic:
        raise SceneParseError(0, "magic", "empty file")
    for key in ("width", "height", "vocab"):
        if key not in header:
            raise SceneParseError(0, key, "missing header key")
    scene = Scene(
        width=header["width"],
        height=header["height"],
        grid_step=header.get("grid_step", 0.5),
        walls=frozenset(walls),
        objects=tuple(objects),
        vocabulary=header["vocab"],
        target_object_ids=tuple(targets),
        seed=header.get("seed", 0),
    )
    validate(scene)
    return finalize(scene)


def format_scene(scene: Scene) -> str:
    lines = [
        f"{MAGIC} {VERSION}",
        f"width {scene.width}",
        f"height {scene.height}",
        f"grid_step {scene.grid_step!r}",
        f"seed {scene.seed}",
        "vocab " + " ".join(scene.vocabulary),
    ]
    for x, y in sorted(scene.walls):
        lines.append(f"wall {x} {y}")
    for o in scene.objects:
        where = f"cell={o.cell[0]},{o.cell[1]}" if o.container_id is None else f"in={o.container_id}"
        lines.append(
            f"object id={o.id} cat={o.category} {where} level={LEVELS[o.height_level]} "
            f"openable={int(o.openable)} pickupable={int(o.pickupable)} blocks={int(o.blocks_movement)}"
        )
    for tid in scene.target_object_ids:
        lines.append(f"target object={tid}")
    return "\n".join(lines) + "\n"


def load_scene(path_or_text) -> Scene:
    """Load from a path, or parse directly when given file contents."""
    if isinstance(path_or_text, Path) or (isinstance(path_or_text, str) and "\n" not in path_or_text):
        return parse_scene(Path(path_or_text).read_text(encoding="utf-8"))
    return parse_scene(path_or_text)


def save_scene(scene: Scene, path) -> None:
    Path(path).write_text(format_scene(scene), encoding="utf-8")
