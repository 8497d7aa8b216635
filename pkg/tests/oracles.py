"""Slow reference implementations used as test oracles."""

from collections import deque

DX = (0, 1, 0, -1)
DY = (-1, 0, 1, 0)


def sees(x, y, heading, pitch, cell, level, radius=3):
    dx, dy = cell[0] - x, cell[1] - y
    f = dx * DX[heading] + dy * DY[heading]
    r = (heading + 1) % 4
    lat = dx * DX[r] + dy * DY[r]
    return f > 0 and abs(lat) <= f and dx * dx + dy * dy <= radius * radius and level == pitch


def free(scene, x, y):
    return 0 <= x < scene.width and 0 <= y < scene.height and not scene.blocked[y, x]


def poses(scene):
    for y in range(scene.height):
        for x in range(scene.width):
            if free(scene, x, y):
                for h in range(4):
                    for p in range(3):
                        yield (x, y, h, p)


def goal_poses(scene, target_id):
    obj = scene.object_by_id(target_id)
    out = set()
    for x, y, h, p in poses(scene):
        if obj.container_id is None:
            if sees(x, y, h, p, obj.cell, obj.height_level):
                out.add((x, y, h, p))
            continue
        box = scene.object_by_id(obj.container_id)
        opens = [
            (((o.cell[0] - x) ** 2 + (o.cell[1] - y) ** 2), k, o)
            for k, o in enumerate(scene.objects)
            if o.openable and o.cell is not None and sees(x, y, h, p, o.cell, o.height_level)
        ]
        if opens and min(opens, key=lambda t: (t[0], t[1]))[2].id == box.id and sees(
            x, y, h, p, box.cell, obj.height_level
        ):
            out.add((x, y, h, p))
    return out


def neighbors(scene, pose):
    x, y, h, p = pose
    out = []
    for turn in (0, 2, 1, 3):  # forward, back, right, left
        d = (h + turn) % 4
        nx, ny = x + DX[d], y + DY[d]
        out.append((nx, ny, h, p) if free(scene, nx, ny) else pose)
    out.append((x, y, (h + 1) % 4, p))
    out.append((x, y, (h + 3) % 4, p))
    out.append((x, y, h, min(p + 1, 2)))
    out.append((x, y, h, max(p - 1, 0)))
    return out


def bfs_length(scene, start, target):
    """Actions to a successful stop: moves to a goal pose, then open (actionable) and stop."""
    goals = goal_poses(scene, target.target_object_id)
    extra = 2 if target.kind == "actionable" else 1
    seen = {start: 0}
    q = deque([start])
    while q:
        s = q.popleft()
        if s in goals:
            return seen[s] + extra
        for n in neighbors(scene, s):
            if n not in seen:
                seen[n] = seen[s] + 1
                q.append(n)
    return None
