"""Hot loops of the simulator and trainer.

Every kernel has a numba body (``_nb_*``) and a numpy body (``_np_*``); the
public name is bound to one of them according to ``kgnav._accel.USE_NUMBA``.
Both bodies must return identical arrays, which ``tests/test_kernels.py``
asserts.

Pose encoding shared by all kernels::

    pose = ((y * width + x) * 4 + heading) * 3 + pitch

Headings are N, E, S, W (0..3) with y growing southwards; pitch is
down, level, up (0..2). The first eight action ids are the movement actions
of :mod:`kgnav.scene_sim.env`.
"""

import numpy as np

from ._accel import USE_NUMBA, njit

N_HEADINGS = 4
N_PITCHES = 3
N_MOVE_ACTIONS = 8

HEADING_DX = np.array([0, 1, 0, -1], dtype=np.int64)
HEADING_DY = np.array([-1, 0, 1, 0], dtype=np.int64)

# offset added to the heading for move_forward, move_back, move_right, move_left
_MOVE_TURN = np.array([0, 2, 1, 3], dtype=np.int64)


# ---------------------------------------------------------------- transitions


@njit
def _nb_pose_transitions(width, height, blocked):
    n = width * height * N_HEADINGS * N_PITCHES
    nxt = np.empty((n, N_MOVE_ACTIONS), dtype=np.int32)
    bump = np.zeros((n, N_MOVE_ACTIONS), dtype=np.bool_)
    dxs = np.array([0, 1, 0, -1])
    dys = np.array([-1, 0, 1, 0])
    turns = np.array([0, 2, 1, 3])
    for y in range(height):
        for x in range(width):
            for h in range(N_HEADINGS):
                for p in range(N_PITCHES):
                    idx = ((y * width + x) * N_HEADINGS + h) * N_PITCHES + p
                    for a in range(4):
                        d = (h + turns[a]) % 4
                        nx = x + dxs[d]
                        ny = y + dys[d]
                        if nx < 0 or ny < 0 or nx >= width or ny >= height or blocked[ny, nx]:
                            nxt[idx, a] = idx
                            bump[idx, a] = True
                        else:
                            nxt[idx, a] = ((ny * width + nx) * N_HEADINGS + h) * N_PITCHES + p
                    base = (y * width + x) * N_HEADINGS
                    nxt[idx, 4] = (base + (h + 1) % 4) * N_PITCHES + p
                    nxt[idx, 5] = (base + (h + 3) % 4) * N_PITCHES + p
                    nxt[idx, 6] = (base + h) * N_PITCHES + min(p + 1, N_PITCHES - 1)
                    nxt[idx, 7] = (base + h) * N_PITCHES + max(p - 1, 0)
    return nxt, bump


def _np_pose_transitions(width, height, blocked):
    blocked = np.asarray(blocked, dtype=bool)
    y, x, h, p = np.meshgrid(
        np.arange(height), np.arange(width), np.arange(N_HEADINGS), np.arange(N_PITCHES), indexing="ij"
    )
    y, x, h, p = (v.ravel() for v in (y, x, h, p))
    idx = ((y * width + x) * N_HEADINGS + h) * N_PITCHES + p
    nxt = np.empty((idx.size, N_MOVE_ACTIONS), dtype=np.int32)
    bump = np.zeros((idx.size, N_MOVE_ACTIONS), dtype=bool)
    for a in range(4):
        d = (h + _MOVE_TURN[a]) % 4
        nx = x + HEADING_DX[d]
        ny = y + HEADING_DY[d]
        inside = (nx >= 0) & (ny >= 0) & (nx < width) & (ny < height)
        hit = ~inside
        hit[inside] = blocked[ny[inside], nx[inside]]
        moved = ((ny * width + nx) * N_HEADINGS + h) * N_PITCHES + p
        nxt[:, a] = np.where(hit, idx, moved)
        bump[:, a] = hit
    base = (y * width + x) * N_HEADINGS
    nxt[:, 4] = (base + (h + 1) % 4) * N_PITCHES + p
    nxt[:, 5] = (base + (h + 3) % 4) * N_PITCHES + p
    nxt[:, 6] = (base + h) * N_PITCHES + np.minimum(p + 1, N_PITCHES - 1)
    nxt[:, 7] = (base + h) * N_PITCHES + np.maximum(p - 1, 0)
    return nxt, bump


# ----------------------------------------------------------------- visibility


@njit
def _nb_visibility_table(width, height, obj_x, obj_y, obj_level, radius_sq):
    n = width * height * N_HEADINGS * N_PITCHES
    m = obj_x.shape[0]
    vis = np.zeros((n, m), dtype=np.bool_)
    depth = np.zeros((n, m), dtype=np.int8)
    side = np.zeros((n, m), dtype=np.int8)
    dxs = np.array([0, 1, 0, -1])
    dys = np.array([-1, 0, 1, 0])
    for y in range(height):
        for x in range(width):
            for h in range(N_HEADINGS):
                rh = (h + 1) % 4
                for p in range(N_PITCHES):
                    idx = ((y * width + x) * N_HEADINGS + h) * N_PITCHES + p
                    for j in range(m):
                        if obj_level[j] != p:
                            continue
                        dx = obj_x[j] - x
                        dy = obj_y[j] - y
                        f = dx * dxs[h] + dy * dys[h]
                        lat = dx * dxs[rh] + dy * dys[rh]
                        if f <= 0 or abs(lat) > f or f * f + lat * lat > radius_sq:
                            continue
                        vis[idx, j] = True
                        depth[idx, j] = f
                        if lat < 0:
                            side[idx, j] = 1
                        elif lat == 0:
                            side[idx, j] = 2
                        else:
                            side[idx, j] = 3
    return vis, depth, side


def _np_visibility_table(width, height, obj_x, obj_y, obj_level, radius_sq):
    y, x, h, p = np.meshgrid(
        np.arange(height), np.arange(width), np.arange(N_HEADINGS), np.arange(N_PITCHES), indexing="ij"
    )
    y, x, h, p = (v.ravel()[:, None] for v in (y, x, h, p))
    dx = np.asarray(obj_x, dtype=np.int64)[None, :] - x
    dy = np.asarray(obj_y, dtype=np.int64)[None, :] - y
    f = dx * HEADING_DX[h] + dy * HEADING_DY[h]
    rh = (h + 1) % 4
    lat = dx * HEADING_DX[rh] + dy * HEADING_DY[rh]
    vis = (
        (np.asarray(obj_level)[None, :] == p)
        & (f > 0)
        & (np.abs(lat) <= f)
        & (f * f + lat * lat <= radius_sq)
    )
    depth = np.where(vis, f, 0).astype(np.int8)
    side = np.where(vis, np.sign(lat) + 2, 0).astype(np.int8)
    return vis, depth, side


# ------------------------------------------------------------------------ BFS


@njit
def _nb_bfs_distances(nxt, sources):
    n = nxt.shape[0]
    dist = np.full(n, -1, dtype=np.int32)
    queue = np.empty(n, dtype=np.int64)
    head = 0
    tail = 0
    for i in range(n):
        if sources[i]:
            dist[i] = 0
            queue[tail] = i
            tail += 1
    while head < tail:
        u = queue[head]
        head += 1
        for a in range(nxt.shape[1]):
            v = nxt[u, a]
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                queue[tail] = v
                tail += 1
    return dist


def _np_bfs_distances(nxt, sources):
    dist = np.full(nxt.shape[0], -1, dtype=np.int32)
    frontier = np.flatnonzero(sources)
    dist[frontier] = 0
    level = 0
    while frontier.size:
        level += 1
        cand = np.unique(nxt[frontier].ravel())
        cand = cand[dist[cand] < 0]
        dist[cand] = level
        frontier = cand
    return dist


# -------------------------------------------------------------------- returns


@njit
def _nb_discounted_returns(rewards, bootstrap, gamma):
    out = np.empty(rewards.shape[0], dtype=np.float64)
    acc = bootstrap
    for t in range(rewards.shape[0] - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


def _np_discounted_returns(rewards, bootstrap, gamma):
    out = np.empty(len(rewards), dtype=np.float64)
    acc = float(bootstrap)
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


# -------------------------------------------------------------------- RMSProp


@njit
def _nb_rmsprop_update(w, sq, g, lr, alpha, eps):
    for i in range(w.shape[0]):
        s = alpha * sq[i] + (1.0 - alpha) * g[i] * g[i]
        sq[i] = s
        w[i] -= lr * g[i] / (np.sqrt(s) + eps)


def _np_rmsprop_update(w, sq, g, lr, alpha, eps):
    sq *= alpha
    sq += (1.0 - alpha) * g * g
    w -= (lr * g / (np.sqrt(sq) + eps)).astype(w.dtype)


def pose_transitions(width, height, blocked):
    """Next-pose table ``(n_poses, 8)`` and the matching collision mask."""
    blocked = np.ascontiguousarray(blocked, dtype=np.bool_)
    if USE_NUMBA:
        return _nb_pose_transitions(int(width), int(height), blocked)
    return _np_pose_transitions(int(width), int(height), blocked)


def visibility_table(width, height, obj_x, obj_y, obj_level, radius_cells):
    """Geometric visibility of every object from every pose.

    Returns ``(vis, depth, side)``: bool, forward distance in cells, and
    1/2/3 for left/center/right. Containment is ignored here.
    """
    obj_x = np.ascontiguousarray(obj_x, dtype=np.int64)
    obj_y = np.ascontiguousarray(obj_y, dtype=np.int64)
    obj_level = np.ascontiguousarray(obj_level, dtype=np.int64)
    r2 = float(radius_cells) ** 2 + 1e-9
    if USE_NUMBA:
        return _nb_visibility_table(int(width), int(height), obj_x, obj_y, obj_level, r2)
    return _np_visibility_table(int(width), int(height), obj_x, obj_y, obj_level, r2)


def bfs_distances(nxt, sources):
    """Multi-source BFS over the pose graph; -1 marks unreachable poses.

    The movement graph is symmetric (every move has its inverse), so distances
    from the sources equal distances to them.
    """
    nxt = np.ascontiguousarray(nxt, dtype=np.int32)
    sources = np.ascontiguousarray(sources, dtype=np.bool_)
    if USE_NUMBA:
        return _nb_bfs_distances(nxt, sources)
    return _np_bfs_distances(nxt, sources)


def discounted_returns(rewards, bootstrap, gamma):
    rewards = np.ascontiguousarray(rewards, dtype=np.float64)
    if USE_NUMBA:
        return _nb_discounted_returns(rewards, float(bootstrap), float(gamma))
    return _np_discounted_returns(rewards, float(bootstrap), float(gamma))


def rmsprop_update(w, sq, g, lr, alpha, eps):
    """In-place ``sq = alpha sq + (1 - alpha) g^2; w -= lr g / (sqrt(sq) + eps)``.

    ``w`` and ``sq`` must be C-contiguous; they are updated through flat views.
    The two bodies agree to floating-point rounding, not bit for bit.
    """
    if not (w.flags.c_contiguous and sq.flags.c_contiguous):
        raise ValueError("rmsprop_update needs contiguous parameter and state arrays")
    wf, sf = w.reshape(-1), sq.reshape(-1)
    gf = np.ascontiguousarray(g, dtype=w.dtype).reshape(-1)
    if USE_NUMBA:
        _nb_rmsprop_update(wf, sf, gf, float(lr), float(alpha), float(eps))
    else:
        _np_rmsprop_update(wf, sf, gf, float(lr), float(alpha), float(eps))
