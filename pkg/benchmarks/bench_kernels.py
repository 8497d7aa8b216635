"""Compare the numba and numpy bodies of every kernel in kgnav.kernels.

    python benchmarks/bench_kernels.py [--repeat N] [--size W]

Both bodies are called directly, so the KGNAV_NUMBA flag does not matter
here. The first numba call (compilation or cache load) is excluded from the
timings and reported separately.
"""

import argparse
import time

import numpy as np

from kgnav import kernels
from kgnav._accel import HAVE_NUMBA
from kgnav.scene_sim import GeneratorConfig, generate_scene


def _time(fn, args, repeat):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t)
    return best


def cases(size: int):
    scene = generate_scene(0, GeneratorConfig(width=size, height=size, n_walls=size // 2, n_small=size))
    w, h = scene.width, scene.height
    blocked = np.ascontiguousarray(scene.blocked)
    ox = np.array([scene.object_cell(o)[0] for o in scene.objects], dtype=np.int64)
    oy = np.array([scene.object_cell(o)[1] for o in scene.objects], dtype=np.int64)
    lv = np.array([o.height_level for o in scene.objects], dtype=np.int64)
    nxt, _ = kernels._np_pose_transitions(w, h, blocked)
    sources = np.zeros(nxt.shape[0], dtype=np.bool_)
    sources[:: max(1, nxt.shape[0] // 7)] = True
    rng = np.random.default_rng(0)
    rewards = rng.normal(size=5000)
    n = 260_000  # roughly the parameter count of the default model
    wts = rng.normal(size=n).astype(np.float32)
    sq = np.abs(rng.normal(size=n)).astype(np.float32)
    g = rng.normal(size=n).astype(np.float32)

    def rms(body):
        return lambda: body(wts.copy(), sq.copy(), g, 7e-4, 0.99, 1e-5)

    return [
        ("pose_transitions", kernels._nb_pose_transitions, kernels._np_pose_transitions, (w, h, blocked)),
        ("visibility_table", kernels._nb_visibility_table, kernels._np_visibility_table, (w, h, ox, oy, lv, 9.0)),
        ("bfs_distances", kernels._nb_bfs_distances, kernels._np_bfs_distances, (nxt, sources)),
        ("discounted_returns", kernels._nb_discounted_returns, kernels._np_discounted_returns, (rewards, 0.5, 0.99)),
        ("rmsprop_update", rms(kernels._nb_rmsprop_update), rms(kernels._np_rmsprop_update), ()),
    ]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--size", type=int, default=16, help="grid width and height of the benchmark scene")
    args = ap.parse_args()
    if not HAVE_NUMBA:
        print("numba is not installed; only the numpy bodies can run")
    print(f"{'kernel':<20} {'numba ms':>10} {'numpy ms':>10} {'speedup':>8} {'first call s':>13}")
    for name, nb, npf, a in cases(args.size):
        t0 = time.perf_counter()
        nb(*a)
        first = time.perf_counter() - t0
        tn = _time(nb, a, args.repeat)
        tp = _time(npf, a, args.repeat)
        print(f"{name:<20} {tn * 1e3:>10.3f} {tp * 1e3:>10.3f} {tp / tn:>8.1f} {first:>13.3f}")


if __name__ == "__main__":
    main()
