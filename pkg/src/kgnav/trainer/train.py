"""Asynchronous actor-critic training loop.

One global ParameterSet, optimizer state and KnowledgeGraph; each worker
owns one environment and its assigned (scene, target) pairs. With ``workers == 1``
everything runs in-process and is bit-reproducible; otherwise workers are
forked processes sharing memory, applying gradients tensor by tensor under
per-tensor locks.
"""

from __future__ import annotations

import ctypes
import json
import logging
import multiprocessing as mp
import queue
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..expert import generate_expert
from ..kg import KnowledgeGraph
from ..nn.optim import OptimConfig, apply_gradients, init_state
from ..nn.params import ParameterSet, load_checkpoint, save_checkpoint
from ..policy import ModelConfig, PolicyModel
from ..scene_sim import env
from ..scene_sim.scene import Scene
from ..trajectory import Trajectory
from .config import TrainConfig
from .losses import a3c_gradients, il_update
from .tse import novel_categories, target_categories, tse_extract

log = logging.getLogger(__name__)

CHECKPOINT_FMT = "ckpt_{}.bin"


@dataclass
class TrainResult:
    frames: int
    checkpoints: list = field(default_factory=list)
    log_path: Path | None = None
    episodes: int = 0
    worker_frames: list = field(default_factory=list)  # transitions collected by each worker


# ------------------------------------------------------------------ shared bits


class _LocalCounter:
    def __init__(self, start, budget):
        self.start = start
        self.value = start
        self.budget = budget

    def reserve(self) -> bool:
        if self.value >= self.budget:
            return False
        self.value += 1
        return True

    def get(self) -> int:
        return self.value


class _SharedCounter:
    def __init__(self, start, budget):
        self.start = start
        self._v = mp.Value(ctypes.c_longlong, start)
        self.budget = budget

    def reserve(self) -> bool:
        with self._v.get_lock():
            if self._v.value >= self.budget:
                return False
            self._v.value += 1
            return True

    def get(self) -> int:
        return int(self._v.value)


def _shared_graph(graph: KnowledgeGraph) -> KnowledgeGraph:
    n = graph.size
    raw = mp.RawArray(ctypes.c_longlong, n * n)
    arr = np.frombuffer(raw, dtype=np.int64).reshape(n, n)
    arr[...] = graph.edge_counts
    return KnowledgeGraph(n, arr, mp.Lock())


class MetricsWriter:
    """Appends one JSON line per finished episode; keeps a success moving average."""

    def __init__(self, path: Path, window: int):
        self.path = path
        self.fh = open(path, "a", encoding="utf-8")
        self.recent = deque(maxlen=window)
        self.count = 0

    def write(self, rec: dict) -> None:
        self.recent.append(1.0 if rec["success"] else 0.0)
        rec = dict(rec, sr_avg=sum(self.recent) / len(self.recent))
        self.fh.write(json.dumps(rec, sort_keys=True) + "\n")
        self.count += 1

    def close(self) -> None:
        self.fh.close()


# ----------------------------------------------------------------- checkpoints


def checkpoint_records(params: ParameterSet, opt_state, graph: KnowledgeGraph) -> dict:
    recs = {f"param/{k}": v for k, v in params.snapshot().items()}
    if opt_state is not None:
        recs.update({f"opt/{k}": v for k, v in opt_state.snapshot().items()})
    recs["kg/edge_counts"] = graph.snapshot().edge_counts.astype(np.float32)
    return recs


def write_checkpoint(out_dir: Path, frames: int, params, opt_state, graph, meta: dict) -> Path:
    path = Path(out_dir) / CHECKPOINT_FMT.format(frames)
    save_checkpoint(path, frames, checkpoint_records(params, opt_state, graph), meta)
    return path


@dataclass
class Checkpoint:
    frames: int
    model: PolicyModel
    params: ParameterSet
    opt_state: ParameterSet | None
    graph: KnowledgeGraph
    meta: dict


def read_checkpoint(path, dtype=np.float32) -> Checkpoint:
    frames, meta, recs = load_checkpoint(path)
    if "model" not in meta or "kg/edge_counts" not in recs:
        raise ValueError(f"{path}: not a training checkpoint")
    model = PolicyModel(ModelConfig.from_dict(meta["model"]))
    params = ParameterSet({k[6:]: v.astype(dtype) for k, v in recs.items() if k.startswith("param/")})
    opt = ParameterSet({k[4:]: v.astype(dtype) for k, v in recs.items() if k.startswith("opt/")})
    counts = recs["kg/edge_counts"].astype(np.int64)
    graph = KnowledgeGraph(counts.shape[0], counts)
    expected = {k: tuple(s) for k, s in model.param_shapes().items()}
    if params.shapes() != expected:
        raise ValueError(f"{path}: parameter shapes do not match the stored model config")
    return Checkpoint(frames, model, params, opt if len(opt) else None, graph, meta)


# ---------------------------------------------------------------------- worker


def _sample(logits, rng) -> int:
    z = logits.astype(np.float64)
    p = np.exp(z - z.max())
    cdf = np.cumsum(p)
    return int(min(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"), len(p) - 1))


class Worker:
    def __init__(self, wid, cfg: TrainConfig, model: PolicyModel, scenes, assigned, shared, sink, pool, novel):
        self.wid = wid
        self.cfg = cfg
        self.model = model
        self.scenes = scenes
        self.assigned = list(assigned)
        self.params, self.opt_state, self.graph, self.counter = shared
        self.sink = sink
        self.pool, self.novel = pool, novel
        # the resume point is part of the seed so a resumed run does not replay its first start poses
        self.rng = np.random.default_rng([cfg.seed, 7919, wid, self.counter.start])
        self.local = self.params.snapshot()
        self.optim = OptimConfig(cfg.optimizer, cfg.rms_alpha, cfg.rms_eps, cfg.clip_norm)
        self.state = None
        self.episodes = 0
        self.collected = 0

    def _sync(self):
        self.local.copy_from(self.params)

    def _apply(self, grads):
        apply_gradients(self.params, grads, self.cfg.lr, self.optim, self.opt_state)

    def _ctx(self, target_obs):
        return self.model.context(self.local, target_obs, self.graph.snapshot() if self.cfg.use_kg else None)

    def _new_episode(self):
        # a worker with several assigned targets cycles through them per episode
        si, ti = self.assigned[self.episodes % len(self.assigned)]
        self.scene: Scene = self.scenes[si]
        self.target_index = ti
        self.current = (si, ti)
        self.state, self.obs = env.reset(
            self.scene,
            self.target_index,
            self.rng,
            max_episode_steps=self.cfg.max_episode_steps,
            min_distance=self.cfg.min_start_distance,
        )
        self.lstm = self.model.initial_state(self.local.dtype)
        self.ep_return = 0.0
        self.episode = Trajectory(self.state.target.target_observation, start=self.state.copy(),
                                  target_index=self.target_index)
        self.graph.update(self.obs.visible)

    def rollout(self) -> Trajectory | None:
        """Collect up to t_max transitions; None once the frame budget is spent."""
        if self.state is None or self.state.done:
            self._new_episode()
        self._sync()
        target_obs = self.state.target.target_observation
        ctx = self._ctx(target_obs)
        traj = Trajectory(target_obs, lstm_state=self.lstm, start=self.state.copy(), target_index=self.target_index)
        for _ in range(self.cfg.t_max):
            if not self.counter.reserve():
                break
            self.collected += 1
            out = self.model.act(self.local, ctx, self.obs, self.lstm)
            a = _sample(out.logits, self.rng)
            nobs, r, done, _ = env.step(self.state, a)
            traj.append(self.obs, a, r, done, out.value)
            self.episode.append(self.obs, a, r, done)
            self.lstm = out.lstm_state
            self.ep_return += r
            self.graph.update(nobs.visible)
            self.obs = nobs
            if done:
                self._finish_episode()
                break
        if not len(traj):
            return None
        if not traj.done:
            traj.bootstrap = self.model.act(self.local, ctx, self.obs, self.lstm).value
        traj.ctx = ctx
        return traj

    def _finish_episode(self):
        s = self.state
        self.episodes += 1
        self.sink(
            {
                "frame": self.counter.get(),
                "worker": self.wid,
                "target": f"{self.current[0]}:{self.current[1]}",
                "episode_return": round(self.ep_return, 6),
                "episode_length": s.steps,
                "success": s.outcome == "success",
                "collisions": s.collisions,
            }
        )

    def train_segment(self, traj: Trajectory) -> None:
        cfg = self.cfg
        if cfg.use_a3c:
            _, grads = a3c_gradients(self.model, self.local, traj.ctx, traj, cfg.gamma, cfg.value_coef,
                                     cfg.entropy_coef)
            self._apply(grads)
        source = traj if cfg.tse_scope == "segment" else (self.episode if traj.done else None)
        if cfg.use_tse and cfg.tse_samples > 0 and source is not None:
            for sub in tse_extract(source, self.pool, self.novel, cfg.tse_samples, self.rng):
                self._sync()
                ctx = self._ctx(sub.target_obs)
                _, grads = a3c_gradients(self.model, self.local, ctx, sub, cfg.gamma, cfg.value_coef,
                                         cfg.entropy_coef)
                self._apply(grads)
        if cfg.use_il and self.counter.get() < cfg.il_frames:
            # a fresh demonstration toward the current target each time
            expert = generate_expert(self.scene, self.target_index, self.rng)
            self._sync()
            ctx = self._ctx(expert.target_obs)
            _, grads = il_update(self.model, self.local, ctx, expert)
            self._apply(grads)

    def run(self, on_segment=None) -> None:
        while True:
            traj = self.rollout()
            if traj is None:
                return
            if self.cfg.ablation != "random":
                self.train_segment(traj)
            if on_segment is not None:
                on_segment()


# ------------------------------------------------------------------- training


def assign_targets(targets, workers) -> list:
    """Round-robin: worker w gets targets w, w + workers, ...; extra workers wrap around."""
    targets = [tuple(t) for t in targets]
    if workers >= len(targets):
        return [[targets[w % len(targets)]] for w in range(workers)]
    return [targets[w::workers] for w in range(workers)]


def _worker_main(args):
    wid, cfg, model, scenes, assigned, shared, q, pool, novel = args
    w = None
    try:
        w = Worker(wid, cfg, model, scenes, assigned, shared, q.put, pool, novel)
        w.run()
    finally:
        q.put(("done", wid, w.collected if w is not None else 0))


def train(cfg: TrainConfig, scenes, targets, out_dir, resume=None) -> TrainResult:
    """Train on ``targets`` = [(scene index, target index), ...]; write checkpoints and metrics.jsonl."""
    if not targets:
        raise ValueError("training needs at least one target")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    vocab = scenes[0].vocab_size
    if any(s.vocab_size != vocab for s in scenes):
        raise ValueError("all scenes must share one vocabulary")
    dtype = np.float32 if cfg.dtype == "float32" else np.float64
    optim = OptimConfig(cfg.optimizer, cfg.rms_alpha, cfg.rms_eps, cfg.clip_norm)

    if resume is not None:
        ck = read_checkpoint(resume, dtype)
        model, params, opt_state, graph, start = ck.model, ck.params, ck.opt_state, ck.graph, ck.frames
        if graph.size != vocab:
            raise ValueError("checkpoint vocabulary size does not match the scenes")
        if opt_state is None:
            opt_state = init_state(params, optim)
    else:
        model = PolicyModel(cfg.model_config(vocab))
        params = model.init_params(cfg.seed, dtype)
        opt_state = init_state(params, optim)
        graph = KnowledgeGraph(vocab)
        start = 0
    meta = {"model": model.config.to_dict(), "train": cfg.to_dict(), "vocabulary": list(scenes[0].vocabulary)}
    (out_dir / "config.txt").write_text(cfg.dumps(), encoding="utf-8")

    if cfg.use_il:
        for si, ti in targets:  # fail fast on targets the expert cannot demonstrate
            generate_expert(scenes[si], ti, np.random.default_rng([cfg.seed, si, ti]))
    by_scene: dict = {}
    for si, ti in targets:
        by_scene.setdefault(si, []).append(ti)
    pool = frozenset().union(*(target_categories(scenes[si], tis) for si, tis in by_scene.items()))
    novel = novel_categories([scenes[si] for si in by_scene], pool) if cfg.tse_targets == "all" else frozenset()
    assignment = assign_targets(targets, cfg.workers)

    result = TrainResult(frames=start, log_path=out_dir / "metrics.jsonl")
    writer = MetricsWriter(result.log_path, cfg.sr_window)
    ckpts = result.checkpoints
    if resume is None:
        ckpts.append(write_checkpoint(out_dir, start, params, opt_state, graph, meta))
    every = max(1, cfg.checkpoint_every)
    next_ckpt = (start // every + 1) * every
    t0 = time.time()
    try:
        if cfg.workers == 1:
            counter = _LocalCounter(start, cfg.frames)
            w = Worker(0, cfg, model, scenes, assignment[0], (params, opt_state, graph, counter), writer.write,
                       pool, novel)

            def on_segment():
                nonlocal next_ckpt
                if counter.get() >= next_ckpt and counter.get() < cfg.frames:
                    ckpts.append(write_checkpoint(out_dir, counter.get(), params, opt_state, graph, meta))
                    next_ckpt = (counter.get() // every + 1) * every

            w.run(on_segment)
            frames = counter.get()
            result.worker_frames = [w.collected]
        else:
            frames, params, opt_state, graph, result.worker_frames = _train_parallel(
                cfg, model, scenes, assignment, params, opt_state, graph, start, pool, novel, writer, out_dir,
                meta, ckpts, every)
    finally:
        writer.close()
    if not ckpts or ckpts[-1].name != CHECKPOINT_FMT.format(frames):
        ckpts.append(write_checkpoint(out_dir, frames, params, opt_state, graph, meta))
    result.frames = frames
    result.episodes = writer.count
    log.info("trained %d frames in %.1fs (%d episodes)", frames - start, time.time() - t0, writer.count)
    return result


def _train_parallel(cfg, model, scenes, assignment, params, opt_state, graph, start, pool, novel, writer,
                    out_dir, meta, ckpts, every):
    ctx = mp.get_context("fork")
    sparams = params.share()
    sopt = opt_state.share() if opt_state is not None else None
    sgraph = _shared_graph(graph)
    counter = _SharedCounter(start, cfg.frames)
    q = ctx.Queue()
    shared = (sparams, sopt, sgraph, counter)
    procs = []
    for w in range(cfg.workers):
        args = (w, cfg, model, scenes, assignment[w], shared, q, pool, novel)
        procs.append(ctx.Process(target=_worker_main, args=(args,), daemon=True))
    collected = [0] * cfg.workers
    for p in procs:
        p.start()
    alive = len(procs)
    next_ckpt = (start // every + 1) * every
    while alive:
        try:
            rec = q.get(timeout=0.2)
        except queue.Empty:
            rec = False
            if not any(p.is_alive() for p in procs):
                break
        if isinstance(rec, tuple):
            alive -= 1
            collected[rec[1]] = rec[2]
        elif rec:
            writer.write(rec)
        now = counter.get()
        if now >= next_ckpt and now < cfg.frames:
            ckpts.append(write_checkpoint(out_dir, now, sparams, sopt, sgraph, meta))
            next_ckpt = (now // every + 1) * every
    for p in procs:
        p.join()
    bad = [p.exitcode for p in procs if p.exitcode]
    if bad:
        raise RuntimeError(f"worker process failed with exit codes {bad}")
    final_params = sparams.snapshot()
    final_opt = sopt.snapshot() if sopt is not None else None
    return counter.get(), final_params, final_opt, sgraph.snapshot(), collected
