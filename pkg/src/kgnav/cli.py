"""Command-line entry point: ``kgnav <command> ...``.

Exit codes: 0 success, 1 usage error, 2 invalid input (scene, config,
checkpoint or missing file), 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .evaluation import (
    SEEN_STEP_CAP,
    UNSEEN_STEP_CAP,
    RandomAgent,
    agent_from_checkpoint,
    run_eval,
    summarize,
)
from .nn.params import CheckpointError
from .policy import gcn_stack
from .scene_sim import GeneratorConfig, SceneError, generate_scene, load_scene, save_scene
from .scene_sim import env
from .trainer import ABLATIONS, ConfigError, TrainConfig, load_config, train, update_config
from .trainer.train import read_checkpoint
from .trainer.tse import target_categories

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2, 3
CLI_ABLATIONS = ("random", "il", "lstm_a3c", "il_tse", "kg", "kg_attention")
OUT_ENV = "KGNAV_OUT"
MANIFEST = "manifest.json"

# scenes written by gen-scenes hold 3 static + 2 actionable targets; the last of
# each kind is held out as an unseen target
SPLIT_GENERATOR = GeneratorConfig(n_static_targets=3, n_actionable_targets=2)

log = logging.getLogger("kgnav")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _out_dir(args, default: str) -> Path:
    out = args.out or os.environ.get(OUT_ENV) or default
    return Path(out)


def _write_resolved(out: Path, name: str, data: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ------------------------------------------------------------------- commands


def cmd_sim_validate(args) -> int:
    scene = load_scene(Path(args.file))
    kinds = [t.kind for t in scene.targets]
    print(
        f"{args.file}: ok  {scene.width}x{scene.height}  objects={len(scene.objects)}  "
        f"walls={len(scene.walls)}  |V|={scene.vocab_size}  targets={len(kinds)} "
        f"(static={kinds.count('static')}, actionable={kinds.count('actionable')})"
    )
    return EXIT_OK


def cmd_sim_gen(args) -> int:
    params = GeneratorConfig(width=args.width, height=args.height, n_walls=args.walls)
    scene = generate_scene(args.seed, params)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_scene(scene, out)
    print(f"wrote {out}")
    return EXIT_OK


def parse_split(text: str) -> dict:
    try:
        parts = [int(v) for v in text.split("/")]
    except ValueError:
        raise UsageError(f"--split must look like 20/5/5, got {text!r}") from None
    if len(parts) != 3 or min(parts) < 0 or parts[0] < 1:
        raise UsageError(f"--split must be three counts train/val/test with train >= 1, got {text!r}")
    return dict(zip(("train", "val", "test"), parts))


def build_manifest(seed: int, split: dict, out: Path, params: GeneratorConfig = SPLIT_GENERATOR) -> dict:
    """Write the scene files and return the manifest (train/val/test, seen/unseen targets)."""
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    manifest = {"seed": seed, "generator": params.to_dict(), "splits": {}, "train_targets": {}, "unseen_targets": {}}
    scenes = {}
    for name in ("train", "val", "test"):
        files = []
        for k in range(split[name]):
            scene = generate_scene(int(rng.integers(2**31)), params)
            fname = f"{name}_{k:03d}.scene"
            save_scene(scene, out / fname)
            scenes[fname] = scene
            files.append(fname)
        manifest["splits"][name] = files
    held = {params.n_static_targets - 1, params.n_static_targets + params.n_actionable_targets - 1}
    for fname in manifest["splits"]["train"]:
        n = len(scenes[fname].targets)
        manifest["train_targets"][fname] = [i for i in range(n) if i not in held]
    pool = set()
    for fname, idx in manifest["train_targets"].items():
        pool |= target_categories(scenes[fname], idx)
    # a held-out target is unseen only if its category is never trained on
    for fname in manifest["splits"]["train"]:
        sc = scenes[fname]
        manifest["unseen_targets"][fname] = [i for i in sorted(held) if not target_categories(sc, [i]) & pool]
    manifest["train_categories"] = sorted(int(c) for c in pool)
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


def cmd_gen_scenes(args) -> int:
    out = _out_dir(args, "scenes")
    split = parse_split(args.split or "20/5/5")
    manifest = build_manifest(args.seed, split, out)
    n = sum(len(v) for v in manifest["splits"].values())
    print(f"wrote {n} scenes and {out / MANIFEST}")
    return EXIT_OK


def load_manifest(path):
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST
    manifest = json.loads(path.read_text(encoding="utf-8"))
    base = path.parent
    scenes = {}
    for files in manifest["splits"].values():
        for f in files:
            scenes[f] = load_scene(base / f)
    return manifest, scenes


def _training_set(args):
    """(scene list, target list) from --scene or --manifest."""
    if args.scene:
        scene = load_scene(Path(args.scene))
        return [scene], [(0, i) for i in range(len(scene.targets))]
    if not args.manifest:
        raise UsageError("train needs --scene FILE or --manifest PATH")
    manifest, scenes = load_manifest(args.manifest)
    split = args.split or "train"
    if split != "train":
        raise UsageError("training uses the train split")
    files = manifest["splits"]["train"]
    targets = [(k, i) for k, f in enumerate(files) for i in manifest["train_targets"][f]]
    return [scenes[f] for f in files], targets


def resolve_config(args) -> TrainConfig:
    cfg = load_config(args.config) if args.config else TrainConfig()
    if args.ablation:
        cfg = cfg.with_ablation(args.ablation)
    overrides = {}
    for key in ("seed", "workers", "frames"):
        v = getattr(args, key, None)
        if v is not None:
            overrides[key] = v
    for item in args.set or ():
        k, sep, v = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects key=value, got {item!r}")
        overrides[k.strip()] = v.strip()
    return update_config(cfg, overrides)


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    scenes, targets = _training_set(args)
    out = _out_dir(args, "runs/train")
    _write_resolved(out, "resolved_config.json", cfg.to_dict())
    result = train(cfg, scenes, targets, out, resume=args.resume)
    print(f"trained to {result.frames} frames, {result.episodes} episodes; last checkpoint {result.checkpoints[-1]}")
    return EXIT_OK


def eval_regimes(manifest: dict, scenes: dict, split: str) -> list:
    """(regime, scene list, targets, step cap) for the four evaluation regimes."""
    train_files = manifest["splits"]["train"]
    pool = set(manifest["train_categories"])
    seen = [(k, i) for k, f in enumerate(train_files) for i in manifest["train_targets"][f]]
    unseen = [(k, i) for k, f in enumerate(train_files) for i in manifest["unseen_targets"][f]]
    other = manifest["splits"][split]
    o_scenes = [scenes[f] for f in other]
    o_seen, o_unseen = [], []
    for k, sc in enumerate(o_scenes):
        for i in range(len(sc.targets)):
            (o_seen if target_categories(sc, [i]) & pool else o_unseen).append((k, i))
    t_scenes = [scenes[f] for f in train_files]
    return [
        ("seen_scene/seen_target", t_scenes, seen, SEEN_STEP_CAP),
        ("seen_scene/unseen_target", t_scenes, unseen, UNSEEN_STEP_CAP),
        (f"{split}_scene/seen_target", o_scenes, o_seen, UNSEEN_STEP_CAP),
        (f"{split}_scene/unseen_target", o_scenes, o_unseen, UNSEEN_STEP_CAP),
    ]


def cmd_eval(args) -> int:
    split = args.split or "test"
    if split not in ("val", "test"):
        raise UsageError(f"eval --split must be val or test, got {split!r}")
    if args.ablation == "random":
        agent = RandomAgent()
    elif args.checkpoint:
        agent = agent_from_checkpoint(args.checkpoint)
    else:
        raise UsageError("eval needs a checkpoint (or --ablation random)")
    manifest, scenes = load_manifest(args.manifest)
    seed = args.seed if args.seed is not None else 0
    out = _out_dir(args, "runs/eval")
    _write_resolved(out, "resolved_eval.json", {
        "checkpoint": str(args.checkpoint), "manifest": str(args.manifest), "split": split,
        "episodes": args.episodes, "seed": seed, "ablation": args.ablation,
    })
    rows = []
    for regime, sc, targets, cap in eval_regimes(manifest, scenes, split):
        if not targets:
            continue
        rep = run_eval(agent, sc, targets, args.episodes, cap, seed)
        for kind in ("static", "actionable"):
            res = [r for r in rep.results if sc[r.scene].targets[r.target].kind == kind]
            if res:
                rows.append({"regime": regime, **summarize(res, kind=kind)})
    cols = ("regime", "kind", "episodes", "sr", "spl", "collisions", "visible_end")
    table = _table(rows, cols)
    (out / "eval_table.txt").write_text(table, encoding="utf-8")
    with open(out / "eval.jsonl", "w", encoding="utf-8") as fh:
        for r in rows:
            fh.write(json.dumps({k: r[k] for k in cols}, sort_keys=True) + "\n")
    sys.stdout.write(table)
    return EXIT_OK


def _table(rows, cols) -> str:
    cells = [list(cols)] + [[f"{r[c]:.4f}" if isinstance(r[c], float) else str(r[c]) for c in cols] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(cols))]
    return "".join("  ".join(v.rjust(w) for v, w in zip(row, widths)).rstrip() + "\n" for row in cells)


def cmd_inspect(args) -> int:
    ck = read_checkpoint(Path(args.checkpoint))
    scene = load_scene(Path(args.scene))
    if not 0 <= args.target < len(scene.targets):
        raise UsageError(f"target index {args.target} out of range (scene has {len(scene.targets)})")
    out = _out_dir(args, "runs/inspect")
    seed = args.seed if args.seed is not None else 0
    _write_resolved(out, "resolved_inspect.json", {
        "checkpoint": str(args.checkpoint), "scene": str(args.scene), "target": args.target, "seed": seed,
    })
    trace = attention_trace(ck, scene, args.target, seed)
    (out / "attention_trace.txt").write_text(trace, encoding="utf-8")
    if ck.model.config.use_kg:
        emb = gcn_stack(normalized_graph(ck), ck.params)[-1]
        write_embedding(out / "embedding.txt", emb, scene.vocabulary)
    print(f"wrote {out / 'attention_trace.txt'}")
    return EXIT_OK


def normalized_graph(ck):
    from .kg import normalized_adjacency

    return normalized_adjacency(ck.graph).astype(ck.params.dtype)


def attention_trace(ck, scene, target_index: int, seed: int, step_cap: int = SEEN_STEP_CAP) -> str:
    """One greedy episode; per step the action and the three most attended categories."""
    from .evaluation import ModelAgent

    agent = ModelAgent(ck.model, ck.params, ck.graph)
    state, obs = env.reset(scene, target_index, np.random.default_rng(seed), max_episode_steps=step_cap)
    agent.begin(scene, target_index, state.target.target_observation, None)
    lines = ["# step action top1 p1 top2 p2 top3 p3\n"]
    while not state.done:
        a = agent.act(obs, state)
        att = agent.last_attention
        cols = [str(state.steps), env.ACTIONS[a]]
        if att is not None:
            top = np.argsort(-att, kind="stable")[:3]
            for i in top:
                cols += [scene.vocabulary[i], f"{float(att[i]):.6f}"]
        lines.append(" ".join(cols) + "\n")
        obs, _, _, _ = env.step(state, a)
    lines.append(f"# outcome {state.outcome} steps {state.steps}\n")
    return "".join(lines)


def write_embedding(path, emb, vocabulary) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {emb.shape[0]} {emb.shape[1]}\n")
        for name, row in zip(vocabulary, emb):
            fh.write(name + " " + " ".join(f"{v:.6g}" for v in row) + "\n")


# --------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="kgnav", description="Target-driven navigation with a knowledge graph.")
    p.add_argument("--version", action="version", version=f"kgnav {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("sim-validate", help="parse and validate a scene file")
    s.add_argument("file")
    s.set_defaults(func=cmd_sim_validate)

    s = sub.add_parser("sim-gen", help="generate one scene file")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--width", type=int, default=6)
    s.add_argument("--height", type=int, default=6)
    s.add_argument("--walls", type=int, default=0)
    s.set_defaults(func=cmd_sim_gen)

    s = sub.add_parser("gen-scenes", help="generate a train/val/test scene set with a manifest")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--split", help="train/val/test counts, default 20/5/5")
    s.add_argument("--out")
    s.set_defaults(func=cmd_gen_scenes)

    s = sub.add_parser("train", help="train a policy")
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--frames", type=int)
    s.add_argument("--ablation", choices=CLI_ABLATIONS + tuple(k for k in ABLATIONS if k not in CLI_ABLATIONS))
    s.add_argument("--split")
    s.add_argument("--out")
    s.add_argument("--scene", help="train on every target of one scene file")
    s.add_argument("--manifest", help="train on the train split of a gen-scenes manifest")
    s.add_argument("--resume", help="checkpoint to continue from")
    s.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="evaluate a checkpoint on the four regimes")
    s.add_argument("checkpoint", nargs="?")
    s.add_argument("--manifest", required=True)
    s.add_argument("--split", help="held-out scene split: val or test (default test)")
    s.add_argument("--seed", type=int)
    s.add_argument("--episodes", type=int, default=100)
    s.add_argument("--ablation", choices=CLI_ABLATIONS)
    s.add_argument("--out")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("inspect", help="attention trace and GCN embedding dump")
    s.add_argument("checkpoint")
    s.add_argument("--scene", required=True)
    s.add_argument("--target", type=int, default=0)
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            raise UsageError(parser.format_usage().strip())
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SceneError, ConfigError, CheckpointError, FileNotFoundError, json.JSONDecodeError, KeyError,
            ValueError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
