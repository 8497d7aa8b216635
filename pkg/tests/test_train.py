import json

import numpy as np
import pytest

from kgnav.scene_sim import generate_scene
from kgnav.trainer import TrainConfig, read_checkpoint, train
from kgnav.trainer.config import ABLATIONS, ConfigError, parse_config_text, update_config
from kgnav.trainer.train import assign_targets

TINY = dict(d_vis=16, d_lstm=16, gcn_width=8, t_max=16, min_start_distance=4, max_episode_steps=60,
            il_fraction=1.0, entropy_coef=0.05, checkpoint_every=10_000)
TARGETS = [(0, 0), (0, 1)]


@pytest.fixture(scope="module")
def scenes():
    return [generate_scene(0)]


def cfg(**kw):
    return TrainConfig(**{**TINY, **kw})


def read_log(path):
    return [json.loads(line) for line in path.read_text().splitlines()]


def test_single_worker_bit_reproducible(tmp_path, scenes):
    a = train(cfg(frames=400, seed=3), scenes, TARGETS, tmp_path / "a")
    b = train(cfg(frames=400, seed=3), scenes, TARGETS, tmp_path / "b")
    assert a.log_path.read_bytes() == b.log_path.read_bytes()
    assert a.checkpoints[-1].read_bytes() == b.checkpoints[-1].read_bytes()
    recs = read_log(a.log_path)
    assert recs and {"frame", "worker", "episode_return", "episode_length", "success", "collisions",
                     "sr_avg"} <= set(recs[0])
    c = train(cfg(frames=400, seed=4), scenes, TARGETS, tmp_path / "c")
    assert c.checkpoints[-1].read_bytes() != a.checkpoints[-1].read_bytes()


def test_zero_budget_writes_initial_checkpoint_only(tmp_path, scenes):
    r = train(cfg(frames=0), scenes, TARGETS, tmp_path)
    assert [p.name for p in r.checkpoints] == ["ckpt_0.bin"]
    assert sorted(p.name for p in tmp_path.glob("ckpt_*")) == ["ckpt_0.bin"]
    assert r.frames == 0 and r.log_path.read_text() == ""
    ck = read_checkpoint(r.checkpoints[0])
    assert not ck.graph.edge_counts.any()


def test_periodic_checkpoints_and_resume(tmp_path, scenes):
    r = train(cfg(frames=600, checkpoint_every=200), scenes, TARGETS, tmp_path / "run")
    frames = [read_checkpoint(p).frames for p in r.checkpoints]
    assert frames[0] == 0 and frames[-1] == 600 and frames == sorted(frames) and len(frames) >= 3
    for p in r.checkpoints:
        assert p.name == f"ckpt_{read_checkpoint(p).frames}.bin"
    r2 = train(cfg(frames=1000, checkpoint_every=200), scenes, TARGETS, tmp_path / "run", resume=r.checkpoints[-1])
    assert r2.frames == 1000 and sum(r2.worker_frames) == 400
    ck = read_checkpoint(r2.checkpoints[-1])
    before = read_checkpoint(r.checkpoints[-1])
    assert ck.frames == 1000
    assert np.all(ck.graph.edge_counts >= before.graph.edge_counts)
    logged = [rec["frame"] for rec in read_log(r2.log_path)]
    assert logged == sorted(logged)


def test_multiprocess_frame_accounting(tmp_path, scenes):
    r = train(cfg(frames=900, workers=3), scenes, TARGETS, tmp_path)
    assert r.frames == 900
    assert len(r.worker_frames) == 3 and sum(r.worker_frames) == 900
    assert all(n > 0 for n in r.worker_frames)
    recs = read_log(r.log_path)
    assert sum(rec["episode_length"] for rec in recs) <= 900
    assert {rec["worker"] for rec in recs} <= {0, 1, 2}
    assert read_checkpoint(r.checkpoints[-1]).frames == 900


def test_random_ablation_leaves_parameters(tmp_path, scenes):
    c = TrainConfig(**TINY).with_ablation("random")
    r = train(update_config(c, {"frames": 200}), scenes, TARGETS, tmp_path)
    first, last = read_checkpoint(r.checkpoints[0]), read_checkpoint(r.checkpoints[-1])
    for k in first.params:
        np.testing.assert_array_equal(first.params[k], last.params[k])


def test_lstm_a3c_is_plain_a3c(tmp_path, scenes):
    c = update_config(TrainConfig(**TINY).with_ablation("lstm_a3c"), {"frames": 200})
    assert (c.use_a3c, c.use_il, c.use_tse, c.use_kg, c.use_attention) == (True, False, False, False, False)
    assert c.il_frames == 0
    r = train(c, scenes, TARGETS, tmp_path)
    ck = read_checkpoint(r.checkpoints[-1])
    assert not any(k.startswith(("gcn", "att", "ssiam", "sfuse")) for k in ck.params)
    assert ck.model.lstm_input_dim == ck.model.config.d_fused


def test_every_ablation_is_reachable():
    for name, flags in ABLATIONS.items():
        c = TrainConfig().with_ablation(name)
        assert all(getattr(c, k) == v for k, v in flags.items())


def test_assign_targets():
    t = [(0, 0), (0, 1)]
    assert assign_targets(t, 1) == [[(0, 0), (0, 1)]]
    assert assign_targets(t, 3) == [[(0, 0)], [(0, 1)], [(0, 0)]]
    assert assign_targets([(0, i) for i in range(5)], 2) == [[(0, 0), (0, 2), (0, 4)], [(0, 1), (0, 3)]]


def test_config_text():
    c = parse_config_text("# desk run\nablation = il_tse\nframes = 5e4\nentropy_coef = 0.05\n")
    assert c.ablation == "il_tse" and c.frames == 50_000 and c.entropy_coef == 0.05 and not c.use_kg
    assert parse_config_text(c.dumps()) == c
    with pytest.raises(ConfigError):
        parse_config_text("nonsense = 1")
    with pytest.raises(ConfigError):
        parse_config_text("gamma = 1.5")
    with pytest.raises(ConfigError):
        parse_config_text("frames 10")
    with pytest.raises(ConfigError):
        TrainConfig(use_kg=False, use_attention=True)


def test_no_targets(tmp_path, scenes):
    with pytest.raises(ValueError):
        train(cfg(), scenes, [], tmp_path)
