import numpy as np
import pytest

from kgnav.nn import layers as L
from kgnav.nn.optim import OptimConfig, apply_gradients, clip_by_global_norm, global_norm, init_state
from kgnav.nn.params import (
    CheckpointError,
    ParameterSet,
    checkpoint_bytes,
    glorot_uniform,
    load_checkpoint,
    parse_checkpoint,
    save_checkpoint,
)

SGD = OptimConfig(kind="sgd", clip_norm=0.0)


def test_sgd_hand_step():
    p = ParameterSet({"w": np.array([1.0])})
    apply_gradients(p, {"w": 2 * p["w"]}, 0.1, SGD)
    assert p["w"][0] == pytest.approx(0.8, abs=1e-15)


@pytest.mark.parametrize("cfg", [SGD, OptimConfig()])
def test_zero_gradients_leave_params(cfg):
    rng = np.random.default_rng(0)
    p = ParameterSet({"a": rng.normal(size=(3, 2)), "b": rng.normal(size=4)})
    before = p.snapshot()
    state = init_state(p, cfg)
    apply_gradients(p, p.zeros_like(), 0.5, cfg, state)
    for k in p:
        np.testing.assert_array_equal(p[k], before[k])


@pytest.mark.parametrize("cfg", [SGD, OptimConfig(clip_norm=0.0)])
def test_linear_regression_loss_decreases(cfg):
    x = np.array([[1.0, 2.0], [3.0, -1.0]])
    y = np.array([1.0, 0.5])
    p = ParameterSet({"w": np.zeros(2), "b": np.zeros(1)})
    state = init_state(p, cfg)

    def loss_and_grad():
        r = x @ p["w"] + p["b"][0] - y
        return float(r @ r), {"w": 2 * x.T @ r, "b": np.array([2 * r.sum()])}

    lr = 0.01 if cfg.kind == "sgd" else 1e-3
    prev, g = loss_and_grad()
    for _ in range(100):
        apply_gradients(p, g, lr, cfg, state)
        cur, g = loss_and_grad()
        assert cur < prev
        prev = cur


def test_shape_mismatch_and_missing():
    p = ParameterSet({"w": np.zeros(3)})
    with pytest.raises(ValueError):
        apply_gradients(p, {"w": np.zeros(4)}, 0.1, SGD)
    with pytest.raises(ValueError):
        apply_gradients(p, {"v": np.zeros(3)}, 0.1, SGD)
    with pytest.raises(ValueError):
        apply_gradients(p, {"w": np.zeros(3)}, 0.1, OptimConfig())  # no state


def test_non_finite_gradient_checked():
    p = ParameterSet({"w": np.zeros(2)})
    with pytest.raises(L.NonFiniteError):
        apply_gradients(p, {"w": np.array([np.inf, 0.0])}, 0.1, OptimConfig(kind="sgd", checked=True))


def test_duplicate_name():
    p = ParameterSet({"w": np.zeros(1)})
    with pytest.raises(KeyError):
        p.add("w", np.zeros(1))


def test_rmsprop_first_step_by_hand():
    cfg = OptimConfig(clip_norm=0.0)
    p = ParameterSet({"w": np.array([1.0, -2.0])})
    s = init_state(p, cfg)
    g = np.array([0.5, 1.0])
    apply_gradients(p, {"w": g}, 0.01, cfg, s)
    sq = (1 - cfg.alpha) * g * g
    np.testing.assert_allclose(s["w"], sq, rtol=1e-12)
    np.testing.assert_allclose(p["w"], [1.0, -2.0] - 0.01 * g / (np.sqrt(sq) + cfg.eps), rtol=1e-12)


def test_clip_by_global_norm():
    g = {"a": np.array([3.0]), "b": np.array([4.0])}
    assert global_norm(g) == 5.0
    c, n = clip_by_global_norm(g, 1.0)
    assert n == 5.0 and global_norm(c) == pytest.approx(1.0)
    same, _ = clip_by_global_norm(g, 10.0)
    assert same is g


def test_glorot_limits():
    w = glorot_uniform(np.random.default_rng(0), (50, 30))
    assert np.abs(w).max() <= np.sqrt(6 / 80)


def test_snapshot_and_share_are_independent():
    p = ParameterSet({"w": np.ones(3, dtype=np.float32)})
    sh = p.share()
    snap = sh.snapshot()
    sh["w"][0] = 5
    assert snap["w"][0] == 1 and p["w"][0] == 1


# ------------------------------------------------------------- checkpoints


def _records():
    rng = np.random.default_rng(1)
    return {"param/a": rng.normal(size=(3, 4)).astype(np.float32), "opt/a": np.zeros((3, 4), np.float32),
            "kg/x": np.arange(6, dtype=np.float32).reshape(2, 3), "param/s": np.array([1.5], np.float32)}


def test_checkpoint_roundtrip_byte_identical(tmp_path):
    rec = _records()
    save_checkpoint(tmp_path / "c.bin", 1234, rec, {"model": {"x": 1}})
    frames, meta, back = load_checkpoint(tmp_path / "c.bin")
    assert frames == 1234 and meta == {"model": {"x": 1}}
    assert list(back) == list(rec)
    for k in rec:
        assert back[k].tobytes() == rec[k].tobytes()
    assert checkpoint_bytes(frames, back, meta) == (tmp_path / "c.bin").read_bytes()


def test_checkpoint_layout_header():
    data = checkpoint_bytes(7, {"param/w": np.array([1.0], np.float32)})
    assert data[:8] == b"KGNAVCKP"
    assert int.from_bytes(data[8:12], "little") == 1
    assert int.from_bytes(data[12:20], "little") == 7
    assert data[-4:] == np.float32(1.0).tobytes()


def test_checkpoint_errors():
    good = checkpoint_bytes(1, _records())
    with pytest.raises(CheckpointError):
        parse_checkpoint(b"NOTACKPT" + good[8:])
    with pytest.raises(CheckpointError):
        parse_checkpoint(good[:-3])
    with pytest.raises(CheckpointError):
        parse_checkpoint(good + b"\0")
    bad_version = good[:8] + (2).to_bytes(4, "little") + good[12:]
    with pytest.raises(CheckpointError):
        parse_checkpoint(bad_version)
