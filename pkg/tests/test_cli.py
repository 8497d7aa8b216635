import json

import pytest

from kgnav.cli import main
from kgnav.scene_sim import load_scene

from conftest import ROOM_SCENE


@pytest.fixture(scope="module")
def manifest_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("scenes")
    assert main(["gen-scenes", "--seed", "0", "--split", "2/1/1", "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def trained(tmp_path_factory, manifest_dir):
    out = tmp_path_factory.mktemp("run")
    code = main(["train", "--manifest", str(manifest_dir), "--frames", "300", "--seed", "1", "--out", str(out),
                 "--set", "d_vis=16", "--set", "d_lstm=16", "--set", "gcn_width=8", "--set", "max_episode_steps=50"])
    assert code == 0
    return out


def test_usage_errors(capsys):
    assert main([]) == 1
    assert main(["nope"]) == 1
    assert main(["train", "--ablation", "bogus"]) == 1
    assert main(["sim-gen", "--out", "x"]) == 1
    assert "usage error" in capsys.readouterr().err


def test_sim_validate(tmp_path):
    good = tmp_path / "room.scene"
    good.write_text(ROOM_SCENE)
    assert main(["sim-validate", str(good)]) == 0
    bad = tmp_path / "bad.scene"
    bad.write_text(ROOM_SCENE.replace("cell=0,5", "cell=9,9"))
    assert main(["sim-validate", str(bad)]) == 2
    assert main(["sim-validate", str(tmp_path / "missing.scene")]) == 2


def test_sim_gen_is_deterministic(tmp_path):
    a, b = tmp_path / "a.scene", tmp_path / "b.scene"
    assert main(["sim-gen", "--seed", "5", "--out", str(a)]) == 0
    assert main(["sim-gen", "--seed", "5", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert main(["sim-validate", str(a)]) == 0
    assert main(["sim-gen", "--seed", "5", "--width", "2", "--out", str(a)]) == 2


def test_gen_scenes_default_split(tmp_path):
    assert main(["gen-scenes", "--seed", "1", "--out", str(tmp_path)]) == 0
    m = json.loads((tmp_path / "manifest.json").read_text())
    assert [len(m["splits"][k]) for k in ("train", "val", "test")] == [20, 5, 5]
    assert len(list(tmp_path.glob("*.scene"))) == 30
    for f in m["splits"]["train"]:
        scene = load_scene(tmp_path / f)
        assert set(m["train_targets"][f]).isdisjoint(m["unseen_targets"][f])
        assert max(m["train_targets"][f] + m["unseen_targets"][f]) < len(scene.targets)


def test_gen_scenes_bad_split(tmp_path):
    assert main(["gen-scenes", "--split", "1/x/1", "--out", str(tmp_path)]) in (1, 2)


def test_train_outputs(trained):
    assert (trained / "resolved_config.json").exists()
    assert (trained / "ckpt_0.bin").exists() and (trained / "ckpt_300.bin").exists()
    assert json.loads((trained / "resolved_config.json").read_text())["frames"] == 300


def test_train_bad_config(tmp_path, manifest_dir):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("gamma = 2\n")
    assert main(["train", "--manifest", str(manifest_dir), "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert main(["train", "--out", str(tmp_path)]) == 1


def test_eval_rows(tmp_path, trained, manifest_dir):
    code = main(["eval", str(trained / "ckpt_300.bin"), "--manifest", str(manifest_dir), "--episodes", "2",
                 "--split", "val", "--out", str(tmp_path)])
    assert code == 0
    rows = [json.loads(line) for line in (tmp_path / "eval.jsonl").read_text().splitlines()]
    regimes = {r["regime"] for r in rows}
    assert "seen_scene/seen_target" in regimes and any(r.startswith("val_scene") for r in regimes)
    assert all(0 <= r["spl"] <= r["sr"] <= 1 for r in rows)
    assert (tmp_path / "eval_table.txt").read_text().split()[0] == "regime"


def test_eval_random_and_errors(tmp_path, manifest_dir):
    assert main(["eval", "--ablation", "random", "--manifest", str(manifest_dir), "--episodes", "1",
                 "--out", str(tmp_path)]) == 0
    assert main(["eval", "--manifest", str(manifest_dir), "--out", str(tmp_path)]) == 1
    junk = tmp_path / "junk.bin"
    junk.write_bytes(b"garbage")
    assert main(["eval", str(junk), "--manifest", str(manifest_dir), "--out", str(tmp_path)]) == 2


def test_inspect(tmp_path, trained, manifest_dir):
    scene = sorted(manifest_dir.glob("train_*.scene"))[0]
    assert main(["inspect", str(trained / "ckpt_300.bin"), "--scene", str(scene), "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "attention_trace.txt").read_text().splitlines()
    assert lines[0].startswith("# step action") and lines[-1].startswith("# outcome")
    assert len(lines[1].split()) == 8
    emb = (tmp_path / "embedding.txt").read_text().splitlines()
    n, d = map(int, emb[0][1:].split())
    assert len(emb) == n + 1 and len(emb[1].split()) == d + 1
    assert main(["inspect", str(trained / "ckpt_300.bin"), "--scene", str(scene), "--target", "99",
                 "--out", str(tmp_path)]) == 1


def test_out_env_var(tmp_path, monkeypatch):
    monkeypatch.setenv("KGNAV_OUT", str(tmp_path / "envout"))
    assert main(["gen-scenes", "--split", "1/0/0"]) == 0
    assert (tmp_path / "envout" / "manifest.json").exists()
