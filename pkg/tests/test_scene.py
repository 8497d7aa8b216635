import numpy as np
import pytest

from kgnav.scene_sim import (
    GeneratorConfig,
    Pose,
    SceneError,
    SceneParseError,
    format_scene,
    generate_scene,
    load_scene,
    parse_scene,
    save_scene,
)
from kgnav.scene_sim.scene import validate

from conftest import ROOM_SCENE, TINY_SCENE
import oracles


def test_minimal_scene(tiny_scene):
    assert len(tiny_scene.targets) == 1
    assert tiny_scene.targets[0].goal_poses
    assert tiny_scene.targets[0].kind == "static"


def test_vocabulary_index_out_of_range():
    bad = TINY_SCENE.replace("cat=2", "cat=3")
    with pytest.raises(SceneError, match="vocabulary"):
        load_scene(bad)


@pytest.mark.parametrize(
    "edit, field",
    [
        (("width 3", "width x"), "width"),
        (("object id=0", "object id=zero"), "id"),
        (("target object=0", "target 0"), "target"),
        (("kgnav-scene 1", "kgnav-scene 9"), "magic"),
        (("vocab Fridge Apple Mug", "vocab Fridge Apple Mug\nvocab A"), "vocab"),
    ],
)
def test_parse_errors_name_line_and_field(edit, field):
    with pytest.raises(SceneParseError) as err:
        parse_scene(TINY_SCENE.replace(*edit))
    assert err.value.field == field
    assert err.value.lineno >= 1


@pytest.mark.parametrize(
    "edit, message",
    [
        (("cell=2,0", "cell=3,0"), "bounds"),
        (("target object=0", "target object=7"), "target"),
    ],
)
def test_validation_errors(edit, message):
    with pytest.raises(SceneError, match=message):
        load_scene(TINY_SCENE.replace(*edit))


def test_object_on_wall_rejected():
    with pytest.raises(SceneError, match="wall"):
        load_scene(TINY_SCENE.replace("vocab Fridge Apple Mug\n", "vocab Fridge Apple Mug\nwall 2 0\n"))


def test_contained_in_non_openable_rejected():
    text = ROOM_SCENE.replace("cell=5,2 level=counter openable=1", "cell=5,2 level=counter openable=0")
    with pytest.raises(SceneError, match="openable"):
        load_scene(text)


def test_room_scene_kinds(room_scene):
    kinds = [t.kind for t in room_scene.targets]
    assert kinds == ["actionable", "static"]


def test_roundtrip_generated(tmp_path):
    s = generate_scene(5)
    p1, p2 = tmp_path / "a.scene", tmp_path / "b.scene"
    save_scene(s, p1)
    save_scene(load_scene(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_generator_deterministic():
    assert format_scene(generate_scene(9)) == format_scene(generate_scene(9))
    assert format_scene(generate_scene(9)) != format_scene(generate_scene(10))


def test_generator_two_actionable_targets():
    s = generate_scene(4, GeneratorConfig(n_actionable_targets=2, n_static_targets=1))
    act = [t for t in s.targets if t.kind == "actionable"]
    assert len(act) == 2
    assert all(s.object_by_id(t.target_object_id).container_id is not None for t in act)


def test_generator_infeasible():
    with pytest.raises(SceneError):
        generate_scene(0, GeneratorConfig(width=3, height=3, n_small=20))


def test_generator_sweep_valid_and_reachable():
    for seed in range(100):
        s = generate_scene(seed)
        again = load_scene(format_scene(s))
        validate(again)
        free = s.free_pose_mask
        for t in s.targets:
            from kgnav.scene_sim.env import goal_distance

            assert (goal_distance(s, t.target_object_id)[free] >= 0).all()
        assert any(t.kind == "actionable" for t in s.targets)


def test_goal_poses_match_brute_force(room_scene, scene6):
    for scene in (room_scene, scene6, generate_scene(3)):
        for t in scene.targets:
            want = oracles.goal_poses(scene, t.target_object_id)
            assert {tuple(p) for p in t.goal_poses} == want


def test_pose_index_roundtrip(scene6):
    for i in range(scene6.n_poses):
        assert scene6.pose_index(scene6.pose_at(i)) == i
    assert scene6.pose_at(scene6.pose_index(Pose(2, 3, 1, 0))) == Pose(2, 3, 1, 0)


def test_actionable_target_observation_has_open_container(room_scene):
    t = room_scene.targets[0]
    obs = t.target_observation
    assert obs.visible[1] == 1  # the apple
    assert obs.open_flags[0] == 1  # fridge shown open


def test_invariants_contained_objects_have_no_cell(scene6):
    for o in scene6.objects:
        if o.container_id is not None:
            assert o.cell is None
            assert scene6.object_by_id(o.container_id).openable
        assert not o.is_open
        assert o.category < scene6.vocab_size
    assert np.all(scene6.free_pose_mask.reshape(-1, 12).all(axis=1) | ~scene6.free_pose_mask.reshape(-1, 12).any(axis=1))
