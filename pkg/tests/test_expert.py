import pytest

from kgnav.expert import (
    generate_expert,
    generate_experts,
    load_expert,
    replay,
    save_expert,
)
from kgnav.scene_sim import env, generate_scene, load_scene
from kgnav.scene_sim.scene import SceneError


@pytest.mark.parametrize("seed", range(8))
def test_expert_replays_to_success(seed):
    scene = generate_scene(seed)
    for ti, target in enumerate(scene.targets):
        traj = generate_expert(scene, ti, seed)
        assert traj.actions[-1] == env.STOP and traj.rewards[-1] >= 9.99
        if target.kind == "actionable":
            assert traj.actions[-2] == env.OPEN
        again, state = replay(scene, ti, traj.start.pose_idx, traj.actions)
        assert state.outcome == "success"
        shortest = env.shortest_path_length(scene, traj.start.pose, target)
        assert len(traj) <= 2 * shortest


def test_expert_is_deterministic(scene6):
    a = generate_expert(scene6, 0, 11)
    b = generate_expert(scene6, 0, 11)
    assert a.actions == b.actions and a.start.pose_idx == b.start.pose_idx


def test_experts_for_targets(scene8):
    ex = generate_experts(scene8, range(len(scene8.targets)), 3)
    assert sorted(ex) == list(range(len(scene8.targets)))


def test_target_without_goal_pose_never_reaches_the_expert():
    text = """\
kgnav-scene 1
width 5
height 1
grid_step 0.5
seed 0
vocab Mug
wall 1 0
wall 2 0
wall 3 0
object id=0 cat=0 cell=4,0 level=counter openable=0 pickupable=1 blocks=1
target object=0
"""
    with pytest.raises(SceneError, match="no goal pose"):
        load_scene(text)


def test_cache_roundtrip(tmp_path, room_scene):
    traj = generate_expert(room_scene, 0, 4)
    save_expert(tmp_path / "e.txt", room_scene, traj)
    back = load_expert(tmp_path / "e.txt", room_scene)
    assert back.actions == traj.actions
    assert "open" in (tmp_path / "e.txt").read_text()
