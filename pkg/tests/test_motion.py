import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from xformtree import geom, synthetic
from xformtree.errors import InsufficientFrames, RegistrationFailed, UnknownNode
from xformtree.motion import (
    CONVENTION,
    derive_motion,
    export_animation,
    motion_workspace,
    pose_at,
    static_objects,
    write_animation,
)
from xformtree.pointset import PointSet, apply, read_xyz
from xformtree.track import MotionTrack, sample
from xformtree.tree import Motion, Transform

import oracles


def test_identical_frames_give_identity():
    rng = np.random.default_rng(0)
    s, m = synthetic.random_points(rng, 20), synthetic.random_points(rng, 20)
    d = derive_motion([(0.0, s, m), (0.5, s, m), (1.0, s, m)])
    for p in d.stabilization + list(d.track.poses):
        assert np.max(np.abs(p - np.eye(4))) < 1e-12


def test_hinge_recovery():
    h = synthetic.hinge_fixture(np.random.default_rng(1))
    d = derive_motion(h.frames)
    for got, truth in zip(d.track.poses, h.rotations):
        assert np.max(np.abs(got - truth)) < 1e-6
    for got, cam in zip(d.stabilization, h.cameras):
        assert np.max(np.abs(got - geom.invert(cam))) < 1e-6
    assert np.array_equal(d.track.times, h.times)


def test_hinge_with_other_reference():
    h = synthetic.hinge_fixture(np.random.default_rng(2), n_frames=6)
    d = derive_motion(h.frames, reference=3)
    # poses are now relative to frame 3's moving part
    ref = h.cameras[3] @ h.rotations[3]
    for got, cam, rot in zip(d.track.poses, h.cameras, h.rotations):
        expected = h.cameras[3] @ rot @ geom.invert(ref)
        assert np.max(np.abs(got - expected)) < 1e-6
    assert np.max(np.abs(d.stabilization[3] - np.eye(4))) < 1e-12


def test_replay_reproduces_stabilized_frames():
    h = synthetic.hinge_fixture(np.random.default_rng(3), noise=0.01)
    d = derive_motion(h.frames)
    ref_moving = h.frames[0][2]
    for (t, _, moving), stab, res in zip(h.frames, d.stabilization, d.moving_residuals):
        replayed = apply(sample(d.track, t), ref_moving)
        stabilized = apply(stab, moving)
        diff = replayed.xyz - stabilized.xyz
        assert math.sqrt(np.mean(np.sum(diff * diff, axis=1))) <= res + 1e-12


def test_noise_residuals_within_bounds():
    sigma = 0.01
    for seed in range(5):
        h = synthetic.hinge_fixture(np.random.default_rng(seed), noise=sigma)
        d = derive_motion(h.frames)
        # the reference frame is fitted onto itself
        assert d.static_residuals[0] < 1e-12 and d.moving_residuals[0] < 1e-12
        for r in d.static_residuals[1:] + d.moving_residuals[1:]:
            assert 0.5 * sigma <= r <= 2 * sigma


def test_count_mismatch_falls_back_to_icp():
    # ICP starts from identity, so frame 1 is expressed in the reference camera
    h = synthetic.hinge_fixture(np.random.default_rng(4), n_frames=3)
    back = geom.invert(h.cameras[1])
    t, s, m = h.frames[1]
    frames = [h.frames[0], (t, apply(back, s).select(slice(0, 250)), apply(back, m))]
    d = derive_motion(frames)
    assert np.max(np.abs(d.stabilization[1] - np.eye(4))) < 1e-6
    assert np.max(np.abs(d.track.poses[1] - h.rotations[1])) < 1e-6


def test_errors():
    s = synthetic.random_points(np.random.default_rng(5), 10)
    with pytest.raises(InsufficientFrames):
        derive_motion([(0.0, s, s)])
    line = PointSet.from_xyz([[k, 0, 0] for k in range(10)])
    with pytest.raises(RegistrationFailed) as e:
        derive_motion([(0.0, s, s), (1.0, line, s)])
    assert e.value.frame == 1 and "frame 1" in str(e.value)


# --- replay ------------------------------------------------------------------

def hinge_workspace(seed=6):
    h = synthetic.hinge_fixture(np.random.default_rng(seed))
    d = derive_motion(h.frames)
    ws, ids = motion_workspace(h.static, h.moving, d.track)
    return h, d, ws, ids


def test_pose_at_without_motion_is_cumulative():
    ws = synthetic.random_tree(np.random.default_rng(7), max_nodes=30)
    for n in ws.nodes:
        for t in (0.0, 3.5):
            assert np.array_equal(pose_at(ws, n, t), ws.cumulative_transform(n))
    with pytest.raises(UnknownNode):
        pose_at(ws, 1000, 0.0)


def test_pose_at_substitutes_sample():
    h, d, ws, ids = hinge_workspace()
    k = 4
    assert np.array_equal(pose_at(ws, ids["moving"], h.times[k]), d.track.poses[k])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-1.0, 3.0))
def test_pose_at_random_tree_with_one_motion(seed, t):
    rng = np.random.default_rng(seed)
    ws = synthetic.random_tree(rng, max_nodes=40, affine=False)
    host = int(rng.choice(list(ws.nodes)))
    poses = [synthetic.random_rigid(rng) for _ in range(3)]
    track = MotionTrack([0.0, 1.0, 2.0], poses, "linear")
    m = ws.add_motion(track, host, "motion")
    child = ws.add_transform(synthetic.random_rigid(rng), m)
    leaf = ws.add_object(synthetic.random_points(rng, 3), child)
    parents = {k: v.parent for k, v in ws.nodes.items()}
    local = {k: v.payload.matrix for k, v in ws.nodes.items() if isinstance(v.payload, Transform)}
    local[m] = sample(track, t)
    expected = oracles.path_walk(parents, local, leaf)
    assert oracles.max_abs_diff(pose_at(ws, leaf, t), expected) < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_descendant_only_effect(seed):
    rng = np.random.default_rng(seed)
    ws = synthetic.random_tree(rng, max_nodes=40)
    host = int(rng.choice(list(ws.nodes)))
    track = MotionTrack([0.0, 1.0], [np.eye(4), synthetic.random_rigid(rng)], "linear")
    m = ws.add_motion(track, host)
    ws.add_object(synthetic.random_points(rng, 3), m)
    for n in ws.nodes:
        if not any(isinstance(ws.nodes[k].payload, Motion) for k in ws.path(n)):
            base = pose_at(ws, n, 0.0)
            for t in (0.25, 0.5, 1.0, 7.0):
                assert np.array_equal(pose_at(ws, n, t), base)


def test_export_single_time_constant_track():
    rng = np.random.default_rng(8)
    track = MotionTrack([0.0], [synthetic.random_rigid(rng)])
    ws, ids = motion_workspace(synthetic.random_points(rng, 5), synthetic.random_points(rng, 5), track)
    frames = export_animation(ws, ids["motion"], [0.0])
    assert len(frames) == 1
    assert np.array_equal(frames[0][1].coords, ws.world_points(ids["moving"]).coords)
    with pytest.raises(UnknownNode):
        export_animation(ws, 99, [0.0])


def test_export_hinge_matches_generator():
    h, d, ws, ids = hinge_workspace(9)
    frames = export_animation(ws, ids["root"], h.times)
    static0 = frames[0][1].by_tag()[ids["static"]]
    for i, (t, pts) in enumerate(frames):
        parts = pts.by_tag()
        truth_static, truth_moving = h.stabilized(i)
        assert np.max(np.abs(parts[ids["moving"]].xyz - truth_moving.xyz)) < 1e-6
        assert np.array_equal(parts[ids["static"]].coords, static0.coords)
        assert np.max(np.abs(parts[ids["static"]].xyz - truth_static.xyz)) < 1e-12
    assert static_objects(ws) == [ids["static"]]


def test_write_animation(tmp_path):
    h, d, ws, ids = hinge_workspace(10)
    frames = export_animation(ws, ids["root"], [0.0, 0.45, 0.9])
    manifest = json.loads(write_animation(frames, tmp_path / "anim").read_text())
    assert manifest["convention"] == CONVENTION
    assert [f["file"] for f in manifest["frames"]] == ["frame_00000.xyz", "frame_00001.xyz", "frame_00002.xyz"]
    assert [f["t"] for f in manifest["frames"]] == [0.0, 0.45, 0.9]
    back = read_xyz(tmp_path / "anim" / "frame_00001.xyz")
    assert np.array_equal(back.coords, frames[1][1].coords)
