import math

import numpy as np
import pytest
import torch

from manipsynth.bps import EndEffectorBps, encode_ee_bps, encode_object_bps, sample_basis_points
from manipsynth.errors import (
    ConditioningError,
    ConfigError,
    InsufficientBasisError,
    ModelStateError,
    ParseError,
    ScenarioError,
)
from manipsynth.kinematics import fk_positions
from manipsynth.models import part_bps_frame_cond
from manipsynth.motion import decode_motion, encode_motion
from manipsynth.objects import ObjectState, ObjectTrajectory
from manipsynth.rotations import axis_angle_to_matrix
from manipsynth.scenario import Scenario, TextCondition
from manipsynth.synthesis import synthesize_training_data
from manipsynth.trajectory import (
    EeTrajectory,
    generate_ee_bps,
    generate_object_trajectory,
    recover_ee_positions,
    solve_point_from_distances,
)

F64 = torch.float64


# ---- text conditions ----

def test_text_render_and_parse():
    t = TextCondition("open", "box")
    assert t.render() == "A person open the box."
    assert TextCondition.parse(t.render()) == t
    with pytest.raises(ParseError):
        TextCondition.parse("Somebody opens a box")
    with pytest.raises(ConfigError):
        TextCondition("fly", "box")
    with pytest.raises(ConfigError):
        TextCondition("open", "zeppelin")


def test_text_one_hot_ids():
    t = TextCondition("close", "laptop")
    v = t.one_hot()
    assert float(v.sum()) == 2.0
    assert float(v[t.action_id]) == 1.0


# ---- trilateration recovery ----

def test_recover_exact_distances():
    basis = sample_basis_points(128, seed=0)
    scale = 0.3
    rng = np.random.default_rng(0)
    pts = torch.tensor(rng.uniform(-0.4, 0.4, size=(12, 3)), dtype=F64)
    frame = encode_ee_bps(pts, torch.zeros(10, dtype=torch.bool), basis, scale)
    ee = recover_ee_positions([frame], basis, scale)
    err = (ee.positions[0] - pts).norm(dim=1)
    assert float(err.max()) < 1e-4
    assert float(ee.residuals.max()) < 1e-6
    assert not bool(ee.low_confidence.any())


def test_recover_small_and_tetrahedral_basis():
    from manipsynth.bps import BasisPointSet

    tetra = torch.tensor(
        [[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]], dtype=F64
    ) / math.sqrt(3.0)
    basis4 = BasisPointSet(tetra, seed=-1)
    rng = np.random.default_rng(5)
    pts = torch.tensor(rng.uniform(-0.3, 0.3, size=(12, 3)), dtype=F64)
    frame = encode_ee_bps(pts, torch.zeros(10, dtype=torch.bool), basis4, 0.5)
    ee = recover_ee_positions([frame], basis4, 0.5)
    assert float((ee.positions[0] - pts).norm(dim=1).max()) < 1e-3


def test_recover_noisy_distances_median_error():
    basis = sample_basis_points(128, seed=0)
    scale = 0.3
    rng = np.random.default_rng(1)
    n_points = 240
    pts = torch.tensor(rng.uniform(-0.4, 0.4, size=(n_points, 3)), dtype=F64)
    anchors = basis.points * scale
    d = torch.cdist(pts, anchors)
    d_noisy = (d + torch.tensor(rng.normal(0, 0.001, size=d.shape), dtype=F64)).clamp_min(0.0)
    sol, residual = solve_point_from_distances(d_noisy, anchors)
    err = (sol - pts).norm(dim=1)
    assert float(err.median()) < 0.005


def test_recovery_residual_correlates_with_error():
    basis = sample_basis_points(64, seed=2)
    scale = 0.3
    rng = np.random.default_rng(3)
    n = 300
    pts = torch.tensor(rng.uniform(-0.4, 0.4, size=(n, 3)), dtype=F64)
    anchors = basis.points * scale
    d = torch.cdist(pts, anchors)
    sigmas = torch.tensor(rng.uniform(0.0, 0.01, size=(n, 1)))
    d_noisy = (d + torch.tensor(rng.standard_normal(d.shape)) * sigmas).clamp_min(0.0)
    sol, residual = solve_point_from_distances(d_noisy, anchors)
    err = (sol - pts).norm(dim=1).numpy()
    res = residual.numpy()

    def ranks(v):
        order = np.argsort(v)
        r = np.empty_like(order, dtype=float)
        r[order] = np.arange(len(v))
        return r

    re, rr = ranks(err), ranks(res)
    rho = float(np.corrcoef(re, rr)[0, 1])
    assert rho > 0.5


def test_recover_impossible_distances_flagged():
    basis = sample_basis_points(32, seed=4)
    frame = EndEffectorBps(torch.zeros(12, 32, dtype=F64), torch.zeros(10, dtype=torch.bool), 0.4)
    ee = recover_ee_positions([frame], basis, 0.4)
    assert bool(torch.isfinite(ee.positions).all())
    assert bool(ee.low_confidence.all())


def test_recover_rejects_coplanar_basis():
    from manipsynth.bps import BasisPointSet

    flat = torch.tensor(np.random.default_rng(0).uniform(-1, 1, size=(16, 3)), dtype=F64)
    flat[:, 2] = 0.0
    basis = BasisPointSet(flat, seed=-1)
    frame = EndEffectorBps(torch.ones(12, 16, dtype=F64), torch.zeros(10, dtype=torch.bool), 1.0)
    with pytest.raises(InsufficientBasisError):
        recover_ee_positions([frame], basis, 1.0)


def test_recover_maps_into_world_frame():
    basis = sample_basis_points(64, seed=6)
    scale = 0.3
    rng = np.random.default_rng(7)
    local = torch.tensor(rng.uniform(-0.3, 0.3, size=(12, 3)), dtype=F64)
    frame = encode_ee_bps(local, torch.zeros(10, dtype=torch.bool), basis, scale)
    state = ObjectState(torch.tensor([0.5, 1.0, -0.3], dtype=F64), torch.tensor([0.0, 0.8, 0.2], dtype=F64), 0.0)
    traj = ObjectTrajectory((state,), 30.0)
    ee = recover_ee_positions([frame], basis, scale, traj)
    from manipsynth.objects import object_pose_matrix

    expected = object_pose_matrix(state).apply(local)
    assert float((ee.positions[0] - expected).abs().max()) < 1e-3


def test_ee_trajectory_jsonl_round_trip():
    rng = np.random.default_rng(8)
    ee = EeTrajectory(
        torch.tensor(rng.standard_normal((4, 12, 3)), dtype=F64),
        torch.tensor(rng.random((4, 10)) > 0.5),
        torch.tensor(rng.uniform(0, 0.01, size=(4, 12)), dtype=F64),
        torch.zeros(4, 12, dtype=torch.bool),
        30.0,
    )
    clone = EeTrajectory.from_jsonl(ee.to_jsonl())
    assert float((clone.positions - ee.positions).abs().max()) == 0.0
    assert torch.equal(clone.contacts, ee.contacts)
    with pytest.raises(ParseError):
        EeTrajectory.from_jsonl("")


# ---- synthetic training data ----

def test_synthetic_contact_rides_handle(scenario, skeleton):
    samples = synthesize_training_data(scenario, 6, seed=31)
    grasping = [s for s in samples if bool(s.contacts.any())]
    assert grasping, "expected at least one grasping sample"
    s = grasping[0]
    from manipsynth.objects import pose_object

    # the right index tip tracks the handle exactly during full contact
    idx = 5  # right index in the fingertip block
    contact_frames = s.contacts[:, idx].nonzero().reshape(-1)
    mid = int(contact_frames[len(contact_frames) // 2])
    posed = pose_object(scenario.geometry, s.object_trajectory.states[mid])
    tip = s.ee_world[mid, 2 + idx]
    assert abs(float(posed.signed_distance(tip))) < 0.005


def test_synthetic_motion_round_trips(scenario, skeleton):
    s = synthesize_training_data(scenario, 2, seed=32)[0]
    back = decode_motion(s.motion, skeleton)
    for a, b in zip(s.poses, back):
        ja = fk_positions(skeleton.parents, skeleton.offsets, a.root, axis_angle_to_matrix(a.rotations))
        jb = fk_positions(skeleton.parents, skeleton.offsets, b.root, axis_angle_to_matrix(b.rotations))
        assert float((ja - jb).abs().max()) < 1e-6


def test_synthetic_seeds_differ(scenario):
    a = synthesize_training_data(scenario, 1, seed=1)[0]
    b = synthesize_training_data(scenario, 1, seed=2)[0]
    assert float((a.ee_world - b.ee_world).abs().max()) > 1e-4


def test_synthetic_determinism(scenario):
    a = synthesize_training_data(scenario, 2, seed=9)
    b = synthesize_training_data(scenario, 2, seed=9)
    for x, y in zip(a, b):
        assert torch.equal(x.ee_world, y.ee_world)
        assert torch.equal(x.motion.body, y.motion.body)


def test_infeasible_reach_raises(scenario):
    import json

    doc = json.loads(open_box_modified(scenario, translation=[0.0, 0.9, 1.5]))
    far = Scenario.from_json(doc if isinstance(doc, str) else json.dumps(doc))
    with pytest.raises(ScenarioError):
        synthesize_training_data(far, 3, seed=0)


def open_box_modified(scenario, translation):
    import importlib.resources as ir
    import json

    doc = json.loads((ir.files("manipsynth") / "scenarios" / "open_box.json").read_text())
    doc["initial_object_state"]["translation"] = translation
    doc["dataset"]["idle_fraction"] = 0.0
    return json.dumps(doc)


# ---- generation (trained models) ----

def test_generate_object_trajectory_contract(trained_models, scenario, basis):
    bundle = trained_models["object"]
    geom_bps = encode_object_bps(scenario.geometry, scenario.initial_object_state.articulation, basis)
    a = generate_object_trajectory(
        bundle, scenario.initial_object_state, scenario.text, geom_bps, 32, 5, scenario.geometry, 30.0, t_infer=50
    )
    b = generate_object_trajectory(
        bundle, scenario.initial_object_state, scenario.text, geom_bps, 32, 5, scenario.geometry, 30.0, t_infer=50
    )
    # determinism
    for s1, s2 in zip(a.states, b.states):
        assert torch.equal(s1.translation, s2.translation)
        assert s1.articulation == s2.articulation
    # frame 0 equals the initial state exactly
    assert a.states[0] is scenario.initial_object_state
    # joint limits respected everywhere
    lo, hi = scenario.geometry.joint_limits
    assert all(lo <= s.articulation <= hi for s in a.states)


def test_generate_object_trajectory_opens(trained_models, scenario, basis):
    bundle = trained_models["object"]
    geom_bps = encode_object_bps(scenario.geometry, scenario.initial_object_state.articulation, basis)
    opens = 0
    for seed in range(10):
        traj = generate_object_trajectory(
            bundle, scenario.initial_object_state, scenario.text, geom_bps, 64, seed, scenario.geometry, 30.0
        )
        if traj.states[-1].articulation >= math.pi / 4:
            opens += 1
    assert opens >= 8


def test_generate_object_requires_trained_model(scenario, basis):
    from manipsynth.diffusion import NoiseSchedule
    from manipsynth.models import build_model

    raw = build_model("object", 128, NoiseSchedule.cosine(100), seed=0)
    geom_bps = encode_object_bps(scenario.geometry, 0.0, basis)
    with pytest.raises(ModelStateError):
        generate_object_trajectory(
            raw, scenario.initial_object_state, scenario.text, geom_bps, 8, 0, scenario.geometry
        )


def test_generate_ee_bps_contract(trained_models, scenario, basis):
    bundle = trained_models["ee"]
    obj = trained_models["object"]
    geom_bps = encode_object_bps(scenario.geometry, scenario.initial_object_state.articulation, basis)
    traj = generate_object_trajectory(
        bundle=obj, initial=scenario.initial_object_state, text=scenario.text, geom_bps=geom_bps,
        frames=16, seed=3, geometry=scenario.geometry, fps=30.0, t_infer=50,
    )
    fc = part_bps_frame_cond(scenario.geometry, traj, basis)
    frames = generate_ee_bps(bundle, traj, fc, scenario.text, 11, scenario.geometry.normalization_scale, t_infer=20)
    assert len(frames) == 16
    for f in frames:
        assert f.distances.shape == (12, 128)
        assert f.contacts.shape == (10,)
        assert float(f.distances.min()) >= 0.0
    again = generate_ee_bps(bundle, traj, fc, scenario.text, 11, scenario.geometry.normalization_scale, t_infer=20)
    for f1, f2 in zip(frames, again):
        assert torch.equal(f1.distances, f2.distances)

    with pytest.raises(ConditioningError):
        generate_ee_bps(bundle, traj, fc[:-1], scenario.text, 11, scenario.geometry.normalization_scale)


def test_generate_ee_bps_pose_sensitivity(trained_models, scenario, basis):
    """Swapping two frames' object poses changes the output: the pose
    conditioning is live even with identical geometry conditioning."""
    bundle = trained_models["ee"]
    states = []
    for f in range(8):
        states.append(
            ObjectState(
                torch.tensor([0.02 * f, 0.9, 0.26 + 0.01 * f], dtype=F64),
                torch.tensor([0.0, 0.05 * f, 0.0], dtype=F64),
                0.1,
            )
        )
    traj1 = ObjectTrajectory(tuple(states), 30.0)
    swapped = list(states)
    swapped[2], swapped[6] = swapped[6], swapped[2]
    # keep articulation (and hence per-frame geometry conditioning) identical
    traj2 = ObjectTrajectory(tuple(swapped), 30.0)
    fc = part_bps_frame_cond(scenario.geometry, traj1, basis)
    out1 = generate_ee_bps(bundle, traj1, fc, scenario.text, 4, scenario.geometry.normalization_scale, t_infer=10)
    out2 = generate_ee_bps(bundle, traj2, fc, scenario.text, 4, scenario.geometry.normalization_scale, t_infer=10)
    diff = max(float((a.distances - b.distances).abs().max()) for a, b in zip(out1, out2))
    assert diff > 1e-6
