import math

import numpy as np
import pytest
import torch

from manipsynth.errors import LimitViolationError, ParseError
from manipsynth.objects import (
    Box,
    Capsule,
    ObjectGeometry,
    ObjectState,
    ObjectTrajectory,
    SdfSequence,
    Sphere,
    object_pose_matrix,
    pose_object,
    signed_distance,
)
from manipsynth.rotations import Transform, axis_angle_to_matrix


def box_sphere_geometry():
    parts = [
        [Box((0.5, 0.5, 0.5))],
        [Sphere(0.1, Transform.identity())],
    ]
    return ObjectGeometry(parts, joint_pivot=(0, 0.5, 0), joint_axis=(0, 0, 1.0), joint_limits=(0.0, math.pi))


def test_box_sdf_center():
    geom = ObjectGeometry([[Box((0.5, 0.5, 0.5))], [Sphere(0.01)]], (0, 0, 0), (0, 0, 1.0))
    posed = pose_object(geom, ObjectState.identity())
    # center of the unit box: 0.5 to every face
    d = geom.parts[0][0].sdf_local(torch.zeros(3, dtype=torch.float64))
    assert abs(float(d) + 0.5) < 1e-15


def test_sphere_sdf_outside():
    s = Sphere(0.1)
    d = s.sdf_local(torch.tensor([0.3, 0.0, 0.0], dtype=torch.float64))
    assert abs(float(d) - 0.2) < 1e-15


def test_capsule_sdf_values():
    c = Capsule(radius=0.1, half_height=0.5)
    assert abs(float(c.sdf_local(torch.tensor([0.0, 0.0, 0.0], dtype=torch.float64))) + 0.1) < 1e-15
    assert abs(float(c.sdf_local(torch.tensor([0.0, 0.7, 0.0], dtype=torch.float64))) - 0.1) < 1e-15
    assert abs(float(c.sdf_local(torch.tensor([0.3, 0.2, 0.0], dtype=torch.float64))) - 0.2) < 1e-15


def test_union_sign_matches_membership_oracle():
    geom = box_sphere_geometry()
    state = ObjectState(torch.zeros(3), torch.zeros(3), 0.3)
    posed = pose_object(geom, state)
    rng = np.random.default_rng(0)
    q = torch.tensor(rng.uniform(-1.2, 1.2, size=(10000, 3)), dtype=torch.float64)
    d = signed_distance(posed, q)

    # membership oracle: transform into each primitive frame and test exactly
    inside = torch.zeros(10000, dtype=torch.bool)
    for world, part in zip(posed.part_transforms, geom.parts):
        for prim in part:
            local = (world @ prim.local).inverse().apply(q)
            if isinstance(prim, Box):
                h = torch.tensor(prim.half_extents, dtype=torch.float64)
                inside |= (local.abs() <= h).all(dim=1)
            else:
                inside |= local.norm(dim=1) <= prim.radius
    on_surface = d.abs() < 1e-9
    assert torch.equal((d < 0) | on_surface, inside) or bool(((d < 0) == inside)[~on_surface].all())


def test_pose_identity_state():
    geom = box_sphere_geometry()
    posed = pose_object(geom, ObjectState.identity())
    assert float((posed.surface_points(0) - geom._rest_samples[0]).abs().max()) < 1e-12


def test_articulation_quarter_turn():
    # pivot at origin, axis +z: part-2 point (1,0,0) -> (0,1,0) at a = pi/2
    geom = ObjectGeometry(
        [[Box((0.1, 0.1, 0.1))], [Sphere(0.05)]],
        joint_pivot=(0.0, 0.0, 0.0),
        joint_axis=(0.0, 0.0, 1.0),
        joint_limits=(0.0, math.pi),
    )
    art = geom.articulation_transform(math.pi / 2)
    p = art.apply(torch.tensor([1.0, 0.0, 0.0], dtype=torch.float64))
    assert float((p - torch.tensor([0.0, 1.0, 0.0], dtype=torch.float64)).abs().max()) < 1e-12


def test_posing_is_isometry_per_part():
    geom = box_sphere_geometry()
    rng = np.random.default_rng(3)
    state = ObjectState(
        torch.tensor(rng.standard_normal(3)),
        torch.tensor(rng.standard_normal(3) * 0.8),
        float(rng.uniform(0, math.pi)),
    )
    posed = pose_object(geom, state)
    for part in range(2):
        rest = geom._rest_samples[part][:64]
        moved = posed.part_transforms[part].apply(rest)
        d0 = (rest[:, None] - rest[None, :]).norm(dim=-1)
        d1 = (moved[:, None] - moved[None, :]).norm(dim=-1)
        assert float((d0 - d1).abs().max()) < 1e-9


def test_object_pose_matrix_cases():
    assert float((object_pose_matrix(ObjectState.identity()).as_matrix() - torch.eye(4)).abs().max()) == 0.0
    t = object_pose_matrix(ObjectState(torch.tensor([1.0, 0, 0]), torch.zeros(3), 0.0))
    assert torch.equal(t.rotation, torch.eye(3, dtype=torch.float64))
    # Rodrigues oracle: pi about Y
    state = ObjectState(torch.zeros(3), torch.tensor([0.0, math.pi, 0.0], dtype=torch.float64), 0.0)
    R = object_pose_matrix(state).rotation
    expected = torch.diag(torch.tensor([-1.0, 1.0, -1.0], dtype=torch.float64))
    assert float((R - expected).abs().max()) < 1e-12


def test_joint_limit_enforced():
    geom = box_sphere_geometry()
    with pytest.raises(LimitViolationError):
        pose_object(geom, ObjectState(torch.zeros(3), torch.zeros(3), -0.5))
    with pytest.raises(LimitViolationError):
        geom.part_samples_local(math.pi + 0.2)


def test_sdf_lipschitz():
    geom = box_sphere_geometry()
    posed = pose_object(geom, ObjectState(torch.zeros(3), torch.tensor([0.2, 0.1, -0.4]), 1.0))
    rng = np.random.default_rng(5)
    p = torch.tensor(rng.uniform(-1.5, 1.5, size=(2000, 3)), dtype=torch.float64)
    q = torch.tensor(rng.uniform(-1.5, 1.5, size=(2000, 3)), dtype=torch.float64)
    dp = signed_distance(posed, p)
    dq = signed_distance(posed, q)
    assert bool(((dp - dq).abs() <= (p - q).norm(dim=1) + 1e-12).all())


def test_sdf_gradient_unit_norm_exterior():
    geom = box_sphere_geometry()
    posed = pose_object(geom, ObjectState(torch.zeros(3), torch.zeros(3), 0.7))
    rng = np.random.default_rng(8)
    pts = []
    while len(pts) < 1000:
        cand = torch.tensor(rng.uniform(-2.0, 2.0, size=(4000, 3)), dtype=torch.float64)
        d = signed_distance(posed, cand)
        pts.extend(cand[d > 0.05][: 1000 - len(pts)])
    q = torch.stack(pts).requires_grad_(True)
    signed_distance(posed, q).sum().backward()
    norms = q.grad.norm(dim=1)
    # compare against central finite differences at a few points
    h = 1e-6
    for i in range(0, 1000, 199):
        g_fd = []
        for a in range(3):
            e = torch.zeros(3, dtype=torch.float64)
            e[a] = h
            g_fd.append(float((signed_distance(posed, q[i].detach() + e) - signed_distance(posed, q[i].detach() - e)) / (2 * h)))
        assert abs(np.linalg.norm(g_fd) - float(norms[i])) < 1e-3
    assert float((norms - 1.0).abs().max()) < 1e-3


def test_geometry_json_round_trip():
    geom = ObjectGeometry(
        [
            [Box((0.12, 0.04, 0.1)), Sphere(0.03, Transform.from_axis_angle([0, 0.4, 0], [0.1, 0, 0]))],
            [Capsule(0.02, 0.07, Transform.from_axis_angle([0.3, 0, 0], [0, 0.05, 0]))],
        ],
        joint_pivot=(0, 0.04, -0.1),
        joint_axis=(-1.0, 0, 0),
        joint_limits=(0.0, 1.2),
        samples_per_part=64,
        sample_seed=9,
    )
    clone = ObjectGeometry.from_json(geom.to_json())
    assert clone.joint_limits == geom.joint_limits
    assert clone.samples_per_part == 64
    for a, b in zip(clone.parts[0] + clone.parts[1], geom.parts[0] + geom.parts[1]):
        assert type(a) is type(b)
        assert float((a.local.as_matrix() - b.local.as_matrix()).abs().max()) < 1e-12
    # same samples -> same scale
    assert abs(clone.normalization_scale - geom.normalization_scale) < 1e-12


def test_geometry_json_errors():
    with pytest.raises(ParseError):
        ObjectGeometry.from_json("{}")
    with pytest.raises(ParseError):
        ObjectGeometry.from_json('{"parts": [], "joint": {"pivot": [0,0,0], "axis": [0,0,1]}}')


def test_trajectory_jsonl_round_trip():
    states = [
        ObjectState(torch.tensor([0.1 * i, 0.9, 0.3]), torch.tensor([0.0, 0.1 * i, 0.0]), 0.05 * i)
        for i in range(5)
    ]
    traj = ObjectTrajectory(tuple(states), 30.0)
    clone = ObjectTrajectory.from_jsonl(traj.to_jsonl())
    assert clone.fps == 30.0
    for a, b in zip(clone.states, traj.states):
        assert float((a.translation - b.translation).abs().max()) == 0.0
        assert a.articulation == b.articulation


def test_state_canonicalized():
    aa = torch.tensor([0.0, 0.0, 2.5 * math.pi], dtype=torch.float64)
    s = ObjectState(torch.zeros(3), aa, 0.0)
    assert float(s.rotation.norm()) <= math.pi + 1e-12
    # same rotation matrix as the raw axis-angle
    assert float((axis_angle_to_matrix(s.rotation) - axis_angle_to_matrix(aa)).abs().max()) < 1e-9


def test_sdf_sequence_matches_per_frame():
    geom = box_sphere_geometry()
    states = [ObjectState(torch.tensor([0.1 * f, 0.0, 0.0]), torch.tensor([0.0, 0.2 * f, 0.0]), 0.1 * f) for f in range(5)]
    seq = SdfSequence(geom, states)
    rng = np.random.default_rng(12)
    q = torch.tensor(rng.uniform(-1, 1, size=(5, 40, 3)), dtype=torch.float64)
    batched = seq(q)
    for f in range(5):
        ref = pose_object(geom, states[f]).signed_distance(q[f])
        assert float((batched[f] - ref).abs().max()) < 1e-12


def test_surface_samples_deterministic_and_on_surface():
    g1 = box_sphere_geometry()
    g2 = box_sphere_geometry()
    for part in range(2):
        assert torch.equal(g1._rest_samples[part], g2._rest_samples[part])
    # each part's samples lie on that part's own surface (the union surface
    # may swallow them when primitives overlap)
    for part_idx in range(2):
        pts = g1._rest_samples[part_idx]
        d = torch.stack([p.sdf_local(p.local.inverse().apply(pts)) for p in g1.parts[part_idx]]).min(dim=0).values
        assert float(d.abs().max()) < 1e-9
