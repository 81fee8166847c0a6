import math

import numpy as np
import pytest
import torch

from manipsynth.bps import (
    BasisPointSet,
    EndEffectorBps,
    contact_labels,
    ee_bps_from_jsonl,
    ee_bps_to_features,
    ee_bps_to_jsonl,
    encode_ee_bps,
    encode_object_bps,
    features_to_ee_bps,
    sample_basis_points,
)
from manipsynth.errors import InsufficientBasisError, ParseError
from manipsynth.objects import Box, ObjectGeometry, ObjectState, Sphere, pose_object


@pytest.fixture(scope="module")
def geom():
    return ObjectGeometry(
        [[Box((0.12, 0.04, 0.10))], [Box((0.12, 0.01, 0.10), local=_lid())]],
        joint_pivot=(0, 0.04, -0.10),
        joint_axis=(-1.0, 0, 0),
        joint_limits=(0.0, math.pi / 2),
        samples_per_part=256,
    )


def _lid():
    from manipsynth.rotations import Transform

    return Transform.from_axis_angle([0, 0, 0], [0, 0.05, 0])


def test_determinism():
    a = sample_basis_points(128, seed=0)
    b = sample_basis_points(128, seed=0)
    assert torch.equal(a.points, b.points)
    c = sample_basis_points(128, seed=1)
    assert not torch.equal(a.points, c.points)


def test_unit_ball_and_mean_norm():
    bps = sample_basis_points(10000, seed=1)
    norms = bps.points.norm(dim=1)
    assert float(norms.max()) <= 1.0
    # uniform ball: E[r] = 3/4
    assert abs(float(norms.mean()) - 0.75) < 0.02


def test_too_few_points_rejected():
    with pytest.raises(InsufficientBasisError):
        sample_basis_points(3, seed=0)


def test_basis_json_round_trip():
    bps = sample_basis_points(16, seed=4)
    clone = BasisPointSet.from_json(bps.to_json())
    assert torch.equal(clone.points, bps.points)
    assert clone.seed == 4


def test_object_bps_shape_and_range(geom):
    bps = sample_basis_points(128, seed=0)
    enc = encode_object_bps(geom, 0.7, bps)
    assert enc.distances.shape == (128, 2)
    assert float(enc.distances.min()) >= 0.0
    assert float(enc.distances.max()) <= 2.0
    assert enc.scale == geom.normalization_scale


def test_object_bps_zero_at_coinciding_point(geom):
    # craft a basis point sitting exactly on a normalized surface sample
    target = geom._rest_samples[0][7] / geom.normalization_scale
    pts = sample_basis_points(8, seed=2).points.clone()
    pts[3] = target
    enc = encode_object_bps(geom, 0.0, BasisPointSet(pts, seed=-1))
    assert float(enc.distances[3, 0]) < 1e-12


def test_object_bps_matches_brute_force(geom):
    bps = sample_basis_points(32, seed=5)
    enc = encode_object_bps(geom, 0.9, bps)
    parts = geom.part_samples_local(0.9)
    for part in range(2):
        pts = parts[part] / geom.normalization_scale
        for k in (0, 7, 31):
            expected = min(float((bps.points[k] - p).norm()) for p in pts)
            assert abs(float(enc.distances[k, part]) - expected) < 1e-12


def test_object_bps_articulation_sensitivity_and_pose_invariance(geom):
    bps = sample_basis_points(64, seed=0)
    closed = encode_object_bps(geom, 0.0, bps)
    open_ = encode_object_bps(geom, math.pi / 2, bps)
    assert float((closed.distances - open_.distances).abs().max()) > 1e-3
    # world pose never enters the encoder: same articulation -> identical
    again = encode_object_bps(geom, 0.0, bps)
    assert torch.equal(closed.distances, again.distances)


def test_ee_bps_zero_at_scaled_basis_point():
    bps = sample_basis_points(16, seed=3)
    scale = 0.4
    pos = torch.zeros(12, 3, dtype=torch.float64)
    pos[5] = bps.points[9] * scale
    enc = encode_ee_bps(pos, torch.zeros(10, dtype=torch.bool), bps, scale)
    assert float(enc.distances[5, 9]) < 1e-12


def test_ee_bps_shape_and_direct_recomputation():
    bps = sample_basis_points(128, seed=0)
    rng = np.random.default_rng(6)
    pos = torch.tensor(rng.uniform(-0.5, 0.5, size=(12, 3)), dtype=torch.float64)
    contacts = torch.tensor(rng.random(10) > 0.5)
    enc = encode_ee_bps(pos, contacts, bps, 0.3)
    assert enc.distances.shape == (12, 128)
    for e in (0, 4, 11):
        for k in (0, 63, 127):
            expected = float((pos[e] - 0.3 * bps.points[k]).norm())
            assert abs(float(enc.distances[e, k]) - expected) < 1e-12
    assert torch.equal(enc.contacts, contacts)


def test_ee_bps_requires_positive_scale():
    bps = sample_basis_points(8, seed=0)
    with pytest.raises(ParseError):
        encode_ee_bps(torch.zeros(12, 3), torch.zeros(10, dtype=torch.bool), bps, 0.0)


def test_contact_labels(geom):
    posed = pose_object(geom, ObjectState.identity())
    pos = torch.zeros(12, 3, dtype=torch.float64)
    pos[:, 1] = 2.0  # far above
    pos[2] = torch.tensor([0.0, 0.06, 0.0])  # exactly on the lid top face
    pos[3] = torch.tensor([0.0, 0.20, 0.0])  # 0.14 above
    labels = contact_labels(pos, posed)
    assert bool(labels[0])
    assert not bool(labels[1])


def test_contact_threshold_sweep(geom):
    posed = pose_object(geom, ObjectState.identity())
    # sweep a fingertip along +y above the lid top (surface at y = 0.06)
    heights = np.linspace(0.0, 0.02, 21)
    for h in heights:
        pos = torch.zeros(12, 3, dtype=torch.float64)
        pos[:, 1] = 2.0
        pos[2] = torch.tensor([0.0, 0.06 + h, 0.0])
        sd = float(posed.signed_distance(pos[2]))
        expected = abs(sd) <= 0.005
        assert bool(contact_labels(pos, posed)[0]) == expected


def test_feature_round_trip():
    bps = sample_basis_points(16, seed=1)
    rng = np.random.default_rng(9)
    frames = [
        EndEffectorBps(
            torch.tensor(rng.uniform(0, 1, size=(12, 16)), dtype=torch.float64),
            torch.tensor(rng.random(10) > 0.5),
            0.37,
        )
        for _ in range(5)
    ]
    feats = ee_bps_to_features(frames)
    assert feats.shape == (5, 12 * 16 + 10)
    back = features_to_ee_bps(feats, 16, 0.37)
    for a, b in zip(back, frames):
        assert float((a.distances - b.distances).abs().max()) < 1e-12
        assert torch.equal(a.contacts, b.contacts)


def test_jsonl_round_trip():
    rng = np.random.default_rng(10)
    frames = [
        EndEffectorBps(
            torch.tensor(rng.uniform(0, 1, size=(12, 8)), dtype=torch.float64),
            torch.tensor(rng.random(10) > 0.5),
            0.5,
        )
        for _ in range(3)
    ]
    clone = ee_bps_from_jsonl(ee_bps_to_jsonl(frames), 8)
    for a, b in zip(clone, frames):
        assert torch.equal(a.distances, b.distances)
        assert torch.equal(a.contacts, b.contacts)
    with pytest.raises(ParseError):
        ee_bps_from_jsonl("{bad json}\n", 8)
