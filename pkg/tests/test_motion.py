import math

import numpy as np
import pytest
import torch

from manipsynth.errors import InvalidRotationError, ParseError, TooShortError
from manipsynth.kinematics import forward_kinematics
from manipsynth.motion import (
    BODY_DIM,
    HAND_DIM,
    MotionSequence,
    decode_motion,
    encode_motion,
    motion_joint_positions,
    sequence_to_fk_inputs,
)
from manipsynth.rotations import axis_angle_to_matrix, yaw_matrix
from manipsynth.skeleton import Pose, REST_ROOT_HEIGHT


def make_pose(skeleton, root, yaw=0.0, seed=None, scale=0.25):
    aa = torch.zeros(skeleton.num_joints, 3, dtype=torch.float64)
    if seed is not None:
        rng = np.random.default_rng(seed)
        aa = torch.tensor(rng.standard_normal((skeleton.num_joints, 3)) * scale, dtype=torch.float64)
    aa[0] = torch.tensor([0.0, yaw, 0.0], dtype=torch.float64)
    return Pose(torch.tensor(root, dtype=torch.float64), aa)


def test_static_pose_encodes_to_zero_velocities(skeleton):
    pose = make_pose(skeleton, [0.3, REST_ROOT_HEIGHT, -0.2], yaw=0.4)
    seq = encode_motion([pose] * 5, skeleton)
    assert float(seq.body[:, 0].abs().max()) == 0.0  # vx
    assert float(seq.body[:, 1].abs().max()) == 0.0  # vz
    assert float(seq.body[:, 3].abs().max()) == 0.0  # heading rate
    assert float((seq.body[:, 2] - REST_ROOT_HEIGHT).abs().max()) < 1e-12


def test_forward_translation_zero_heading(skeleton):
    poses = [make_pose(skeleton, [0.01 * i, 0.9, 0.0]) for i in range(6)]
    seq = encode_motion(poses, skeleton)
    assert float((seq.body[1:, 0] - 0.01).abs().max()) < 1e-12
    assert float(seq.body[1:, 1].abs().max()) < 1e-12


def test_decode_constant_when_no_velocity(skeleton):
    pose = make_pose(skeleton, [0.1, 0.95, 0.7], yaw=-0.8, seed=4)
    seq = encode_motion([pose] * 4, skeleton)
    back = decode_motion(seq, skeleton)
    for p in back:
        assert float((p.root - pose.root).abs().max()) < 1e-12


def test_circular_path_closed_form(skeleton):
    """Constant turn rate + constant forward speed = a regular polygon.

    Oracle: complex-number geometric sum of the rotated steps.
    """
    n = 36
    turn = 2.0 * math.pi / n
    speed = 0.02
    seq0 = encode_motion([make_pose(skeleton, [0, 0.9, 0])] * n, skeleton)
    body = seq0.body.clone()
    body[1:, 1] = speed  # forward (z of the heading frame)
    body[1:, 3] = turn
    seq = MotionSequence(body, seq0.left_hand, seq0.right_hand, 30.0, 0.0, torch.zeros(2, dtype=torch.float64))
    root_t, _ = sequence_to_fk_inputs(seq)

    # oracle in the complex plane: step k moves speed * e^{i * heading_{k-1}}
    # with headings k*turn; position_k = speed * sum_{j<k} e^{i j turn}
    z = [0j]
    for k in range(1, n):
        z.append(z[-1] + speed * np.exp(1j * ((k - 1) * turn)))
    for k in range(n):
        assert abs(float(root_t[k, 0]) - z[k].imag) < 1e-9  # x <-> sin component
        assert abs(float(root_t[k, 2]) - z[k].real) < 1e-9  # z <-> cos component
    # heading returns to start (mod 2 pi) one step past the last frame
    total_turn = float(body[1:, 3].sum())
    assert abs(total_turn - (n - 1) * turn) < 1e-12


def test_round_trip_random_walk(skeleton):
    rng = np.random.default_rng(10)
    poses = []
    pos = np.array([0.2, 0.93, -0.1])
    yaw = 0.3
    for i in range(20):
        yaw += rng.uniform(-0.2, 0.2)
        pos = pos + np.array([rng.uniform(-0.03, 0.03), rng.uniform(-0.005, 0.005), rng.uniform(-0.03, 0.03)])
        aa = torch.tensor(rng.standard_normal((52, 3)) * 0.3, dtype=torch.float64)
        aa[0] = torch.tensor([0.0, yaw, 0.0])
        # give the root some pitch/roll on top of yaw
        extra = axis_angle_to_matrix(torch.tensor([rng.uniform(-0.2, 0.2), 0.0, rng.uniform(-0.2, 0.2)]))
        root_rot = yaw_matrix(torch.tensor(yaw, dtype=torch.float64)) @ extra
        from manipsynth.rotations import matrix_to_axis_angle

        aa[0] = matrix_to_axis_angle(root_rot)
        poses.append(Pose(torch.tensor(pos, dtype=torch.float64), aa))

    seq = encode_motion(poses, skeleton)
    back = decode_motion(seq, skeleton)
    for a, b in zip(poses, back):
        pa = forward_kinematics(skeleton, a)
        pb = forward_kinematics(skeleton, b)
        assert float((pa - pb).abs().max()) < 1e-6

    # features -> poses -> features is the identity too
    seq2 = encode_motion(back, skeleton)
    assert float((seq2.body - seq.body).abs().max()) < 1e-6
    assert float((seq2.left_hand - seq.left_hand).abs().max()) < 1e-9


def test_yaw_translation_invariance(skeleton):
    rng = np.random.default_rng(21)
    base = []
    pos = np.array([0.0, 0.95, 0.0])
    yaw = 0.1
    for i in range(8):
        yaw += rng.uniform(-0.15, 0.15)
        pos = pos + np.array([rng.uniform(-0.02, 0.02), 0.0, rng.uniform(-0.02, 0.02)])
        p = make_pose(skeleton, pos.tolist(), yaw=yaw, seed=100 + i)
        base.append(p)

    delta_yaw = 1.234
    shift = torch.tensor([5.0, 0.0, -3.0], dtype=torch.float64)
    G = yaw_matrix(torch.tensor(delta_yaw, dtype=torch.float64))
    from manipsynth.rotations import matrix_to_axis_angle

    moved = []
    for p in base:
        aa = p.rotations.clone()
        aa[0] = matrix_to_axis_angle(G @ axis_angle_to_matrix(p.rotations[0]))
        moved.append(Pose(G @ p.root + shift, aa))

    s1 = encode_motion(base, skeleton)
    s2 = encode_motion(moved, skeleton)
    assert float((s1.body - s2.body).abs().max()) < 1e-9
    assert float((s1.left_hand - s2.left_hand).abs().max()) < 1e-9
    assert float((s1.right_hand - s2.right_hand).abs().max()) < 1e-9


def test_dimension_validation(skeleton):
    with pytest.raises(ParseError):
        MotionSequence(torch.zeros(3, 10), torch.zeros(3, HAND_DIM), torch.zeros(3, HAND_DIM), 30.0, 0.0, torch.zeros(2))
    with pytest.raises(TooShortError):
        MotionSequence(
            torch.zeros(0, BODY_DIM), torch.zeros(0, HAND_DIM), torch.zeros(0, HAND_DIM), 30.0, 0.0, torch.zeros(2)
        )
    with pytest.raises(TooShortError):
        encode_motion([Pose.rest(skeleton)], skeleton)


def test_degenerate_rotation_reports_indices(skeleton):
    pose = make_pose(skeleton, [0, 0.9, 0])
    seq = encode_motion([pose] * 3, skeleton)
    body = seq.body.clone()
    body[2, 10:16] = 0.0  # zero out joint 1's 6D block in frame 2
    bad = MotionSequence(body, seq.left_hand, seq.right_hand, 30.0, seq.init_facing, seq.init_xz)
    with pytest.raises(InvalidRotationError) as exc:
        decode_motion(bad, skeleton)
    assert "(2, 0)" in str(exc.value)  # frame 2, joint 0 of the body-joint block


def test_jsonl_round_trip(skeleton):
    poses = [make_pose(skeleton, [0.01 * i, 0.9, 0], yaw=0.05 * i, seed=i) for i in range(4)]
    seq = encode_motion(poses, skeleton)
    clone = MotionSequence.from_jsonl(seq.to_jsonl())
    assert float((clone.body - seq.body).abs().max()) == 0.0
    assert clone.fps == seq.fps
    assert clone.init_facing == seq.init_facing
    j1 = motion_joint_positions(seq, skeleton)
    j2 = motion_joint_positions(clone, skeleton)
    assert float((j1 - j2).abs().max()) == 0.0
