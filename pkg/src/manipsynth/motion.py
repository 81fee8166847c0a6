"""Decoupled whole-body motion features and their inverse.

Each frame splits into a body block (planar root velocity in the previous
frame's heading frame, root height, heading angular velocity, 22 joint
rotations in 6D with the root yaw removed) and two 15-joint hand blocks.
The first frame anchors the global planar position and heading, making
the features invariant to where the motion happens and which way it faces.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import torch

from .errors import InvalidRotationError, ParseError, TooShortError
from .kinematics import fk_positions
from .rotations import (
    DTYPE,
    as_tensor,
    axis_angle_to_matrix,
    matrix_to_axis_angle,
    rot6d_degenerate_mask,
    yaw_matrix,
)
from .skeleton import BODY_JOINTS, HAND_JOINTS, Pose, Skeleton, TOTAL_JOINTS

BODY_DIM = 4 + 6 * BODY_JOINTS  # 136
HAND_DIM = 6 * HAND_JOINTS  # 90
PIPELINE_FPS = 30.0
_FORWARD = torch.tensor([0.0, 0.0, 1.0], dtype=DTYPE)  # root forward axis (rest pose)


def _wrap_angle(a: float) -> float:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


@dataclass(frozen=True)
class MotionSequence:
    """Per-frame features plus the global anchor of the first frame."""

    body: torch.Tensor  # (N, 136)
    left_hand: torch.Tensor  # (N, 90)
    right_hand: torch.Tensor  # (N, 90)
    fps: float
    init_facing: float  # heading angle of frame 0 (rad)
    init_xz: torch.Tensor  # (2,) planar root position of frame 0 (m)

    def __post_init__(self):
        object.__setattr__(self, "body", as_tensor(self.body))
        object.__setattr__(self, "left_hand", as_tensor(self.left_hand))
        object.__setattr__(self, "right_hand", as_tensor(self.right_hand))
        object.__setattr__(self, "init_xz", as_tensor(self.init_xz))
        n = self.body.shape[0]
        if n == 0:
            raise TooShortError("motion sequence must be non-empty")
        if self.body.shape != (n, BODY_DIM):
            raise ParseError(f"body features must be (N, {BODY_DIM}), got {tuple(self.body.shape)}")
        if self.left_hand.shape != (n, HAND_DIM) or self.right_hand.shape != (n, HAND_DIM):
            raise ParseError(f"hand features must be (N, {HAND_DIM})")
        if self.init_xz.shape != (2,):
            raise ParseError("init_xz must be a planar (2,) position")

    def __len__(self):
        return self.body.shape[0]

    def to_jsonl(self) -> str:
        lines = []
        for i in range(len(self)):
            rec = {"frame": i}
            if i == 0:
                rec["fps"] = self.fps
                rec["init_facing"] = self.init_facing
                rec["init_xz"] = [float(v) for v in self.init_xz]
            rec["body"] = [float(v) for v in self.body[i]]
            rec["left_hand"] = [float(v) for v in self.left_hand[i]]
            rec["right_hand"] = [float(v) for v in self.right_hand[i]]
            lines.append(json.dumps(rec))
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_jsonl(text: str) -> "MotionSequence":
        body, lh, rh = [], [], []
        fps, facing, xz = PIPELINE_FPS, 0.0, (0.0, 0.0)
        for ln, line in enumerate(text.splitlines()):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                if rec["frame"] == 0:
                    fps = float(rec["fps"])
                    facing = float(rec["init_facing"])
                    xz = rec["init_xz"]
                body.append(rec["body"])
                lh.append(rec["left_hand"])
                rh.append(rec["right_hand"])
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as e:
                raise ParseError(f"invalid motion line {ln + 1}: {e}") from e
        if not body:
            raise ParseError("empty motion file")
        return MotionSequence(
            torch.tensor(body, dtype=DTYPE),
            torch.tensor(lh, dtype=DTYPE),
            torch.tensor(rh, dtype=DTYPE),
            fps,
            facing,
            torch.tensor(xz, dtype=DTYPE),
        )


def _heading_of(rot_root: torch.Tensor, prev: float) -> float:
    """Yaw of the root forward axis projected on the ground plane."""
    f = rot_root @ _FORWARD
    if float(torch.hypot(f[0], f[2])) < 1e-6:
        return prev  # forward axis near vertical, keep the last heading
    return math.atan2(float(f[0]), float(f[2]))


def _rot6d_cols(R: torch.Tensor) -> torch.Tensor:
    return torch.cat([R[..., :, 0], R[..., :, 1]], dim=-1)


def encode_motion(poses, skeleton: Skeleton, fps: float = PIPELINE_FPS) -> MotionSequence:
    """Poses -> decoupled features. Velocities are per-frame differences."""
    if len(poses) < 2:
        raise TooShortError(f"need at least 2 poses to encode motion, got {len(poses)}")
    n = len(poses)
    roots = torch.stack([p.root for p in poses])  # (N, 3)
    aa = torch.stack([p.rotations for p in poses])  # (N, 52, 3)
    if aa.shape[1] != skeleton.num_joints:
        raise ParseError("pose joint count does not match skeleton")
    rots = axis_angle_to_matrix(aa)  # (N, 52, 3, 3)

    headings = []
    h = 0.0
    for i in range(n):
        h = _heading_of(rots[i, 0], h)
        headings.append(h)

    body = torch.zeros(n, BODY_DIM, dtype=DTYPE)
    for i in range(n):
        if i > 0:
            v = roots[i] - roots[i - 1]
            local = yaw_matrix(torch.tensor(headings[i - 1], dtype=DTYPE)).T @ v
            body[i, 0] = local[0]
            body[i, 1] = local[2]
            body[i, 3] = _wrap_angle(headings[i] - headings[i - 1])
        body[i, 2] = roots[i, 1]
        r_local = yaw_matrix(torch.tensor(headings[i], dtype=DTYPE)).T @ rots[i, 0]
        body[i, 4:10] = _rot6d_cols(r_local)
    body[:, 10:] = _rot6d_cols(rots[:, 1:BODY_JOINTS]).reshape(n, -1)

    lh = _rot6d_cols(rots[:, BODY_JOINTS : BODY_JOINTS + HAND_JOINTS]).reshape(n, -1)
    rh = _rot6d_cols(rots[:, BODY_JOINTS + HAND_JOINTS :]).reshape(n, -1)
    return MotionSequence(body, lh, rh, fps, headings[0], roots[0, [0, 2]])


def _decode_rot6d_strict(r6: torch.Tensor, what: str) -> torch.Tensor:
    """Gram-Schmidt decode of (N, J, 6) with frame/joint indices on failure."""
    bad = rot6d_degenerate_mask(r6)
    if bool(bad.any()):
        idx = bad.nonzero()[0].tolist()
        raise InvalidRotationError(f"degenerate 6D rotation in {what} at (frame, joint) = {tuple(idx)}")
    a1, a2 = r6[..., 0:3], r6[..., 3:6]
    b1 = a1 / a1.norm(dim=-1, keepdim=True)
    a2p = a2 - (b1 * a2).sum(-1, keepdim=True) * b1
    b2 = a2p / a2p.norm(dim=-1, keepdim=True)
    b3 = torch.cross(b1, b2, dim=-1)
    return torch.stack([b1, b2, b3], dim=-1)


def sequence_to_fk_inputs(seq: MotionSequence):
    """Differentiable features -> (root translation (N, 3), rotations (N, 52, 3, 3)).

    Integrates heading and planar velocities from the first-frame anchor.
    """
    body, lh, rh = seq.body, seq.left_hand, seq.right_hand
    n = body.shape[0]

    dr_a = body[:, 3].clone()
    dr_a[0] = 0.0
    headings = seq.init_facing + torch.cumsum(dr_a, dim=0)  # (N,)
    prev_head = torch.cat([headings[:1], headings[:-1]])

    # per-frame world planar step, rotated out of the previous heading frame
    c, s = torch.cos(prev_head), torch.sin(prev_head)
    vx, vz = body[:, 0], body[:, 1]
    step_x = c * vx + s * vz
    step_z = -s * vx + c * vz
    step_x = torch.cat([torch.zeros(1, dtype=body.dtype), step_x[1:]])
    step_z = torch.cat([torch.zeros(1, dtype=body.dtype), step_z[1:]])
    px = seq.init_xz[0] + torch.cumsum(step_x, dim=0)
    pz = seq.init_xz[1] + torch.cumsum(step_z, dim=0)
    root_t = torch.stack([px, body[:, 2], pz], dim=-1)  # (N, 3)

    root_local = _decode_rot6d_strict(body[:, 4:10].reshape(n, 1, 6), "body root")
    root_rot = yaw_matrix(headings) @ root_local[:, 0]
    body_rot = _decode_rot6d_strict(body[:, 10:].reshape(n, BODY_JOINTS - 1, 6), "body")
    lh_rot = _decode_rot6d_strict(lh.reshape(n, HAND_JOINTS, 6), "left hand")
    rh_rot = _decode_rot6d_strict(rh.reshape(n, HAND_JOINTS, 6), "right hand")
    rots = torch.cat([root_rot[:, None], body_rot, lh_rot, rh_rot], dim=1)
    return root_t, rots


def decode_motion(seq: MotionSequence, skeleton: Skeleton):
    """Features -> list of Pose (axis-angle storage form)."""
    root_t, rots = sequence_to_fk_inputs(seq)
    aa = matrix_to_axis_angle(rots)
    return [Pose(root_t[i], aa[i]) for i in range(len(seq))]


def motion_joint_positions(seq: MotionSequence, skeleton: Skeleton) -> torch.Tensor:
    """Global joint positions (N, 52, 3) straight from the features."""
    root_t, rots = sequence_to_fk_inputs(seq)
    return fk_positions(skeleton.parents, skeleton.offsets, root_t, rots)


def poses_to_csv(poses) -> str:
    """One row per (frame, joint): axis-angle plus the frame's root translation."""
    lines = ["frame,joint,aa_x,aa_y,aa_z,root_x,root_y,root_z"]
    for i, p in enumerate(poses):
        for j in range(p.rotations.shape[0]):
            aa = p.rotations[j]
            lines.append(
                f"{i},{j},{float(aa[0])!r},{float(aa[1])!r},{float(aa[2])!r},"
                f"{float(p.root[0])!r},{float(p.root[1])!r},{float(p.root[2])!r}"
            )
    return "\n".join(lines) + "\n"
