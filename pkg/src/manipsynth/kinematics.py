"""Differentiable forward kinematics over arbitrary joint chains."""

from __future__ import annotations

import torch

from .errors import ParseError
from .rotations import as_tensor, axis_angle_to_matrix
from .skeleton import Pose, Skeleton


def fk_positions(parents, offsets, root_t, rot_mats, return_rotations=False):
    """Propagate local rotations down the tree.

    parents: length-J sequence, parents[0] == -1, parents precede children
    offsets: (J, 3) rest offsets from parent
    root_t: (..., 3) root translation
    rot_mats: (..., J, 3, 3) local rotations
    Returns (..., J, 3) global joint positions (and global rotations if asked).
    """
    offsets = as_tensor(offsets)
    root_t = as_tensor(root_t)
    rot_mats = as_tensor(rot_mats)
    J = len(parents)
    if rot_mats.shape[-3] != J or offsets.shape != (J, 3):
        raise ParseError(
            f"rotation count {rot_mats.shape[-3]} / offset count {tuple(offsets.shape)} "
            f"do not match {J} joints"
        )

    glob_rot = [None] * J
    glob_pos = [None] * J
    glob_rot[0] = rot_mats[..., 0, :, :]
    glob_pos[0] = root_t
    for j in range(1, J):
        p = parents[j]
        glob_rot[j] = glob_rot[p] @ rot_mats[..., j, :, :]
        glob_pos[j] = glob_pos[p] + glob_rot[p] @ offsets[j]

    positions = torch.stack(glob_pos, dim=-2)
    if return_rotations:
        return positions, torch.stack(glob_rot, dim=-3)
    return positions


def forward_kinematics(skeleton: Skeleton, pose: Pose) -> torch.Tensor:
    """Global positions (J, 3) of each skeleton joint for one pose."""
    if pose.rotations.shape[0] != skeleton.num_joints:
        raise ParseError(
            f"pose has {pose.rotations.shape[0]} rotations for a "
            f"{skeleton.num_joints}-joint skeleton"
        )
    rot_mats = axis_angle_to_matrix(pose.rotations)
    return fk_positions(skeleton.parents, skeleton.offsets, pose.root, rot_mats)
