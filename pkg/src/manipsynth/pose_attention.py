"""Relative object-pose encoding for attention queries and keys.

Feature vectors are treated as stacks of homogeneous 4-blocks and each
block is multiplied by a per-frame rigid pose matrix: keys use P itself,
queries P^{-T}. Attention scores between encoded features then depend
only on the relative pose between the two frames.
"""

from __future__ import annotations

import torch

from .errors import DimensionError
from .rotations import as_tensor

DEFAULT_WINDOW = 120


def pose_inverse(P: torch.Tensor) -> torch.Tensor:
    """Closed-form inverse of rigid 4x4 matrices (..., 4, 4)."""
    R = P[..., :3, :3]
    t = P[..., :3, 3:]
    Rt = R.transpose(-1, -2)
    top = torch.cat([Rt, -(Rt @ t)], dim=-1)
    bottom = P[..., 3:, :].clone()
    bottom[..., 0, :3] = 0.0
    bottom[..., 0, 3] = 1.0
    return torch.cat([top, bottom], dim=-2)


def _psi(P: torch.Tensor, role: str) -> torch.Tensor:
    if role == "key":
        return P
    if role == "query":
        return pose_inverse(P).transpose(-1, -2)
    raise ValueError(f"role must be 'query' or 'key', got {role!r}")


def apply_pose_encoding(v, P, role: str) -> torch.Tensor:
    """Multiply each homogeneous 4-block of v by the role's pose operator.

    v: (..., d) with d divisible by 4; P: (..., 4, 4) rigid, broadcastable
    against v's batch shape. Returns a tensor shaped like v.
    """
    v = as_tensor(v) if not isinstance(v, torch.Tensor) else v
    P = as_tensor(P) if not isinstance(P, torch.Tensor) else P
    d = v.shape[-1]
    if d % 4 != 0:
        raise DimensionError(f"feature dimension {d} is not divisible by 4")
    psi = _psi(P.to(v.dtype), role)  # (..., 4, 4)
    blocks = v.reshape(*v.shape[:-1], d // 4, 4)
    out = torch.einsum("...ij,...bj->...bi", psi, blocks)
    return out.reshape(*v.shape)


def normalize_poses_to_first(P: torch.Tensor) -> torch.Tensor:
    """P_i -> P_0^{-1} P_i so the encoding ignores the initial placement."""
    return pose_inverse(P[..., :1, :, :]) @ P


def windowed_attention_mask(num_frames: int, window: int = DEFAULT_WINDOW) -> torch.Tensor:
    """Boolean (N, N) mask, True where frames may attend: |i - j| <= window / 2."""
    if window < 1:
        raise DimensionError(f"window must be >= 1, got {window}")
    idx = torch.arange(num_frames)
    return (idx[:, None] - idx[None, :]).abs() <= window / 2
