"""Rotation representations and rigid transforms.

Rotations are stored as axis-angle vectors (radians) and exposed to the
networks as the 6D representation (first two columns of the rotation
matrix, decoded with Gram-Schmidt). All functions accept batched inputs
and operate in float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .errors import InvalidRotationError

DTYPE = torch.float64


def as_tensor(x) -> torch.Tensor:
    """Convert array-like input to a float64 tensor (no copy if already one)."""
    if isinstance(x, torch.Tensor):
        return x.to(DTYPE)
    return torch.as_tensor(x, dtype=DTYPE)


def axis_angle_to_matrix(aa) -> torch.Tensor:
    """Rodrigues formula, safe at zero angle.

    aa: (..., 3) axis-angle -> (..., 3, 3)
    """
    aa = as_tensor(aa)
    angle = aa.norm(dim=-1, keepdim=True)  # (..., 1)
    # sin(x)/x and (1-cos(x))/x^2 with series fallback near zero
    small = angle < 1e-8
    a2 = angle * angle
    sinc = torch.where(small, 1.0 - a2 / 6.0, torch.sin(angle) / torch.where(small, torch.ones_like(angle), angle))
    cosc = torch.where(small, 0.5 - a2 / 24.0, (1.0 - torch.cos(angle)) / torch.where(small, torch.ones_like(a2), a2))

    x, y, z = aa[..., 0], aa[..., 1], aa[..., 2]
    zeros = torch.zeros_like(x)
    K = torch.stack(
        [
            torch.stack([zeros, -z, y], dim=-1),
            torch.stack([z, zeros, -x], dim=-1),
            torch.stack([-y, x, zeros], dim=-1),
        ],
        dim=-2,
    )  # (..., 3, 3)
    eye = torch.eye(3, dtype=aa.dtype, device=aa.device).expand(K.shape)
    return eye + sinc[..., None] * K + cosc[..., None] * (K @ K)


def matrix_to_axis_angle(R) -> torch.Tensor:
    """Inverse of Rodrigues; returns canonical axis-angle with norm in [0, pi].

    R: (..., 3, 3) -> (..., 3)
    """
    R = as_tensor(R)
    trace = R[..., 0, 0] + R[..., 1, 1] + R[..., 2, 2]
    cos = ((trace - 1.0) * 0.5).clamp(-1.0, 1.0)
    angle = torch.acos(cos)  # [0, pi]

    w = torch.stack(
        [
            R[..., 2, 1] - R[..., 1, 2],
            R[..., 0, 2] - R[..., 2, 0],
            R[..., 1, 0] - R[..., 0, 1],
        ],
        dim=-1,
    )  # 2 sin(angle) * axis

    sin = torch.sin(angle)
    generic = sin > 1e-6
    axis_generic = w / (2.0 * sin[..., None].clamp_min(1e-12))

    # Near pi the skew part vanishes; recover the axis from (R + I)/2 = vv^T
    # by normalizing its largest column (either sign is a valid axis at pi).
    B = (R + torch.eye(3, dtype=R.dtype, device=R.device)) * 0.5
    diag = torch.stack([B[..., 0, 0], B[..., 1, 1], B[..., 2, 2]], dim=-1)
    k = diag.argmax(dim=-1)  # (...)
    col = torch.gather(B, -1, k[..., None, None].expand(*B.shape[:-2], 3, 1)).squeeze(-1)
    axis_pi = col / col.norm(dim=-1, keepdim=True).clamp_min(1e-12)

    axis = torch.where(generic[..., None], axis_generic, axis_pi)
    # Small angles: w/2 is already angle*axis to first order.
    small = (~generic) & (cos > 0)
    out = torch.where(small[..., None], w * 0.5, axis * angle[..., None])
    return out


def encode_rot6d(R) -> torch.Tensor:
    """First two columns of an orthonormal rotation matrix, column-major.

    R: (..., 3, 3) -> (..., 6). Raises InvalidRotationError if the input is
    not orthonormal with det +1 (tolerance 1e-6).
    """
    R = as_tensor(R)
    _check_rotation(R, tol=1e-6)
    return torch.cat([R[..., :, 0], R[..., :, 1]], dim=-1)


def decode_rot6d(r6) -> torch.Tensor:
    """Gram-Schmidt decode of the 6D representation.

    r6: (..., 6) -> (..., 3, 3) with orthonormal columns and det +1.
    Raises InvalidRotationError on degenerate input (near-zero or
    near-parallel column vectors).
    """
    r6 = as_tensor(r6)
    if r6.shape[-1] != 6:
        raise InvalidRotationError(f"expected trailing dimension 6, got {r6.shape[-1]}")
    a1 = r6[..., 0:3]
    a2 = r6[..., 3:6]
    bad = rot6d_degenerate_mask(r6)
    if bool(bad.any()):
        raise InvalidRotationError("degenerate 6D rotation input (zero or parallel columns)")
    b1 = a1 / a1.norm(dim=-1, keepdim=True)
    a2p = a2 - (b1 * a2).sum(-1, keepdim=True) * b1
    b2 = a2p / a2p.norm(dim=-1, keepdim=True)
    b3 = torch.cross(b1, b2, dim=-1)
    return torch.stack([b1, b2, b3], dim=-1)  # columns


def rot6d_degenerate_mask(r6: torch.Tensor) -> torch.Tensor:
    """Boolean mask of batch entries decode_rot6d would reject."""
    a1 = r6[..., 0:3]
    a2 = r6[..., 3:6]
    n1 = a1.norm(dim=-1)
    n2 = a2.norm(dim=-1)
    cross = torch.cross(a1, a2, dim=-1).norm(dim=-1)
    return (n1 <= 1e-8) | (n2 <= 1e-8) | (cross <= 1e-8 * n1 * n2)


def _check_rotation(R: torch.Tensor, tol: float) -> None:
    eye = torch.eye(3, dtype=R.dtype, device=R.device)
    err = (R.transpose(-1, -2) @ R - eye).abs().max()
    det = torch.det(R)
    if float(err) > tol or float((det - 1.0).abs().max()) > tol:
        raise InvalidRotationError(
            f"matrix is not a rotation (orthonormality error {float(err):.3e}, det error "
            f"{float((det - 1.0).abs().max()):.3e}, tolerance {tol:g})"
        )


def yaw_matrix(angle) -> torch.Tensor:
    """Rotation about the vertical (Y) axis. angle: (...,) -> (..., 3, 3)."""
    angle = as_tensor(angle)
    c, s = torch.cos(angle), torch.sin(angle)
    zeros = torch.zeros_like(c)
    ones = torch.ones_like(c)
    return torch.stack(
        [
            torch.stack([c, zeros, s], dim=-1),
            torch.stack([zeros, ones, zeros], dim=-1),
            torch.stack([-s, zeros, c], dim=-1),
        ],
        dim=-2,
    )


def rotation_about_axis(axis, angle) -> torch.Tensor:
    """Rotation of `angle` radians about a unit `axis` (3,); angle may be batched."""
    axis = as_tensor(axis)
    angle = as_tensor(angle)
    return axis_angle_to_matrix(axis * angle[..., None])


@dataclass(frozen=True)
class Transform:
    """Rigid transform: x -> rotation @ x + translation (meters)."""

    rotation: torch.Tensor  # (3, 3)
    translation: torch.Tensor  # (3,)

    def __post_init__(self):
        object.__setattr__(self, "rotation", as_tensor(self.rotation))
        object.__setattr__(self, "translation", as_tensor(self.translation))
        if self.rotation.shape != (3, 3) or self.translation.shape != (3,):
            raise InvalidRotationError(
                f"Transform expects (3,3) rotation and (3,) translation, got "
                f"{tuple(self.rotation.shape)} and {tuple(self.translation.shape)}"
            )

    @staticmethod
    def identity() -> "Transform":
        return Transform(torch.eye(3, dtype=DTYPE), torch.zeros(3, dtype=DTYPE))

    @staticmethod
    def from_axis_angle(aa, translation=None) -> "Transform":
        t = torch.zeros(3, dtype=DTYPE) if translation is None else as_tensor(translation)
        return Transform(axis_angle_to_matrix(as_tensor(aa)), t)

    def compose(self, other: "Transform") -> "Transform":
        """self after other: (self @ other)(x) = self(other(x))."""
        return Transform(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)

    def __matmul__(self, other: "Transform") -> "Transform":
        return self.compose(other)

    def inverse(self) -> "Transform":
        rt = self.rotation.transpose(0, 1)
        return Transform(rt, -(rt @ self.translation))

    def apply(self, points) -> torch.Tensor:
        """points: (..., 3) -> (..., 3)."""
        p = as_tensor(points)
        return p @ self.rotation.transpose(0, 1) + self.translation

    def as_matrix(self) -> torch.Tensor:
        """Homogeneous 4x4 matrix."""
        m = torch.eye(4, dtype=self.rotation.dtype)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    @staticmethod
    def from_matrix(m) -> "Transform":
        m = as_tensor(m)
        return Transform(m[:3, :3], m[:3, 3])
