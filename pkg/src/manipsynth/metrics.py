"""Physical-plausibility metrics: foot skating and hand-object
interpenetration statistics (point count, max depth, contact ratio)."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
import torch

from .errors import ParseError, TooShortError
from .objects import ObjectGeometry, SdfSequence
from .rotations import DTYPE
from .skeleton import Skeleton

FOOT_SKATE_HEIGHT = 0.025  # m
CONTACT_BAND = 0.005  # m
HAND_CAPSULE_RADIUS = 0.01  # m
POINTS_PER_SEGMENT = 8
HAND_SAMPLE_SEED = 7


@dataclass(frozen=True)
class MetricsReport:
    foot_skating: float  # m/frame, mean while grounded
    iv: float  # mean per-frame count of penetrating hand points
    id: float  # max penetration depth, mm
    cr: float  # fraction of hand points within the contact band

    def __post_init__(self):
        vals = (self.foot_skating, self.iv, self.id, self.cr)
        if not all(math.isfinite(v) for v in vals):
            raise ParseError("metrics must be finite")
        if not 0.0 <= self.cr <= 1.0:
            raise ParseError(f"contact ratio must be in [0, 1], got {self.cr}")
        if self.id < 0 or self.iv < 0:
            raise ParseError("penetration statistics must be non-negative")

    def to_json(self) -> str:
        return json.dumps(
            {"foot_skating": self.foot_skating, "iv": self.iv, "id": self.id, "cr": self.cr},
            indent=2,
        )

    @staticmethod
    def from_json(text: str) -> "MetricsReport":
        try:
            doc = json.loads(text)
            return MetricsReport(
                float(doc["foot_skating"]), float(doc["iv"]), float(doc["id"]), float(doc["cr"])
            )
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as e:
            raise ParseError(f"invalid metrics document: {e}") from e


def foot_skating(joint_positions: torch.Tensor, skeleton: Skeleton) -> float:
    """Mean horizontal foot displacement per frame while the foot is below
    the grounding height, averaged over both feet.

    joint_positions: (N, J, 3).
    """
    if joint_positions.shape[0] < 2:
        raise TooShortError("foot skating needs at least 2 frames")
    feet = joint_positions[:, torch.tensor(skeleton.foot_indices)]  # (N, 2, 3)
    grounded = feet[1:, :, 1] < FOOT_SKATE_HEIGHT  # (N-1, 2), gate on the current frame
    disp = feet[1:] - feet[:-1]
    horiz = torch.hypot(disp[..., 0], disp[..., 2])  # (N-1, 2)
    per_foot = []
    for i in range(2):
        g = grounded[:, i]
        per_foot.append(float(horiz[g, i].mean()) if bool(g.any()) else 0.0)
    return float(np.mean(per_foot))


def hand_surface_offsets(skeleton: Skeleton):
    """Deterministic sample points on per-finger-segment capsules.

    Each hand contributes 15 segments (wrist->proximal and the two joints
    within each finger); 8 points per segment on a 1 cm capsule surface.
    Returns (segments, offsets): parent/child joint index pairs and, per
    segment, (POINTS_PER_SEGMENT, 4) rows [t, nx, ny, nz] meaning
    point = lerp(parent, child, t) + radius * unit(n x segment direction).
    """
    rng = np.random.default_rng(HAND_SAMPLE_SEED)
    segments = []
    for side in ("left", "right"):
        wrist = skeleton.index(f"{side}_wrist")
        for finger in ("index", "middle", "pinky", "ring", "thumb"):
            j1 = skeleton.index(f"{side}_{finger}1")
            segments.append((wrist, j1))
            segments.append((j1, j1 + 1))
            segments.append((j1 + 1, j1 + 2))
    params = torch.from_numpy(rng.random((len(segments), POINTS_PER_SEGMENT))).to(DTYPE)
    normals = torch.from_numpy(rng.standard_normal((len(segments), POINTS_PER_SEGMENT, 3))).to(DTYPE)
    return segments, params, normals


def hand_surface_points(joint_positions: torch.Tensor, skeleton: Skeleton) -> torch.Tensor:
    """(N, S*8, 3) capsule-surface points following the hand joints."""
    segments, params, normals = hand_surface_offsets(skeleton)
    pts = []
    for s, (a, b) in enumerate(segments):
        pa = joint_positions[:, a]  # (N, 3)
        pb = joint_positions[:, b]
        axis = pb - pa
        axis = axis / axis.norm(dim=-1, keepdim=True).clamp_min(1e-9)
        along = pa[:, None] + params[s][None, :, None] * (pb - pa)[:, None]  # (N, 8, 3)
        n = normals[s][None].expand(joint_positions.shape[0], -1, -1)
        radial = torch.cross(n, axis[:, None].expand_as(n), dim=-1)
        radial = radial / radial.norm(dim=-1, keepdim=True).clamp_min(1e-9)
        pts.append(along + HAND_CAPSULE_RADIUS * radial)
    return torch.cat(pts, dim=1)


def hand_penetration(joint_positions: torch.Tensor, skeleton: Skeleton, geometry: ObjectGeometry, states):
    """(iv, id, cr) of the hand sample points against the posed object."""
    points = hand_surface_points(joint_positions, skeleton)  # (N, M, 3)
    sdf = SdfSequence(geometry, states)
    d = sdf(points)  # (N, M)
    iv = float((d < 0).to(DTYPE).sum(dim=1).mean())
    id_mm = float((-d).clamp_min(0.0).max() * 1000.0)
    cr = float((d.abs() <= CONTACT_BAND).to(DTYPE).mean())
    return iv, id_mm, cr


def evaluate_motion(joint_positions: torch.Tensor, skeleton: Skeleton, geometry: ObjectGeometry, states) -> MetricsReport:
    iv, id_mm, cr = hand_penetration(joint_positions, skeleton, geometry, states)
    return MetricsReport(foot_skating(joint_positions, skeleton), iv, id_mm, cr)


def metrics_csv(rows) -> str:
    """rows: iterable of (scenario, seed, MetricsReport)."""
    lines = ["scenario,seed,foot_skating,iv,id,cr"]
    for scenario, seed, m in rows:
        lines.append(f"{scenario},{seed},{m.foot_skating!r},{m.iv!r},{m.id!r},{m.cr!r}")
    return "\n".join(lines) + "\n"
