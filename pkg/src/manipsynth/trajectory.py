"""Trajectory stages: object motion generation, end-effector BPS
generation, and recovery of 3D end-effector positions from distances."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import torch

from .bps import BasisPointSet, EndEffectorBps, features_to_ee_bps
from .denoiser import ModelBundle
from .diffusion import ddim_sample, sample_noise
from .errors import (
    ConditioningError,
    ConfigError,
    InsufficientBasisError,
    ModelStateError,
    ParseError,
)
from .models import (
    OBJECT_FEATURE_DIM,
    ee_cond,
    features_to_trajectory,
    object_cond,
    object_state_features,
)
from .objects import ObjectGeometry, ObjectState, ObjectTrajectory, object_pose_matrix
from .pose_attention import normalize_poses_to_first
from .rotations import DTYPE
from .scenario import TextCondition

RECOVERY_STEPS = 800
RECOVERY_LR = 0.05
RESIDUAL_THRESHOLD = 0.05  # m, mean per-point; above this -> low confidence
TRAJECTORY_T_INFER = 100


def _require_trained(bundle: ModelBundle, kind: str):
    if not bundle.trained:
        raise ModelStateError(f"{kind} model is untrained; run the train stage first")
    if bundle.meta.get("kind") != kind:
        raise ModelStateError(f"expected a {kind!r} model, got {bundle.meta.get('kind')!r}")


def generate_object_trajectory(
    bundle: ModelBundle,
    initial: ObjectState,
    text: TextCondition,
    geom_bps,
    frames: int,
    seed: int,
    geometry: ObjectGeometry,
    fps: float = 30.0,
    t_infer: int = TRAJECTORY_T_INFER,
) -> ObjectTrajectory:
    """DDIM-sample an object state sequence; frame 0 is inpainted to `initial`."""
    _require_trained(bundle, "object")
    if frames < 2:
        raise ConfigError(f"need at least 2 frames, got {frames}")
    cond = object_cond(text, initial, geom_bps.distances.reshape(-1))
    if cond.shape[0] != bundle.denoiser.cond_dim:
        raise ConditioningError(
            f"conditioning width {cond.shape[0]} != model expectation {bundle.denoiser.cond_dim}"
        )
    init_norm = bundle.normalize(object_state_features(initial))

    def denoise(x, t):
        return bundle.denoiser(x[None], torch.tensor([t], dtype=DTYPE), cond[None])[0]

    def inpaint(x0, _step):
        out = x0.clone()
        out[0] = init_norm
        return out

    z = sample_noise((frames, OBJECT_FEATURE_DIM), seed)
    with torch.no_grad():
        feats = bundle.denormalize(ddim_sample(denoise, bundle.schedule, z, t_infer, inpaint=inpaint))
    traj = features_to_trajectory(feats, geometry, fps)
    states = (initial,) + traj.states[1:]
    return ObjectTrajectory(states, fps)


def generate_ee_bps(
    bundle: ModelBundle,
    obj_traj: ObjectTrajectory,
    part_bps_seq,
    text: TextCondition,
    seed: int,
    scale: float,
    t_infer: int = TRAJECTORY_T_INFER,
):
    """DDIM-sample per-frame 12xK distances + contact labels.

    part_bps_seq: per-frame (N, 2K) tensor or list of PartBps; object poses
    condition attention after normalization to the first frame.
    """
    _require_trained(bundle, "ee")
    if not isinstance(part_bps_seq, torch.Tensor):
        part_bps_seq = torch.stack([p.distances.reshape(-1) for p in part_bps_seq])
    n = len(obj_traj)
    if part_bps_seq.shape[0] != n:
        raise ConditioningError(
            f"object trajectory has {n} frames but geometry conditioning has {part_bps_seq.shape[0]}"
        )
    k = bundle.meta["k"]
    cond = ee_cond(text)
    poses = normalize_poses_to_first(obj_traj.pose_matrices())

    def denoise(x, t):
        return bundle.denoiser(
            x[None], torch.tensor([t], dtype=DTYPE), cond[None], part_bps_seq[None], poses[None]
        )[0]

    z = sample_noise((n, 12 * k + 10), seed)
    with torch.no_grad():
        feats = bundle.denormalize(ddim_sample(denoise, bundle.schedule, z, t_infer))
    return features_to_ee_bps(feats, k, scale)


@dataclass(frozen=True)
class EeTrajectory:
    """Recovered end-effector positions with per-point recovery residuals."""

    positions: torch.Tensor  # (N, 12, 3) world frame, meters
    contacts: torch.Tensor  # (N, 10) bool
    residuals: torch.Tensor  # (N, 12) mean |distance error| per point
    low_confidence: torch.Tensor  # (N, 12) bool
    fps: float

    def __post_init__(self):
        if not bool(torch.isfinite(self.positions).all()) or not bool(torch.isfinite(self.residuals).all()):
            raise ParseError("end-effector trajectory contains non-finite values")
        if bool((self.residuals < 0).any()):
            raise ParseError("recovery residuals must be non-negative")

    def __len__(self):
        return self.positions.shape[0]

    def to_jsonl(self) -> str:
        lines = []
        for f in range(len(self)):
            lines.append(
                json.dumps(
                    {
                        "frame": f,
                        "fps": self.fps,
                        "positions": [float(v) for v in self.positions[f].reshape(-1)],
                        "contacts": [int(v) for v in self.contacts[f]],
                        "residuals": [float(v) for v in self.residuals[f]],
                        "low_confidence": [int(v) for v in self.low_confidence[f]],
                    }
                )
            )
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_jsonl(text: str) -> "EeTrajectory":
        pos, con, res, low = [], [], [], []
        fps = 30.0
        for ln, line in enumerate(text.splitlines()):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                fps = float(rec["fps"])
                pos.append(torch.tensor(rec["positions"], dtype=DTYPE).reshape(12, 3))
                con.append(torch.tensor(rec["contacts"], dtype=torch.bool))
                res.append(torch.tensor(rec.get("residuals", [0.0] * 12), dtype=DTYPE))
                low.append(torch.tensor(rec.get("low_confidence", [0] * 12), dtype=torch.bool))
            except (KeyError, TypeError, ValueError, json.JSONDecodeError, RuntimeError) as e:
                raise ParseError(f"invalid end-effector trajectory line {ln + 1}: {e}") from e
        if not pos:
            raise ParseError("empty end-effector trajectory file")
        return EeTrajectory(torch.stack(pos), torch.stack(con), torch.stack(res), torch.stack(low), fps)


def _check_basis_geometry(points: torch.Tensor):
    if points.shape[0] < 4:
        raise InsufficientBasisError(f"need at least 4 basis points, got {points.shape[0]}")
    centered = points - points.mean(dim=0)
    sv = torch.linalg.svdvals(centered)
    if float(sv[2]) < 1e-9:
        raise InsufficientBasisError("basis points are coplanar; positions are ambiguous")


def solve_point_from_distances(distances: torch.Tensor, anchors: torch.Tensor, steps=RECOVERY_STEPS, lr=RECOVERY_LR):
    """Batched trilateration: linear least-squares init + Adam refinement.

    distances: (P, K); anchors: (K, 3). Returns (points (P, 3), residuals (P,)),
    where the residual is the mean absolute distance mismatch of the best
    iterate (the loss actually minimized, kept per point).
    """
    _check_basis_geometry(anchors)
    d = distances.detach()
    q2 = (anchors**2).sum(dim=1)  # (K,)
    A = 2.0 * (anchors[1:] - anchors[0])  # (K-1, 3)
    b = (d[:, :1] ** 2 - d[:, 1:] ** 2) + (q2[1:] - q2[0])  # (P, K-1)
    p = torch.linalg.lstsq(A, b.T).solution.T.contiguous()  # (P, 3)

    p = p.detach().requires_grad_(True)
    opt = torch.optim.Adam([p], lr=lr)
    best_p = p.detach().clone()
    best_loss = torch.full((p.shape[0],), float("inf"), dtype=DTYPE)
    for step in range(steps + 1):
        per_point = (torch.cdist(p, anchors) - d).abs().mean(dim=1)  # (P,)
        with torch.no_grad():
            better = per_point < best_loss
            best_loss[better] = per_point.detach()[better]
            best_p[better] = p.detach()[better]
        if step == steps:
            break
        for g in opt.param_groups:
            g["lr"] = lr * 0.5 * (1.0 + math.cos(math.pi * step / steps))
        loss = per_point.sum()
        opt.zero_grad()
        loss.backward()
        opt.step()
    return best_p, best_loss


def recover_ee_positions(
    ee_frames,
    basis: BasisPointSet,
    scale: float,
    obj_traj: ObjectTrajectory = None,
    steps: int = RECOVERY_STEPS,
    lr: float = RECOVERY_LR,
    residual_threshold: float = RESIDUAL_THRESHOLD,
    fps: float = 30.0,
) -> EeTrajectory:
    """Per end-effector, per frame: argmin_p sum_j | ||p - P_j|| - d_j |.

    Solutions live in the metric object frame and are mapped to world
    coordinates with each frame's object pose when a trajectory is given.
    """
    n = len(ee_frames)
    d = torch.stack([f.distances for f in ee_frames])  # (N, 12, K)
    contacts = torch.stack([f.contacts for f in ee_frames])
    anchors = basis.points * scale

    flat, residuals = solve_point_from_distances(d.reshape(n * 12, -1), anchors, steps, lr)
    local = flat.reshape(n, 12, 3)
    residuals = residuals.reshape(n, 12)

    if obj_traj is not None:
        if len(obj_traj) != n:
            raise ConditioningError(
                f"object trajectory has {len(obj_traj)} frames, end-effector BPS has {n}"
            )
        world = torch.stack(
            [object_pose_matrix(s).apply(local[f]) for f, s in enumerate(obj_traj.states)]
        )
        fps = obj_traj.fps
    else:
        world = local
    return EeTrajectory(world, contacts, residuals, residuals > residual_threshold, fps)
