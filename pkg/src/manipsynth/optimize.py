"""Coordinated noise-space optimization of the three motion models.

The three latent noise tensors are optimized jointly: every step samples
all three models through the differentiable DDIM solver, decodes the
motion features, runs forward kinematics, and backpropagates the staged
tracking / penetration / regularization loss into all three tensors.
Gradients from hand objectives reach the body noise through the chain.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import torch

from .denoiser import ModelBundle
from .diffusion import ddim_sample, derive_seed, sample_noise
from .errors import ConfigError, NumericError, ParseError
from .models import (
    OBJECT_FEATURE_DIM,
    motion_cond,
    object_cond,
    object_state_features,
    features_to_trajectory,
)
from .motion import BODY_DIM, HAND_DIM, MotionSequence, motion_joint_positions
from .objects import ObjectGeometry, ObjectState, ObjectTrajectory, SdfSequence
from .rotations import DTYPE, as_tensor
from .scenario import TextCondition
from .skeleton import Skeleton
from .trajectory import EeTrajectory

FOOT_CONTACT_HEIGHT = 0.02  # m
FINGER_CLEARANCE = 0.01  # m, assumed finger thickness
DEFAULT_STAGE_BOUNDARIES = (300, 500)
DEFAULT_STAGE_WEIGHTS = ((1.0, 0.0, 0.0), (1.0, 0.0, 0.0), (1.0, 5.0, 1.0))
DEFAULT_CONTACT_MARGIN = 5  # frames


@dataclass(frozen=True)
class OptimizationConfig:
    steps: int = 800
    lr: float = 0.05
    t_infer: int = 10
    stage_boundaries: tuple = DEFAULT_STAGE_BOUNDARIES
    stage_weights: tuple = DEFAULT_STAGE_WEIGHTS
    contact_margin: int = DEFAULT_CONTACT_MARGIN
    seed: int = 0

    def __post_init__(self):
        b = self.stage_boundaries
        if not (len(b) == 2 and 0 < b[0] < b[1] <= self.steps):
            raise ConfigError(f"stage boundaries {b} must be increasing and <= steps {self.steps}")
        if len(self.stage_weights) != 3 or any(len(w) != 3 for w in self.stage_weights):
            raise ConfigError("stage_weights must be three (ee, pen, reg) triples")
        if any(w < 0 for triple in self.stage_weights for w in triple):
            raise ConfigError("loss weights must be non-negative")

    def stage_of(self, step: int) -> int:
        if step < self.stage_boundaries[0]:
            return 0
        if step < self.stage_boundaries[1]:
            return 1
        return 2

    def lr_at(self, step: int) -> float:
        return self.lr * 0.5 * (1.0 + math.cos(math.pi * step / self.steps))

    def to_json(self) -> str:
        return json.dumps(
            {
                "steps": self.steps,
                "lr": self.lr,
                "t_infer": self.t_infer,
                "stage_boundaries": list(self.stage_boundaries),
                "stage_weights": [list(w) for w in self.stage_weights],
                "contact_margin": self.contact_margin,
                "seed": self.seed,
            },
            indent=2,
        )

    @staticmethod
    def from_json(text: str) -> "OptimizationConfig":
        try:
            doc = json.loads(text)
            return OptimizationConfig(
                steps=int(doc.get("steps", 800)),
                lr=float(doc.get("lr", 0.05)),
                t_infer=int(doc.get("t_infer", 10)),
                stage_boundaries=tuple(doc.get("stage_boundaries", DEFAULT_STAGE_BOUNDARIES)),
                stage_weights=tuple(tuple(w) for w in doc.get("stage_weights", DEFAULT_STAGE_WEIGHTS)),
                contact_margin=int(doc.get("contact_margin", DEFAULT_CONTACT_MARGIN)),
                seed=int(doc.get("seed", 0)),
            )
        except ConfigError:
            raise
        except (TypeError, ValueError, json.JSONDecodeError) as e:
            raise ParseError(f"invalid optimization config: {e}") from e


@dataclass(frozen=True)
class TargetSet:
    """Optimization targets; all positions in world meters."""

    wrist_targets: torch.Tensor  # (F, 2, 3)
    fingertip_targets: torch.Tensor  # (F, 10, 3)
    rel_fingertip_targets: torch.Tensor  # (F, 10, 3) fingertip minus same-hand wrist
    contact_gates: torch.Tensor  # (F, 10) bool
    root_targets: torch.Tensor = None  # (F, 2) planar, optional

    def __post_init__(self):
        f = self.wrist_targets.shape[0]
        if self.fingertip_targets.shape != (f, 10, 3) or self.rel_fingertip_targets.shape != (f, 10, 3):
            raise ConfigError("target frame counts are inconsistent")
        if self.contact_gates.shape != (f, 10):
            raise ConfigError("contact gates must be (F, 10)")
        for t in (self.wrist_targets, self.fingertip_targets, self.rel_fingertip_targets):
            if not bool(torch.isfinite(t).all()):
                raise ConfigError("targets must be finite")
        if self.root_targets is not None and self.root_targets.shape != (f, 2):
            raise ConfigError(f"root targets must be ({f}, 2)")

    @property
    def frames(self) -> int:
        return self.wrist_targets.shape[0]


def dilate_gates(gates: torch.Tensor, margin: int) -> torch.Tensor:
    """Widen each contact run by `margin` frames on both sides."""
    out = gates.clone()
    for shift in range(1, margin + 1):
        out[shift:] |= gates[:-shift]
        out[:-shift] |= gates[shift:]
    return out


def targets_from_ee_trajectory(ee: EeTrajectory, contact_margin: int = DEFAULT_CONTACT_MARGIN) -> TargetSet:
    wrists = ee.positions[:, :2]
    tips = ee.positions[:, 2:]
    rel = tips.clone()
    rel[:, :5] -= wrists[:, 0:1]
    rel[:, 5:] -= wrists[:, 1:2]
    return TargetSet(wrists, tips, rel, dilate_gates(ee.contacts.clone(), contact_margin))


def add_root_targets(targets: TargetSet, planar_path) -> TargetSet:
    """Augment the tracking loss with an L1 planar root-position term."""
    path = as_tensor(planar_path)
    if path.shape != (targets.frames, 2):
        raise ConfigError(f"root path must be ({targets.frames}, 2), got {tuple(path.shape)}")
    return TargetSet(
        targets.wrist_targets,
        targets.fingertip_targets,
        targets.rel_fingertip_targets,
        targets.contact_gates,
        path,
    )


def loss_ee(joints: torch.Tensor, targets: TargetSet, skeleton: Skeleton, include_fingertips: bool = True):
    """Contact-gated L1 tracking of wrists, fingertips, and wrist-relative
    fingertip offsets; every term is averaged over frames."""
    f = joints.shape[0]
    wrist_idx = torch.tensor(skeleton.wrist_indices)
    wrists = joints[:, wrist_idx]  # (F, 2, 3)
    total = (wrists - targets.wrist_targets).abs().sum() / f
    if include_fingertips:
        tip_idx = torch.tensor(skeleton.fingertip_indices)
        tips = joints[:, tip_idx]  # (F, 10, 3)
        gates = targets.contact_gates.to(joints.dtype)[..., None]
        total = total + ((tips - targets.fingertip_targets).abs() * gates).sum() / f
        rel = torch.cat([tips[:, :5] - wrists[:, 0:1], tips[:, 5:] - wrists[:, 1:2]], dim=1)
        total = total + ((rel - targets.rel_fingertip_targets).abs() * gates).sum() / f
    if targets.root_targets is not None:
        root_xz = joints[:, 0][:, [0, 2]]
        total = total + (root_xz - targets.root_targets).abs().sum() / f
    return total


def loss_pen(joints: torch.Tensor, sdf: SdfSequence, skeleton: Skeleton):
    """Penalize hand joints closer than the finger clearance to the object:
    sum_j |min(SDF(J_j) - 0.01, 0)|, averaged over frames."""
    hand_idx = torch.tensor(skeleton.hand_indices)
    d = sdf(joints[:, hand_idx])  # (F, 30)
    return (d - FINGER_CLEARANCE).clamp_max(0.0).abs().sum() / joints.shape[0]


def loss_reg(joints: torch.Tensor, skeleton: Skeleton):
    """Lowest-joint height pinned near the contact height, plus L1 foot
    velocities on frames where that foot is in ground contact."""
    f = joints.shape[0]
    min_y = joints[..., 1].min(dim=1).values  # (F,)
    term = (min_y - FOOT_CONTACT_HEIGHT).abs().mean()
    foot_idx = torch.tensor(skeleton.foot_indices)
    feet = joints[:, foot_idx]  # (F, 2, 3)
    grounded = (feet[..., 1] < FOOT_CONTACT_HEIGHT).detach()  # (F, 2)
    if f >= 2:
        disp = (feet[1:] - feet[:-1]).abs().sum(dim=-1)  # (F-1, 2)
        slide = (disp * grounded[1:].to(joints.dtype)).sum(dim=0)  # per foot
        term = term + slide.mean()
    return term


@dataclass(frozen=True)
class NoiseBundle:
    """The three optimization variables."""

    z_body: torch.Tensor  # (F, 136)
    z_left: torch.Tensor  # (F, 90)
    z_right: torch.Tensor  # (F, 90)

    def __post_init__(self):
        f = self.z_body.shape[0]
        if self.z_body.shape != (f, BODY_DIM) or self.z_left.shape != (f, HAND_DIM) or self.z_right.shape != (f, HAND_DIM):
            raise ConfigError("noise tensors must share a frame count with widths 136/90/90")


@dataclass(frozen=True)
class MotionContext:
    """Everything needed to turn sampled features into world-frame joints."""

    skeleton: Skeleton
    text: TextCondition
    init_body: torch.Tensor  # (136,) first-frame body features
    init_left: torch.Tensor  # (90,)
    init_right: torch.Tensor  # (90,)
    init_facing: float
    init_xz: torch.Tensor  # (2,)
    fps: float


@dataclass
class LossRecord:
    step: int
    stage: int
    lr: float
    l_ee: float
    l_pen: float
    l_reg: float
    total: float


def _motion_sampler(bundle: ModelBundle, cond: torch.Tensor, t_infer: int):
    if cond.shape[0] != bundle.denoiser.cond_dim:
        raise ConfigError(
            f"conditioning width {cond.shape[0]} != model expectation {bundle.denoiser.cond_dim}"
        )

    def denoise(x, t):
        return bundle.denoiser(x[None], torch.tensor([t], dtype=DTYPE), cond[None])[0]

    def sample(z):
        return bundle.denormalize(ddim_sample(denoise, bundle.schedule, z, t_infer))

    return sample


def sample_wholebody(bundles: dict, noise: NoiseBundle, ctx: MotionContext, t_infer: int) -> MotionSequence:
    """Forward the three noise tensors through their models into one sequence."""
    sample_b = _motion_sampler(bundles["body"], motion_cond(ctx.text, ctx.init_body), t_infer)
    sample_l = _motion_sampler(bundles["left_hand"], motion_cond(ctx.text, ctx.init_left), t_infer)
    sample_r = _motion_sampler(bundles["right_hand"], motion_cond(ctx.text, ctx.init_right), t_infer)
    return MotionSequence(
        sample_b(noise.z_body),
        sample_l(noise.z_left),
        sample_r(noise.z_right),
        ctx.fps,
        ctx.init_facing,
        ctx.init_xz,
    )


def optimize_wholebody(
    bundles: dict,
    targets: TargetSet,
    geometry: ObjectGeometry,
    obj_traj: ObjectTrajectory,
    config: OptimizationConfig,
    ctx: MotionContext,
):
    """Adam over (z_body, z_left, z_right) with the staged loss schedule.

    Returns (optimized NoiseBundle, final MotionSequence, loss history).
    """
    frames = targets.frames
    if len(obj_traj) != frames:
        raise ConfigError(f"object trajectory has {len(obj_traj)} frames, targets have {frames}")
    for kind in ("body", "left_hand", "right_hand"):
        if kind not in bundles or not bundles[kind].trained:
            raise ConfigError(f"{kind} model missing or untrained")

    sdf = SdfSequence(geometry, obj_traj.states)
    z_b = sample_noise((frames, BODY_DIM), derive_seed(config.seed, "z_body")).requires_grad_(True)
    z_l = sample_noise((frames, HAND_DIM), derive_seed(config.seed, "z_left")).requires_grad_(True)
    z_r = sample_noise((frames, HAND_DIM), derive_seed(config.seed, "z_right")).requires_grad_(True)
    opt = torch.optim.Adam([z_b, z_l, z_r], lr=config.lr)

    history = []
    for step in range(config.steps):
        stage = config.stage_of(step)
        lam_ee, lam_pen, lam_reg = config.stage_weights[stage]
        lr = config.lr_at(step)
        for g in opt.param_groups:
            g["lr"] = lr

        seq = sample_wholebody(bundles, NoiseBundle(z_b, z_l, z_r), ctx, config.t_infer)
        joints = motion_joint_positions(seq, ctx.skeleton)
        l_ee = loss_ee(joints, targets, ctx.skeleton, include_fingertips=stage >= 1)
        l_pen = loss_pen(joints, sdf, ctx.skeleton)
        l_reg = loss_reg(joints, ctx.skeleton)
        total = lam_ee * l_ee + lam_pen * l_pen + lam_reg * l_reg
        if not bool(torch.isfinite(total)):
            raise NumericError("non-finite optimization loss", step=step)
        history.append(
            LossRecord(
                step, stage, lr,
                float(l_ee.detach()), float(l_pen.detach()), float(l_reg.detach()), float(total.detach()),
            )
        )
        opt.zero_grad()
        total.backward()
        opt.step()

    result = NoiseBundle(z_b.detach(), z_l.detach(), z_r.detach())
    with torch.no_grad():
        final = sample_wholebody(bundles, result, ctx, config.t_infer)
    return result, final, history


def optimize_object_keyframes(
    bundle: ModelBundle,
    initial: ObjectState,
    text: TextCondition,
    keyframes,
    config: OptimizationConfig,
    geometry: ObjectGeometry,
    geom_bps,
    frames: int,
    seed: int,
    fps: float = 30.0,
) -> ObjectTrajectory:
    """Noise optimization of the object model toward keyframe states.

    keyframes: iterable of (frame index, ObjectState). With no keyframes
    this reduces to plain generation with the same seed.
    """
    pairs = list(keyframes.items()) if isinstance(keyframes, dict) else list(keyframes)
    seen = set()
    for f, _ in pairs:
        if not 0 <= f < frames:
            raise ConfigError(f"keyframe index {f} outside [0, {frames})")
        if f in seen:
            raise ConfigError(f"duplicate keyframe at frame {f}")
        seen.add(f)

    from .trajectory import generate_object_trajectory  # local import avoids a cycle

    if not pairs:
        return generate_object_trajectory(
            bundle, initial, text, geom_bps, frames, seed, geometry, fps, t_infer=config.t_infer
        )

    cond = object_cond(text, initial, geom_bps.distances.reshape(-1))
    init_norm = bundle.normalize(object_state_features(initial))

    def denoise(x, t):
        return bundle.denoiser(x[None], torch.tensor([t], dtype=DTYPE), cond[None])[0]

    def inpaint(x0, _step):
        out = x0.clone()
        out[0] = init_norm
        return out

    key_idx = torch.tensor([f for f, _ in pairs], dtype=torch.long)
    key_feats = torch.stack([object_state_features(s) for _, s in pairs])

    z = sample_noise((frames, OBJECT_FEATURE_DIM), seed).requires_grad_(True)
    opt = torch.optim.Adam([z], lr=config.lr)
    for step in range(config.steps):
        for g in opt.param_groups:
            g["lr"] = config.lr_at(step)
        feats = bundle.denormalize(ddim_sample(denoise, bundle.schedule, z, config.t_infer, inpaint=inpaint))
        loss = (feats[key_idx] - key_feats).abs().mean()
        if not bool(torch.isfinite(loss)):
            raise NumericError("non-finite keyframe loss", step=step)
        opt.zero_grad()
        loss.backward()
        opt.step()

    with torch.no_grad():
        feats = bundle.denormalize(ddim_sample(denoise, bundle.schedule, z.detach(), config.t_infer, inpaint=inpaint))
    traj = features_to_trajectory(feats, geometry, fps)
    return ObjectTrajectory((initial,) + traj.states[1:], fps)


def history_to_csv(history) -> str:
    lines = ["step,stage,lr,l_ee,l_pen,l_reg,total"]
    for h in history:
        lines.append(
            f"{h.step},{h.stage},{h.lr!r},{h.l_ee!r},{h.l_pen!r},{h.l_reg!r},{h.total!r}"
        )
    return "\n".join(lines) + "\n"
