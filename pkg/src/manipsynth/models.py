"""Construction and conditioning of the five diffusion models.

Two trajectory-stage models (object motion, end-effector BPS) and three
motion models (body, left hand, right hand). Conditioning vectors are
assembled here so training and generation stay in lockstep:

  object: [action/object one-hots | initial state features | rest part BPS]
  ee:     [action/object one-hots], per-frame part BPS, pose attention
  body:   [action/object one-hots | first-frame body features]
  hands:  [action/object one-hots | first-frame hand features]
"""

from __future__ import annotations

import torch

from .bps import BasisPointSet, ee_bps_to_features, encode_ee_bps, encode_object_bps
from .denoiser import DenoiserConfig, ModelBundle, build_denoiser
from .diffusion import NoiseSchedule
from .errors import ConfigError
from .motion import BODY_DIM, HAND_DIM
from .objects import ObjectGeometry, ObjectState, ObjectTrajectory, object_pose_matrix
from .pose_attention import normalize_poses_to_first
from .rotations import DTYPE, decode_rot6d, encode_rot6d, axis_angle_to_matrix, matrix_to_axis_angle
from .scenario import COND_VOCAB_DIM, Scenario, TextCondition

OBJECT_FEATURE_DIM = 10  # translation (3) + rotation 6D (6) + articulation (1)
MODEL_KINDS = ("object", "ee", "body", "left_hand", "right_hand")


def object_state_features(state: ObjectState) -> torch.Tensor:
    r6 = encode_rot6d(axis_angle_to_matrix(state.rotation))
    return torch.cat([state.translation, r6, torch.tensor([state.articulation], dtype=DTYPE)])


def features_to_object_state(feat: torch.Tensor, geometry: ObjectGeometry) -> ObjectState:
    aa = matrix_to_axis_angle(decode_rot6d(feat[3:9]))
    return ObjectState(feat[0:3], aa, geometry.clamp_articulation(float(feat[9])))


def trajectory_to_features(traj: ObjectTrajectory) -> torch.Tensor:
    return torch.stack([object_state_features(s) for s in traj.states])


def features_to_trajectory(feats: torch.Tensor, geometry: ObjectGeometry, fps: float) -> ObjectTrajectory:
    states = [features_to_object_state(feats[i], geometry) for i in range(feats.shape[0])]
    return ObjectTrajectory(tuple(states), fps)


class _PartBpsCache:
    """encode_object_bps keyed by articulation angle; geometry is static per run."""

    def __init__(self, geometry: ObjectGeometry, basis: BasisPointSet):
        self.geometry = geometry
        self.basis = basis
        self._cache = {}

    def flat(self, articulation: float) -> torch.Tensor:
        key = round(float(articulation), 9)
        if key not in self._cache:
            self._cache[key] = encode_object_bps(self.geometry, key, self.basis).distances.reshape(-1)
        return self._cache[key]


def part_bps_frame_cond(geometry: ObjectGeometry, traj: ObjectTrajectory, basis: BasisPointSet) -> torch.Tensor:
    """(N, 2K) articulation-dependent geometry conditioning."""
    cache = _PartBpsCache(geometry, basis)
    return torch.stack([cache.flat(s.articulation) for s in traj.states])


def object_cond(text: TextCondition, initial: ObjectState, rest_bps_flat: torch.Tensor) -> torch.Tensor:
    return torch.cat([text.one_hot(), object_state_features(initial), rest_bps_flat])


def ee_cond(text: TextCondition) -> torch.Tensor:
    return text.one_hot()


def motion_cond(text: TextCondition, first_frame: torch.Tensor) -> torch.Tensor:
    return torch.cat([text.one_hot(), first_frame])


def build_model(kind: str, k: int, schedule: NoiseSchedule, config: DenoiserConfig = None, seed: int = 0) -> ModelBundle:
    if kind not in MODEL_KINDS:
        raise ConfigError(f"unknown model kind {kind!r}")
    cfg = config or DenoiserConfig()
    if kind == "object":
        net = build_denoiser(
            OBJECT_FEATURE_DIM, COND_VOCAB_DIM + OBJECT_FEATURE_DIM + 2 * k, config=cfg, seed=seed
        )
    elif kind == "ee":
        net = build_denoiser(
            12 * k + 10, COND_VOCAB_DIM, frame_cond_dim=2 * k, use_pose_attention=True, config=cfg, seed=seed
        )
    elif kind == "body":
        net = build_denoiser(BODY_DIM, COND_VOCAB_DIM + BODY_DIM, config=cfg, seed=seed)
    else:
        net = build_denoiser(HAND_DIM, COND_VOCAB_DIM + HAND_DIM, config=cfg, seed=seed)
    return ModelBundle(net, schedule, meta={"kind": kind, "k": k}, seed=seed)


def ee_world_to_object_frame(ee_world: torch.Tensor, traj: ObjectTrajectory) -> torch.Tensor:
    """(N, 12, 3) world -> object (base part) frame per frame."""
    out = []
    for f, state in enumerate(traj.states):
        inv = object_pose_matrix(state).inverse()
        out.append(inv.apply(ee_world[f]))
    return torch.stack(out)


def encode_sample_ee_bps(sample, basis: BasisPointSet, geometry: ObjectGeometry):
    """Per-frame end-effector BPS records for one training sample."""
    scale = geometry.normalization_scale
    local = ee_world_to_object_frame(sample.ee_world, sample.object_trajectory)
    return [
        encode_ee_bps(local[f], sample.contacts[f], basis, scale)
        for f in range(local.shape[0])
    ]


def build_object_training(samples, scenario: Scenario, basis: BasisPointSet):
    cache = _PartBpsCache(scenario.geometry, basis)
    x = torch.stack([trajectory_to_features(s.object_trajectory) for s in samples])
    cond = torch.stack(
        [
            object_cond(
                scenario.text,
                s.object_trajectory.states[0],
                cache.flat(s.object_trajectory.states[0].articulation),
            )
            for s in samples
        ]
    )
    return x, cond


def build_ee_training(samples, scenario: Scenario, basis: BasisPointSet):
    x = torch.stack(
        [ee_bps_to_features(encode_sample_ee_bps(s, basis, scenario.geometry)) for s in samples]
    )
    cond = torch.stack([ee_cond(scenario.text) for _ in samples])
    frame_cond = torch.stack(
        [part_bps_frame_cond(scenario.geometry, s.object_trajectory, basis) for s in samples]
    )
    poses = torch.stack(
        [normalize_poses_to_first(s.object_trajectory.pose_matrices()) for s in samples]
    )
    return x, cond, frame_cond, poses


def build_motion_training(samples, scenario: Scenario, part: str):
    attr = {"body": "body", "left_hand": "left_hand", "right_hand": "right_hand"}[part]
    x = torch.stack([getattr(s.motion, attr) for s in samples])
    cond = torch.stack([motion_cond(scenario.text, getattr(s.motion, attr)[0]) for s in samples])
    return x, cond
