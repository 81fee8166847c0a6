"""Basis point set encodings for object geometry and end-effector positions.

One seeded point set inside the unit ball is shared by every encoder.
Object parts are encoded as nearest-surface-point distances in the
normalized local frame; end-effector positions as plain distances to the
basis points scaled back into the metric object frame.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import torch

from .errors import InsufficientBasisError, ParseError
from .objects import ObjectGeometry, PosedObject
from .rotations import DTYPE, as_tensor

DEFAULT_K = 128
DEFAULT_SEED = 0
CONTACT_THRESHOLD = 0.005  # meters
NUM_END_EFFECTORS = 12
NUM_FINGERTIPS = 10


@dataclass(frozen=True)
class BasisPointSet:
    points: torch.Tensor  # (K, 3), inside the closed unit ball
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "points", as_tensor(self.points))
        if self.points.dim() != 2 or self.points.shape[1] != 3:
            raise ParseError("basis points must have shape (K, 3)")

    @property
    def k(self) -> int:
        return self.points.shape[0]

    def to_json(self) -> str:
        return json.dumps(
            {"seed": self.seed, "points": [[float(v) for v in p] for p in self.points]}
        )

    @staticmethod
    def from_json(text: str) -> "BasisPointSet":
        try:
            doc = json.loads(text)
            return BasisPointSet(torch.tensor(doc["points"], dtype=DTYPE), int(doc["seed"]))
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as e:
            raise ParseError(f"invalid basis point set document: {e}") from e


def sample_basis_points(k: int, seed: int = DEFAULT_SEED) -> BasisPointSet:
    """K points uniform in the unit ball, bit-identical per (k, seed)."""
    if k < 4:
        raise InsufficientBasisError(f"need at least 4 basis points, got {k}")
    rng = np.random.default_rng(seed)
    d = rng.standard_normal((k, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = rng.random(k) ** (1.0 / 3.0)
    return BasisPointSet(torch.from_numpy(d * r[:, None]).to(DTYPE), seed)


@dataclass(frozen=True)
class PartBps:
    """Distances (K, 2) from basis points to each part, normalized object units."""

    distances: torch.Tensor  # (K, 2)
    scale: float  # meters per normalized unit

    def __post_init__(self):
        object.__setattr__(self, "distances", as_tensor(self.distances))
        if self.distances.dim() != 2 or self.distances.shape[1] != 2:
            raise ParseError("part BPS must have shape (K, 2)")


def encode_object_bps(geometry: ObjectGeometry, articulation: float, basis: BasisPointSet) -> PartBps:
    """Nearest-surface-point distances per part at one articulation angle.

    Surface samples are posed in the object local frame and divided by the
    geometry's normalization scale so both parts live in the unit ball.
    """
    scale = geometry.normalization_scale
    parts = geometry.part_samples_local(articulation)
    cols = []
    for pts in parts:
        d = torch.cdist(basis.points, pts / scale)  # (K, S)
        cols.append(d.min(dim=1).values)
    return PartBps(torch.stack(cols, dim=1), scale)


@dataclass(frozen=True)
class EndEffectorBps:
    """One frame of end-effector distances plus fingertip contact labels.

    Distances are in meters in the object frame, basis points scaled by
    the object's normalization factor. Order: [left wrist, right wrist,
    left fingertips x5, right fingertips x5].
    """

    distances: torch.Tensor  # (12, K)
    contacts: torch.Tensor  # (10,) bool
    scale: float

    def __post_init__(self):
        object.__setattr__(self, "distances", as_tensor(self.distances))
        object.__setattr__(self, "contacts", torch.as_tensor(self.contacts, dtype=torch.bool))
        if self.distances.shape[0] != NUM_END_EFFECTORS or self.contacts.shape != (NUM_FINGERTIPS,):
            raise ParseError("end-effector BPS expects (12, K) distances and (10,) contacts")


def encode_ee_bps(ee_positions, contacts, basis: BasisPointSet, scale: float) -> EndEffectorBps:
    """Distances from 12 object-frame end-effector positions to the scaled basis points."""
    if scale <= 0:
        raise ParseError(f"scale must be positive, got {scale}")
    p = as_tensor(ee_positions)
    if p.shape != (NUM_END_EFFECTORS, 3):
        raise ParseError(f"expected (12, 3) end-effector positions, got {tuple(p.shape)}")
    d = torch.cdist(p, basis.points * scale)  # (12, K)
    return EndEffectorBps(d, torch.as_tensor(contacts, dtype=torch.bool), scale)


def contact_labels(ee_positions, posed: PosedObject, threshold: float = CONTACT_THRESHOLD) -> torch.Tensor:
    """Fingertip-on-surface flags: |sdf| <= threshold for the 10 fingertips."""
    p = as_tensor(ee_positions)
    tips = p[2:NUM_END_EFFECTORS]
    return posed.signed_distance(tips).abs() <= threshold


def ee_bps_to_features(frames) -> torch.Tensor:
    """Stack a sequence of EndEffectorBps into (N, 12*K + 10) model features."""
    rows = []
    for f in frames:
        rows.append(torch.cat([f.distances.reshape(-1), f.contacts.to(DTYPE)]))
    return torch.stack(rows)


def features_to_ee_bps(features: torch.Tensor, k: int, scale: float):
    """Inverse of ee_bps_to_features; contact logits thresholded at 0.5."""
    if features.shape[1] != NUM_END_EFFECTORS * k + NUM_FINGERTIPS:
        raise ParseError(
            f"feature width {features.shape[1]} does not match 12*{k}+10"
        )
    out = []
    for row in features:
        d = row[: NUM_END_EFFECTORS * k].reshape(NUM_END_EFFECTORS, k).clamp_min(0.0)
        c = row[NUM_END_EFFECTORS * k :] > 0.5
        out.append(EndEffectorBps(d, c, scale))
    return out


def ee_bps_to_jsonl(frames) -> str:
    lines = []
    for i, f in enumerate(frames):
        lines.append(
            json.dumps(
                {
                    "frame": i,
                    "scale": f.scale,
                    "distances": [float(v) for v in f.distances.reshape(-1)],
                    "contacts": [int(v) for v in f.contacts],
                }
            )
        )
    return "\n".join(lines) + "\n"


def ee_bps_from_jsonl(text: str, k: int):
    frames = []
    for ln, line in enumerate(text.splitlines()):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            d = torch.tensor(rec["distances"], dtype=DTYPE).reshape(NUM_END_EFFECTORS, k)
            c = torch.tensor(rec["contacts"], dtype=torch.bool)
            frames.append(EndEffectorBps(d, c, float(rec["scale"])))
        except (KeyError, TypeError, ValueError, json.JSONDecodeError, RuntimeError) as e:
            raise ParseError(f"invalid end-effector BPS line {ln + 1}: {e}") from e
    if not frames:
        raise ParseError("empty end-effector BPS file")
    return frames
