"""52-joint kinematic tree (22 body joints + 15 per hand) and poses.

Joint names follow the SMPL-X convention. Rest offsets are toolkit
constants with plausible human proportions; Y is up and the ground is
y = 0. The fingertip markers are the distal (``*3``) finger joints.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import torch

from .errors import ParseError
from .rotations import DTYPE, as_tensor

BODY_JOINTS = 22
HAND_JOINTS = 15
TOTAL_JOINTS = BODY_JOINTS + 2 * HAND_JOINTS

# Pelvis height of the rest pose that puts the foot joints at y = 0.02.
REST_ROOT_HEIGHT = 0.95

# (name, parent index, rest offset from parent in meters)
_BODY = [
    ("pelvis", -1, (0.0, 0.0, 0.0)),
    ("left_hip", 0, (0.09, -0.09, 0.0)),
    ("right_hip", 0, (-0.09, -0.09, 0.0)),
    ("spine1", 0, (0.0, 0.11, 0.0)),
    ("left_knee", 1, (0.0, -0.38, 0.0)),
    ("right_knee", 2, (0.0, -0.38, 0.0)),
    ("spine2", 3, (0.0, 0.13, 0.0)),
    ("left_ankle", 4, (0.0, -0.40, 0.0)),
    ("right_ankle", 5, (0.0, -0.40, 0.0)),
    ("spine3", 6, (0.0, 0.05, 0.0)),
    ("left_foot", 7, (0.0, -0.06, 0.12)),
    ("right_foot", 8, (0.0, -0.06, 0.12)),
    ("neck", 9, (0.0, 0.21, -0.01)),
    ("left_collar", 9, (0.07, 0.11, -0.01)),
    ("right_collar", 9, (-0.07, 0.11, -0.01)),
    ("head", 12, (0.0, 0.09, 0.01)),
    ("left_shoulder", 13, (0.09, 0.02, -0.01)),
    ("right_shoulder", 14, (-0.09, 0.02, -0.01)),
    ("left_elbow", 16, (0.26, 0.0, 0.0)),
    ("right_elbow", 17, (-0.26, 0.0, 0.0)),
    ("left_wrist", 18, (0.25, 0.0, 0.0)),
    ("right_wrist", 19, (-0.25, 0.0, 0.0)),
]

# Per-hand finger chains in SMPL-X order; offsets are for the left hand
# (fingers point along +x), the right hand mirrors x.
_FINGERS = [
    ("index", (0.088, 0.0, 0.024), (0.032, 0.0, 0.0), (0.025, 0.0, 0.0)),
    ("middle", (0.092, 0.0, 0.008), (0.035, 0.0, 0.0), (0.027, 0.0, 0.0)),
    ("pinky", (0.080, 0.0, -0.028), (0.025, 0.0, 0.0), (0.020, 0.0, 0.0)),
    ("ring", (0.088, 0.0, -0.012), (0.031, 0.0, 0.0), (0.024, 0.0, 0.0)),
    ("thumb", (0.030, -0.008, 0.030), (0.035, 0.0, 0.012), (0.030, 0.0, 0.008)),
]


def _hand_joints(side: str, wrist_index: int, start: int):
    sign = 1.0 if side == "left" else -1.0
    joints = []
    idx = start
    for finger, o1, o2, o3 in _FINGERS:
        base = idx
        for seg, off in enumerate((o1, o2, o3), start=1):
            parent = wrist_index if seg == 1 else idx - 1
            joints.append((f"{side}_{finger}{seg}", parent, (sign * off[0], off[1], off[2])))
            idx += 1
    return joints


@dataclass(frozen=True)
class Skeleton:
    """Kinematic tree with the index metadata the pipeline relies on."""

    names: tuple
    parents: tuple
    offsets: torch.Tensor  # (J, 3)

    def __post_init__(self):
        object.__setattr__(self, "offsets", as_tensor(self.offsets))
        n = len(self.names)
        if not (len(self.parents) == n and self.offsets.shape == (n, 3)):
            raise ParseError("skeleton fields have inconsistent lengths")
        if n != TOTAL_JOINTS:
            raise ParseError(f"skeleton must have {TOTAL_JOINTS} joints, got {n}")
        if self.parents[0] != -1:
            raise ParseError("joint 0 must be the root (parent -1)")
        for i, p in enumerate(self.parents[1:], start=1):
            if not 0 <= p < i:
                raise ParseError(f"joint {i} parent {p} breaks topological order")

    @property
    def num_joints(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)

    @property
    def body_indices(self):
        return tuple(range(BODY_JOINTS))

    @property
    def left_hand_indices(self):
        return tuple(range(BODY_JOINTS, BODY_JOINTS + HAND_JOINTS))

    @property
    def right_hand_indices(self):
        return tuple(range(BODY_JOINTS + HAND_JOINTS, TOTAL_JOINTS))

    @property
    def hand_indices(self):
        return self.left_hand_indices + self.right_hand_indices

    @property
    def wrist_indices(self):
        return (self.index("left_wrist"), self.index("right_wrist"))

    @property
    def fingertip_indices(self):
        """Distal finger joints, [left x5, right x5] in index/middle/pinky/ring/thumb order."""
        tips = []
        for side in ("left", "right"):
            for finger, *_ in _FINGERS:
                tips.append(self.index(f"{side}_{finger}3"))
        return tuple(tips)

    @property
    def end_effector_indices(self):
        """[left wrist, right wrist, left fingertips x5, right fingertips x5]."""
        return self.wrist_indices + self.fingertip_indices

    @property
    def foot_indices(self):
        return (self.index("left_foot"), self.index("right_foot"))

    def to_json(self) -> str:
        joints = [
            {"name": n, "parent": p, "offset": [float(v) for v in self.offsets[i]]}
            for i, (n, p) in enumerate(zip(self.names, self.parents))
        ]
        return json.dumps({"joints": joints}, indent=2)

    @staticmethod
    def from_json(text: str) -> "Skeleton":
        try:
            doc = json.loads(text)
            joints = doc["joints"]
            names = tuple(j["name"] for j in joints)
            parents = tuple(int(j["parent"]) for j in joints)
            offsets = torch.tensor([j["offset"] for j in joints], dtype=DTYPE)
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as e:
            raise ParseError(f"invalid skeleton document: {e}") from e
        return Skeleton(names, parents, offsets)


def build_skeleton() -> Skeleton:
    """The built-in 52-joint template."""
    joints = list(_BODY)
    joints += _hand_joints("left", 20, BODY_JOINTS)
    joints += _hand_joints("right", 21, BODY_JOINTS + HAND_JOINTS)
    names = tuple(j[0] for j in joints)
    parents = tuple(j[1] for j in joints)
    offsets = torch.tensor([j[2] for j in joints], dtype=DTYPE)
    return Skeleton(names, parents, offsets)


@dataclass(frozen=True)
class Pose:
    """Root translation plus one local axis-angle rotation per joint."""

    root: torch.Tensor  # (3,)
    rotations: torch.Tensor  # (J, 3) axis-angle

    def __post_init__(self):
        object.__setattr__(self, "root", as_tensor(self.root))
        object.__setattr__(self, "rotations", as_tensor(self.rotations))
        if self.root.shape != (3,) or self.rotations.dim() != 2 or self.rotations.shape[1] != 3:
            raise ParseError("Pose expects root (3,) and rotations (J, 3)")

    @staticmethod
    def rest(skeleton: Skeleton, root=None) -> "Pose":
        r = torch.zeros(3, dtype=DTYPE) if root is None else as_tensor(root)
        return Pose(r, torch.zeros(skeleton.num_joints, 3, dtype=DTYPE))
