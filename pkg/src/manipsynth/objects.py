"""Two-part articulated objects built from analytic primitives.

Each part is a union of boxes, spheres, and capsules with exact signed
distance functions, joined by a single revolute joint. Surface sample
points (fixed seed, stratified by area) stand in for mesh vertices in
encoding and metric computations.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import torch

from .errors import LimitViolationError, ParseError
from .rotations import (
    DTYPE,
    Transform,
    as_tensor,
    axis_angle_to_matrix,
    matrix_to_axis_angle,
    rotation_about_axis,
)

SURFACE_SAMPLES_PER_PART = 512
SURFACE_SAMPLE_SEED = 0
_SCALE_SWEEP = 33  # articulation sweep resolution for the normalization scale


def _unit_vectors(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.standard_normal((n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


@dataclass(frozen=True)
class Box:
    half_extents: tuple  # (hx, hy, hz) meters
    local: Transform = field(default_factory=Transform.identity)

    def __post_init__(self):
        if len(self.half_extents) != 3 or min(self.half_extents) <= 0:
            raise ParseError(f"box half extents must be 3 positive values, got {self.half_extents}")

    def sdf_local(self, p: torch.Tensor) -> torch.Tensor:
        h = torch.tensor(self.half_extents, dtype=p.dtype)
        q = p.abs() - h
        outside = q.clamp_min(0.0).norm(dim=-1)
        inside = q.max(dim=-1).values.clamp_max(0.0)
        return outside + inside

    def area(self) -> float:
        hx, hy, hz = self.half_extents
        return 8.0 * (hx * hy + hy * hz + hz * hx)

    def sample_surface(self, n: int, rng: np.random.Generator) -> np.ndarray:
        hx, hy, hz = self.half_extents
        face_areas = np.array([4 * hy * hz, 4 * hy * hz, 4 * hx * hz, 4 * hx * hz, 4 * hx * hy, 4 * hx * hy])
        face = rng.choice(6, size=n, p=face_areas / face_areas.sum())
        uv = rng.uniform(-1.0, 1.0, size=(n, 2))
        pts = np.empty((n, 3))
        for f, (axis, sign) in enumerate([(0, 1), (0, -1), (1, 1), (1, -1), (2, 1), (2, -1)]):
            m = face == f
            h = self.half_extents
            others = [i for i in range(3) if i != axis]
            pts[m, axis] = sign * h[axis]
            pts[m, others[0]] = uv[m, 0] * h[others[0]]
            pts[m, others[1]] = uv[m, 1] * h[others[1]]
        return pts


@dataclass(frozen=True)
class Sphere:
    radius: float
    local: Transform = field(default_factory=Transform.identity)

    def __post_init__(self):
        if self.radius <= 0:
            raise ParseError(f"sphere radius must be positive, got {self.radius}")

    def sdf_local(self, p: torch.Tensor) -> torch.Tensor:
        return p.norm(dim=-1) - self.radius

    def area(self) -> float:
        return 4.0 * math.pi * self.radius**2

    def sample_surface(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.radius * _unit_vectors(rng, n)


@dataclass(frozen=True)
class Capsule:
    """Capsule around the local Y axis: segment (0, -hh, 0)..(0, hh, 0)."""

    radius: float
    half_height: float
    local: Transform = field(default_factory=Transform.identity)

    def __post_init__(self):
        if self.radius <= 0 or self.half_height <= 0:
            raise ParseError("capsule radius and half height must be positive")

    def sdf_local(self, p: torch.Tensor) -> torch.Tensor:
        y = p[..., 1].clamp(-self.half_height, self.half_height)
        q = torch.stack([p[..., 0], p[..., 1] - y, p[..., 2]], dim=-1)
        return q.norm(dim=-1) - self.radius

    def area(self) -> float:
        return 2.0 * math.pi * self.radius * 2.0 * self.half_height + 4.0 * math.pi * self.radius**2

    def sample_surface(self, n: int, rng: np.random.Generator) -> np.ndarray:
        lateral = 2.0 * math.pi * self.radius * 2.0 * self.half_height
        caps = 4.0 * math.pi * self.radius**2
        on_caps = rng.random(n) < caps / (lateral + caps)
        pts = np.empty((n, 3))
        k = int(on_caps.sum())
        d = _unit_vectors(rng, k)
        pts[on_caps] = self.radius * d + np.sign(d[:, 1:2]) * np.array([0.0, self.half_height, 0.0])
        m = n - k
        theta = rng.uniform(0.0, 2.0 * math.pi, m)
        y = rng.uniform(-self.half_height, self.half_height, m)
        pts[~on_caps] = np.stack([self.radius * np.cos(theta), y, self.radius * np.sin(theta)], axis=1)
        return pts


_PRIMITIVES = {"box": Box, "sphere": Sphere, "capsule": Capsule}


def _primitive_sdf_world(prim, world: Transform, points: torch.Tensor) -> torch.Tensor:
    """SDF of one primitive under a part world transform, exact under rigid motion."""
    inv = (world @ prim.local).inverse()
    return prim.sdf_local(inv.apply(points))


@dataclass(frozen=True)
class ObjectState:
    """7-DoF object pose: translation, axis-angle rotation, joint angle."""

    translation: torch.Tensor  # (3,) meters
    rotation: torch.Tensor  # (3,) axis-angle, canonical (norm <= pi)
    articulation: float  # radians

    def __post_init__(self):
        object.__setattr__(self, "translation", as_tensor(self.translation))
        object.__setattr__(self, "rotation", _canonical_axis_angle(as_tensor(self.rotation)))
        object.__setattr__(self, "articulation", float(self.articulation))
        if self.translation.shape != (3,) or self.rotation.shape != (3,):
            raise ParseError("ObjectState expects (3,) translation and (3,) rotation")

    @staticmethod
    def identity() -> "ObjectState":
        return ObjectState(torch.zeros(3, dtype=DTYPE), torch.zeros(3, dtype=DTYPE), 0.0)

    def to_dict(self) -> dict:
        return {
            "translation": [float(v) for v in self.translation],
            "rotation": [float(v) for v in self.rotation],
            "articulation": float(self.articulation),
        }

    @staticmethod
    def from_dict(d: dict) -> "ObjectState":
        try:
            return ObjectState(
                torch.tensor(d["translation"], dtype=DTYPE),
                torch.tensor(d["rotation"], dtype=DTYPE),
                float(d["articulation"]),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ParseError(f"invalid object state record: {e}") from e


def _canonical_axis_angle(aa: torch.Tensor) -> torch.Tensor:
    angle = float(aa.norm())
    if angle <= math.pi:
        return aa
    axis = aa / angle
    wrapped = math.fmod(angle, 2.0 * math.pi)
    if wrapped > math.pi:
        wrapped -= 2.0 * math.pi
    return axis * wrapped


class ObjectGeometry:
    """Two primitive-union parts plus one revolute joint (part 1 moves)."""

    def __init__(
        self,
        parts,
        joint_pivot,
        joint_axis,
        joint_limits=(0.0, math.pi / 2),
        samples_per_part: int = SURFACE_SAMPLES_PER_PART,
        sample_seed: int = SURFACE_SAMPLE_SEED,
    ):
        if len(parts) != 2 or any(len(p) == 0 for p in parts):
            raise ParseError("geometry needs exactly two non-empty parts")
        self.parts = (tuple(parts[0]), tuple(parts[1]))
        self.joint_pivot = as_tensor(joint_pivot)
        self.joint_axis = as_tensor(joint_axis)
        if abs(float(self.joint_axis.norm()) - 1.0) > 1e-9:
            raise ParseError("joint axis must have unit norm")
        lo, hi = float(joint_limits[0]), float(joint_limits[1])
        if not lo < hi:
            raise ParseError(f"joint limits must satisfy min < max, got ({lo}, {hi})")
        self.joint_limits = (lo, hi)
        self.samples_per_part = int(samples_per_part)
        self.sample_seed = int(sample_seed)

        self._rest_samples = tuple(self._sample_part(i) for i in range(2))
        self.normalization_scale = self._compute_scale()

    def _sample_part(self, part_index: int) -> torch.Tensor:
        """Stratified surface samples of one part, in the part's local frame."""
        rng = np.random.default_rng(self.sample_seed + part_index)
        prims = self.parts[part_index]
        areas = np.array([p.area() for p in prims])
        quota = areas / areas.sum() * self.samples_per_part
        counts = np.floor(quota).astype(int)
        remainder = quota - counts
        for i in np.argsort(-remainder)[: self.samples_per_part - counts.sum()]:
            counts[i] += 1
        pts = [
            prim.local.apply(torch.from_numpy(prim.sample_surface(int(c), rng)).to(DTYPE))
            for prim, c in zip(prims, counts)
            if c > 0
        ]
        return torch.cat(pts, dim=0)

    def part_samples_local(self, articulation: float):
        """Per-part surface samples in the object local frame at the given angle."""
        self._check_limits(articulation)
        art = self.articulation_transform(articulation)
        return (self._rest_samples[0], art.apply(self._rest_samples[1]))

    def articulation_transform(self, articulation: float) -> Transform:
        """Object-frame rigid motion of part 1: rotation about the joint axis through the pivot."""
        R = rotation_about_axis(self.joint_axis, torch.tensor(float(articulation), dtype=DTYPE))
        t = self.joint_pivot - R @ self.joint_pivot
        return Transform(R, t)

    def _check_limits(self, articulation: float) -> None:
        lo, hi = self.joint_limits
        if articulation < lo - 1e-9 or articulation > hi + 1e-9:
            raise LimitViolationError(
                f"articulation {articulation:.6f} outside joint limits [{lo:.6f}, {hi:.6f}]"
            )

    def clamp_articulation(self, articulation: float) -> float:
        lo, hi = self.joint_limits
        return min(max(float(articulation), lo), hi)

    def _compute_scale(self) -> float:
        """Max origin-to-surface distance over the articulation range (unit-ball bound)."""
        lo, hi = self.joint_limits
        best = float(self._rest_samples[0].norm(dim=-1).max())
        for a in np.linspace(lo, hi, _SCALE_SWEEP):
            moved = self.articulation_transform(float(a)).apply(self._rest_samples[1])
            best = max(best, float(moved.norm(dim=-1).max()))
        return best

    def to_json(self) -> str:
        def prim_dict(p):
            d = {"type": {Box: "box", Sphere: "sphere", Capsule: "capsule"}[type(p)]}
            if isinstance(p, Box):
                d["half_extents"] = [float(v) for v in p.half_extents]
            elif isinstance(p, Sphere):
                d["radius"] = float(p.radius)
            else:
                d["radius"] = float(p.radius)
                d["half_height"] = float(p.half_height)
            d["rotation"] = [float(v) for v in _matrix_to_aa(p.local.rotation)]
            d["translation"] = [float(v) for v in p.local.translation]
            return d

        doc = {
            "parts": [{"primitives": [prim_dict(p) for p in part]} for part in self.parts],
            "joint": {
                "pivot": [float(v) for v in self.joint_pivot],
                "axis": [float(v) for v in self.joint_axis],
                "limits": [self.joint_limits[0], self.joint_limits[1]],
            },
            "samples_per_part": self.samples_per_part,
            "sample_seed": self.sample_seed,
        }
        return json.dumps(doc, indent=2)

    @staticmethod
    def from_json(text: str) -> "ObjectGeometry":
        try:
            doc = json.loads(text)
            parts = []
            for part in doc["parts"]:
                prims = []
                for pd in part["primitives"]:
                    kind = pd["type"]
                    if kind not in _PRIMITIVES:
                        raise ParseError(f"unknown primitive type {kind!r}")
                    local = Transform.from_axis_angle(pd.get("rotation", [0, 0, 0]), pd.get("translation", [0, 0, 0]))
                    if kind == "box":
                        prims.append(Box(tuple(pd["half_extents"]), local))
                    elif kind == "sphere":
                        prims.append(Sphere(float(pd["radius"]), local))
                    else:
                        prims.append(Capsule(float(pd["radius"]), float(pd["half_height"]), local))
                parts.append(prims)
            joint = doc["joint"]
            return ObjectGeometry(
                parts,
                joint["pivot"],
                joint["axis"],
                tuple(joint.get("limits", (0.0, math.pi / 2))),
                doc.get("samples_per_part", SURFACE_SAMPLES_PER_PART),
                doc.get("sample_seed", SURFACE_SAMPLE_SEED),
            )
        except ParseError:
            raise
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as e:
            raise ParseError(f"invalid geometry document: {e}") from e


def _matrix_to_aa(R: torch.Tensor):
    return matrix_to_axis_angle(R)


def object_pose_matrix(state: ObjectState) -> Transform:
    """Rigid world pose of the base part; articulation excluded."""
    return Transform(axis_angle_to_matrix(state.rotation), state.translation)


class PosedObject:
    """Geometry under one object state: world part transforms + SDF queries."""

    def __init__(self, geometry: ObjectGeometry, state: ObjectState):
        geometry._check_limits(state.articulation)
        self.geometry = geometry
        self.state = state
        base = object_pose_matrix(state)
        self.part_transforms = (base, base @ geometry.articulation_transform(state.articulation))

    def surface_points(self, part_index=None) -> torch.Tensor:
        """World-frame surface samples of one part (or both concatenated)."""
        if part_index is None:
            return torch.cat([self.surface_points(0), self.surface_points(1)], dim=0)
        return self.part_transforms[part_index].apply(self.geometry._rest_samples[part_index])

    def signed_distance(self, points) -> torch.Tensor:
        """Union SDF over both parts. points: (..., 3) world -> (...)."""
        points = as_tensor(points) if not isinstance(points, torch.Tensor) else points
        dists = [
            _primitive_sdf_world(prim, world, points)
            for world, part in zip(self.part_transforms, self.geometry.parts)
            for prim in part
        ]
        return torch.stack(dists, dim=0).min(dim=0).values


def pose_object(geometry: ObjectGeometry, state: ObjectState) -> PosedObject:
    return PosedObject(geometry, state)


class SdfSequence:
    """Union SDF of a geometry posed along a whole trajectory.

    Precomputes per-frame inverse primitive transforms so that queries
    batch over frames: points (F, M, 3) -> distances (F, M). Gradients
    flow to the query points only (the trajectory is fixed).
    """

    def __init__(self, geometry: ObjectGeometry, states):
        self.num_frames = len(states)
        posed = [PosedObject(geometry, s) for s in states]
        self.posed = posed
        self._prims = []
        for part_index, part in enumerate(geometry.parts):
            for prim in part:
                inv_r = []
                inv_t = []
                for p in posed:
                    inv = (p.part_transforms[part_index] @ prim.local).inverse()
                    inv_r.append(inv.rotation)
                    inv_t.append(inv.translation)
                self._prims.append((prim, torch.stack(inv_r), torch.stack(inv_t)))

    def __call__(self, points: torch.Tensor) -> torch.Tensor:
        # points: (F, M, 3)
        if points.shape[0] != self.num_frames:
            raise ParseError(
                f"query has {points.shape[0]} frames, trajectory has {self.num_frames}"
            )
        dists = []
        for prim, inv_r, inv_t in self._prims:
            local = torch.einsum("fij,fmj->fmi", inv_r.to(points.dtype), points) + inv_t[:, None].to(points.dtype)
            dists.append(prim.sdf_local(local))
        return torch.stack(dists, dim=0).min(dim=0).values


def signed_distance(posed: PosedObject, query) -> torch.Tensor:
    return posed.signed_distance(query)


@dataclass(frozen=True)
class ObjectTrajectory:
    """Uniformly spaced object states."""

    states: tuple
    fps: float

    def __post_init__(self):
        if len(self.states) == 0:
            raise ParseError("object trajectory must be non-empty")
        object.__setattr__(self, "states", tuple(self.states))

    def __len__(self):
        return len(self.states)

    def pose_matrices(self) -> torch.Tensor:
        """Homogeneous base-part poses, (N, 4, 4)."""
        return torch.stack([object_pose_matrix(s).as_matrix() for s in self.states])

    def to_jsonl(self) -> str:
        lines = []
        for i, s in enumerate(self.states):
            rec = {"frame": i, "fps": self.fps}
            rec.update(s.to_dict())
            lines.append(json.dumps(rec))
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_jsonl(text: str) -> "ObjectTrajectory":
        states = []
        fps = None
        for ln, line in enumerate(text.splitlines()):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                fps = float(rec["fps"])
                states.append(ObjectState.from_dict(rec))
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as e:
                raise ParseError(f"invalid trajectory line {ln + 1}: {e}") from e
        if not states:
            raise ParseError("empty object trajectory file")
        return ObjectTrajectory(tuple(states), fps)
