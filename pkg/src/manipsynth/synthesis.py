"""Procedural training-data generator.

Produces coherent (object trajectory, end-effector trajectory, whole-body
motion) triples: minimum-jerk articulation arcs, a grasping hand whose
index fingertip rides the handle point during the contact phase, analytic
two-link arm inverse kinematics, and seeded idle body sway.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from .errors import ScenarioError
from .kinematics import fk_positions
from .motion import MotionSequence, encode_motion
from .objects import ObjectState, ObjectTrajectory, pose_object
from .rotations import DTYPE, as_tensor, axis_angle_to_matrix, matrix_to_axis_angle, yaw_matrix
from .scenario import Scenario
from .skeleton import BODY_JOINTS, HAND_JOINTS, Pose, REST_ROOT_HEIGHT, Skeleton, build_skeleton

SPINE_LEAN = 0.06  # rad, resting forward lean
IDLE_ARM_DROP = 1.15  # rad, shoulder rotation that lets the arms hang
IDLE_ELBOW_BEND = 0.2
IDLE_CURL = 0.15
GRASP_CURL = (0.35, 0.55, 0.45)  # per-segment finger flexion at full grasp
THUMB_CURL = (0.25, 0.3, 0.2)
# longer fingers curl harder so no tip reaches past the tracked index tip
FINGER_CURL_SCALE = {"index": 1.0, "middle": 0.91, "pinky": 1.38, "ring": 1.05, "thumb": 1.0}
APPROACH_LIFT = 0.08  # m, how high the hand arcs over the object on approach
REACH_MARGIN = 0.9995


def minimum_jerk(tau):
    """Smooth 0 -> 1 profile with zero velocity/acceleration at both ends."""
    t = min(max(float(tau), 0.0), 1.0)
    return 10.0 * t**3 - 15.0 * t**4 + 6.0 * t**5


def grasp_hand_frame(side: str, finger_dir: torch.Tensor, surface_normal: torch.Tensor) -> torch.Tensor:
    """Wrist orientation with fingers along finger_dir and the palm facing
    the surface (palm side is local -y; finger axis is +x left / -x right)."""
    x_col = finger_dir if side == "left" else -finger_dir
    y_col = surface_normal - (surface_normal @ x_col) * x_col
    norm = float(y_col.norm())
    if norm < 1e-6:
        helper = torch.tensor([0.0, 1.0, 0.0], dtype=DTYPE)
        y_col = helper - (helper @ x_col) * x_col
        norm = float(y_col.norm())
    y_col = y_col / norm
    z_col = torch.cross(x_col, y_col, dim=-1)
    return torch.stack([x_col, y_col, z_col], dim=-1)


def rotation_between(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Minimal rotation taking unit vector a to unit vector b."""
    axis = torch.cross(a, b, dim=-1)
    s = float(axis.norm())
    c = float((a * b).sum())
    if s < 1e-9:
        if c > 0:
            return torch.eye(3, dtype=DTYPE)
        # antiparallel: rotate half-turn about any axis orthogonal to a
        helper = torch.tensor([0.0, 1.0, 0.0], dtype=DTYPE)
        if abs(float((a * helper).sum())) > 0.99:
            helper = torch.tensor([1.0, 0.0, 0.0], dtype=DTYPE)
        perp = torch.cross(a, helper, dim=-1)
        perp = perp / perp.norm()
        return axis_angle_to_matrix(perp * math.pi)
    return axis_angle_to_matrix(axis / s * math.atan2(s, c))


def _finger_curl_aa(side: str, finger: str, curl: float) -> torch.Tensor:
    """Local axis-angle rotations (3, 3) for one finger at a curl factor."""
    base = THUMB_CURL if finger == "thumb" else GRASP_CURL
    sign = -1.0 if side == "left" else 1.0
    scale = FINGER_CURL_SCALE[finger]
    rows = []
    for seg_angle in base:
        if finger == "thumb":
            rows.append(torch.tensor([0.0, -sign * seg_angle * curl * scale, 0.0], dtype=DTYPE))
        else:
            rows.append(torch.tensor([0.0, 0.0, sign * seg_angle * curl * scale], dtype=DTYPE))
    return torch.stack(rows)


def hand_pose_rows(skeleton: Skeleton, side: str, curl: float) -> torch.Tensor:
    """(15, 3) local rotations for one hand at a curl factor."""
    rows = []
    for finger in ("index", "middle", "pinky", "ring", "thumb"):
        rows.append(_finger_curl_aa(side, finger, curl))
    return torch.cat(rows, dim=0)


def fingertip_offset_in_wrist(skeleton: Skeleton, side: str, curl: float) -> torch.Tensor:
    """Index fingertip position in the wrist frame for a given curl."""
    i1 = skeleton.index(f"{side}_index1")
    offs = [skeleton.offsets[i1], skeleton.offsets[i1 + 1], skeleton.offsets[i1 + 2]]
    aa = _finger_curl_aa(side, "index", curl)
    R = axis_angle_to_matrix(aa)
    p = torch.zeros(3, dtype=DTYPE)
    g = torch.eye(3, dtype=DTYPE)
    for k in range(3):
        p = p + g @ offs[k]
        g = g @ R[k]
    return p


def _two_link_ik(shoulder, target, upper_len, fore_len, rest_dir, pole):
    """Global rotations (upper, fore) placing the wrist at `target`.

    Raises ScenarioError when the target is outside the reachable annulus.
    """
    v = target - shoulder
    d = float(v.norm())
    if d > (upper_len + fore_len) * REACH_MARGIN:
        raise ScenarioError(
            f"reach target {d:.3f} m exceeds arm length {(upper_len + fore_len):.3f} m"
        )
    if d < abs(upper_len - fore_len) + 1e-6:
        raise ScenarioError(f"reach target {d:.3f} m is inside the arm's inner workspace")
    u = v / d
    cos_a = (upper_len**2 + d**2 - fore_len**2) / (2.0 * upper_len * d)
    alpha = math.acos(min(max(cos_a, -1.0), 1.0))
    e = pole - (pole @ u) * u
    if float(e.norm()) < 1e-6:
        fallback = torch.tensor([0.0, 0.0, -1.0], dtype=DTYPE)
        e = fallback - (fallback @ u) * u
    e = e / e.norm()
    upper_dir = math.cos(alpha) * u + math.sin(alpha) * e
    elbow = shoulder + upper_len * upper_dir
    fore_dir = (target - elbow) / fore_len
    fore_dir = fore_dir / fore_dir.norm()
    return rotation_between(rest_dir, upper_dir), rotation_between(rest_dir, fore_dir)


@dataclass
class TrainingSample:
    object_trajectory: ObjectTrajectory
    ee_world: torch.Tensor  # (N, 12, 3)
    contacts: torch.Tensor  # (N, 10) bool
    poses: list
    motion: MotionSequence


def _articulation_profile(scenario: Scenario, n: int, t0: float, t1: float, a_end: float):
    a0 = scenario.initial_object_state.articulation
    out = []
    for f in range(n):
        tau = f / (n - 1)
        if tau <= t0:
            out.append(a0)
        elif tau >= t1:
            out.append(a_end)
        else:
            out.append(a0 + (a_end - a0) * minimum_jerk((tau - t0) / (t1 - t0)))
    return out


def generate_sample(scenario: Scenario, skeleton: Skeleton, rng: np.random.Generator) -> TrainingSample:
    ds = scenario.dataset
    n = scenario.frames
    side = scenario.hand
    other = "left" if side == "right" else "right"

    # per-sample jitter
    jit_t = torch.tensor(
        [rng.uniform(-ds.translation_jitter, ds.translation_jitter),
         rng.uniform(-ds.translation_jitter, ds.translation_jitter) * 0.3,
         rng.uniform(-ds.translation_jitter, ds.translation_jitter)],
        dtype=DTYPE,
    )
    a_end = scenario.geometry.clamp_articulation(
        scenario.articulation_end + rng.uniform(-ds.articulation_jitter, ds.articulation_jitter)
    )
    handle_local = scenario.handle_point + torch.tensor(
        [rng.uniform(-ds.handle_jitter, ds.handle_jitter), 0.0, 0.0], dtype=DTYPE
    )
    t0 = min(max(scenario.contact_window[0] + rng.uniform(-ds.timing_jitter, ds.timing_jitter), 0.05), 0.6)
    t1 = max(min(scenario.contact_window[1] + rng.uniform(-ds.timing_jitter, ds.timing_jitter), 0.95), t0 + 0.2)
    sway_amp = ds.sway_amplitude * rng.uniform(0.6, 1.4)
    sway_freq = ds.sway_frequency * rng.uniform(0.8, 1.2)
    sway_phase = rng.uniform(0.0, 2.0 * math.pi)
    yaw_amp = 0.02 * rng.uniform(0.5, 1.5)
    root_xz = scenario.initial_root_xz + torch.tensor(
        [rng.uniform(-ds.root_jitter, ds.root_jitter), rng.uniform(-ds.root_jitter, ds.root_jitter)],
        dtype=DTYPE,
    )
    facing = scenario.initial_facing + rng.uniform(-ds.facing_jitter, ds.facing_jitter)
    is_idle = rng.random() < ds.idle_fraction
    wander_amp = ds.wander_amplitude * rng.uniform(0.5, 1.5) if is_idle else 0.0
    wander_freq = rng.uniform(0.10, 0.22)
    wander_phase = (rng.uniform(0.0, 2.0 * math.pi), rng.uniform(0.0, 2.0 * math.pi))

    base_state = scenario.initial_object_state
    init = ObjectState(base_state.translation + jit_t, base_state.rotation, base_state.articulation)
    arts = _articulation_profile(scenario, n, t0, t1, a_end)
    states = [ObjectState(init.translation, init.rotation, a) for a in arts]
    traj = ObjectTrajectory(tuple(states), scenario.fps)
    posed = [pose_object(scenario.geometry, s) for s in states]
    handle_world = torch.stack([p.part_transforms[1].apply(handle_local) for p in posed])  # (N, 3)

    sh_i = skeleton.index(f"{side}_shoulder")
    el_i = skeleton.index(f"{side}_elbow")
    wr_i = skeleton.index(f"{side}_wrist")
    col_i = skeleton.index(f"{side}_collar")
    upper_len = float(skeleton.offsets[el_i].norm())
    fore_len = float(skeleton.offsets[wr_i].norm())
    rest_dir = torch.tensor([1.0 if side == "left" else -1.0, 0.0, 0.0], dtype=DTYPE)
    pole = torch.tensor([0.4 if side == "left" else -0.4, -1.0, 0.0], dtype=DTYPE)
    pole = pole / pole.norm()

    rot_mats = torch.eye(3, dtype=DTYPE).repeat(n, skeleton.num_joints, 1, 1)
    roots = torch.zeros(n, 3, dtype=DTYPE)
    curls = torch.zeros(n, dtype=DTYPE)

    # body layer: root sway (plus slow wander when idling) + lean + hanging arms
    for f in range(n):
        t_sec = f / scenario.fps
        sway = sway_amp * math.sin(2.0 * math.pi * sway_freq * t_sec + sway_phase)
        wx = wander_amp * math.sin(2.0 * math.pi * wander_freq * t_sec + wander_phase[0])
        wz = wander_amp * math.sin(2.0 * math.pi * wander_freq * 0.8 * t_sec + wander_phase[1])
        yaw = facing + yaw_amp * math.sin(2.0 * math.pi * sway_freq * t_sec + sway_phase * 0.7)
        roots[f] = torch.tensor(
            [float(root_xz[0]) + sway + wx, REST_ROOT_HEIGHT, float(root_xz[1]) + wz],
            dtype=DTYPE,
        )
        rot_mats[f, 0] = yaw_matrix(torch.tensor(yaw, dtype=DTYPE))
        rot_mats[f, skeleton.index("spine1")] = axis_angle_to_matrix(torch.tensor([SPINE_LEAN, 0.0, 0.0], dtype=DTYPE))
        for s, sign in (("left", -1.0), ("right", 1.0)):
            rot_mats[f, skeleton.index(f"{s}_shoulder")] = axis_angle_to_matrix(
                torch.tensor([0.0, 0.0, sign * IDLE_ARM_DROP], dtype=DTYPE)
            )
            rot_mats[f, skeleton.index(f"{s}_elbow")] = axis_angle_to_matrix(
                torch.tensor([0.0, 0.0, sign * IDLE_ELBOW_BEND], dtype=DTYPE)
            )

        tau = f / (n - 1)
        if is_idle:
            curls[f] = 0.0
        elif tau < t0:
            curls[f] = minimum_jerk(tau / t0)
        elif tau <= t1:
            curls[f] = 1.0
        else:
            curls[f] = 1.0 - minimum_jerk((tau - t1) / (1.0 - t1))

    # hand curl layer
    lh_slice = slice(BODY_JOINTS, BODY_JOINTS + HAND_JOINTS)
    rh_slice = slice(BODY_JOINTS + HAND_JOINTS, skeleton.num_joints)
    for f in range(n):
        curl_grasp = IDLE_CURL + (1.0 - IDLE_CURL) * float(curls[f])
        left_curl = curl_grasp if side == "left" else IDLE_CURL
        right_curl = curl_grasp if side == "right" else IDLE_CURL
        rot_mats[f, lh_slice] = axis_angle_to_matrix(hand_pose_rows(skeleton, "left", left_curl))
        rot_mats[f, rh_slice] = axis_angle_to_matrix(hand_pose_rows(skeleton, "right", right_curl))

    # idle wrist position (before the reach layer) anchors the approach blend
    pos0, glob0 = fk_positions(skeleton.parents, skeleton.offsets, roots, rot_mats, return_rotations=True)
    idle_wrist = pos0[:, wr_i]  # (N, 3)

    # outward surface normals at the handle, for a glancing grasp orientation
    normals = torch.zeros(n, 3, dtype=DTYPE)
    if not is_idle:
        q = handle_world.clone().requires_grad_(True)
        sd = torch.stack([posed[f].signed_distance(q[f]) for f in range(n)]).sum()
        (g,) = torch.autograd.grad(sd, q)
        normals = g / g.norm(dim=-1, keepdim=True).clamp_min(1e-9)

    # reach layer on the grasping arm
    for f in range(n):
        if is_idle:
            break
        shoulder = pos0[f, sh_i]
        dir_f = handle_world[f] - shoulder
        dir_f = dir_f / dir_f.norm()
        # mostly tangent to the surface so the other fingers ride along it
        dir_f = dir_f - 0.75 * (dir_f @ normals[f]) * normals[f]
        dir_f = dir_f / dir_f.norm().clamp_min(1e-9)
        hand_rot = grasp_hand_frame(side, dir_f, normals[f])
        curl_grasp = IDLE_CURL + (1.0 - IDLE_CURL) * float(curls[f])
        tip_local = fingertip_offset_in_wrist(skeleton, side, curl_grasp)
        grasp_wrist = handle_world[f] - hand_rot @ tip_local

        tau = f / (n - 1)
        if tau < t0:
            blend = minimum_jerk(tau / t0)
        elif tau <= t1:
            blend = 1.0
        else:
            blend = 1.0 - minimum_jerk((tau - t1) / (1.0 - t1))
        # arc the hand over the object on the way in/out instead of cutting
        # straight through it
        lift = APPROACH_LIFT * math.sin(math.pi * blend)
        wrist_target = idle_wrist[f] + (grasp_wrist - idle_wrist[f]) * blend
        wrist_target = wrist_target + torch.tensor([0.0, lift, 0.0], dtype=DTYPE)

        if blend > 0.0:
            upper_g, fore_g = _two_link_ik(shoulder, wrist_target, upper_len, fore_len, rest_dir, pole)
            collar_g = glob0[f, col_i]
            rot_mats[f, sh_i] = collar_g.T @ upper_g
            rot_mats[f, el_i] = upper_g.T @ fore_g
            rot_mats[f, wr_i] = fore_g.T @ hand_rot

    positions = fk_positions(skeleton.parents, skeleton.offsets, roots, rot_mats)
    ee_idx = torch.tensor(skeleton.end_effector_indices)
    ee_world = positions[:, ee_idx]  # (N, 12, 3)

    contacts = torch.zeros(n, 10, dtype=torch.bool)
    for f in range(n):
        tips = ee_world[f, 2:]
        contacts[f] = posed[f].signed_distance(tips).abs() <= 0.005

    aa = matrix_to_axis_angle(rot_mats)
    poses = [Pose(roots[f], aa[f]) for f in range(n)]
    motion = encode_motion(poses, skeleton, scenario.fps)
    return TrainingSample(traj, ee_world, contacts, poses, motion)


def synthesize_training_data(scenario: Scenario, count: int, seed: int):
    """Deterministic list of procedurally generated samples."""
    skeleton = build_skeleton()
    rng = np.random.default_rng(seed)
    return [generate_sample(scenario, skeleton, rng) for _ in range(count)]


def idle_first_frame(scenario: Scenario, skeleton: Skeleton):
    """First-frame features of the idle stance all training samples start
    from; used to condition the motion models at generation time.

    Returns (body features, left-hand features, right-hand features,
    init_facing, init_xz).
    """
    rot = torch.eye(3, dtype=DTYPE).repeat(skeleton.num_joints, 1, 1)
    rot[0] = yaw_matrix(torch.tensor(scenario.initial_facing, dtype=DTYPE))
    rot[skeleton.index("spine1")] = axis_angle_to_matrix(torch.tensor([SPINE_LEAN, 0.0, 0.0], dtype=DTYPE))
    for s, sign in (("left", -1.0), ("right", 1.0)):
        rot[skeleton.index(f"{s}_shoulder")] = axis_angle_to_matrix(
            torch.tensor([0.0, 0.0, sign * IDLE_ARM_DROP], dtype=DTYPE)
        )
        rot[skeleton.index(f"{s}_elbow")] = axis_angle_to_matrix(
            torch.tensor([0.0, 0.0, sign * IDLE_ELBOW_BEND], dtype=DTYPE)
        )
    rot[BODY_JOINTS : BODY_JOINTS + HAND_JOINTS] = axis_angle_to_matrix(hand_pose_rows(skeleton, "left", IDLE_CURL))
    rot[BODY_JOINTS + HAND_JOINTS :] = axis_angle_to_matrix(hand_pose_rows(skeleton, "right", IDLE_CURL))

    root = torch.tensor(
        [float(scenario.initial_root_xz[0]), REST_ROOT_HEIGHT, float(scenario.initial_root_xz[1])],
        dtype=DTYPE,
    )
    aa = matrix_to_axis_angle(rot)
    pose = Pose(root, aa)
    motion = encode_motion([pose, pose], skeleton, scenario.fps)
    return motion.body[0], motion.left_hand[0], motion.right_hand[0], motion.init_facing, motion.init_xz
