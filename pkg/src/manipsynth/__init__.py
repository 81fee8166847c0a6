"""manipsynth: desk-scale whole-body manipulation synthesis.

Generates articulated-object trajectories and end-effector distance
encodings with small conditional diffusion models, recovers 3D
end-effector positions by trilateration, and synthesizes whole-body
motion by optimizing the input noise of three decoupled diffusion models
through a differentiable DDIM solver and the kinematic chain.
"""

from .bps import (
    BasisPointSet,
    EndEffectorBps,
    PartBps,
    contact_labels,
    encode_ee_bps,
    encode_object_bps,
    sample_basis_points,
)
from .denoiser import Denoiser, DenoiserConfig, ModelBundle
from .diffusion import (
    NoiseSchedule,
    cosine_schedule,
    ddim_sample,
    grad_through_sampler,
    linear_schedule,
    sample_noise,
    train_denoiser,
)
from .errors import ManipSynthError
from .kinematics import fk_positions, forward_kinematics
from .metrics import MetricsReport, evaluate_motion, foot_skating, hand_penetration
from .motion import MotionSequence, decode_motion, encode_motion, motion_joint_positions
from .objects import (
    Box,
    Capsule,
    ObjectGeometry,
    ObjectState,
    ObjectTrajectory,
    PosedObject,
    Sphere,
    object_pose_matrix,
    pose_object,
    signed_distance,
)
from .optimize import (
    MotionContext,
    NoiseBundle,
    OptimizationConfig,
    TargetSet,
    add_root_targets,
    loss_ee,
    loss_pen,
    loss_reg,
    optimize_object_keyframes,
    optimize_wholebody,
    targets_from_ee_trajectory,
)
from .pose_attention import apply_pose_encoding, windowed_attention_mask
from .rotations import Transform, decode_rot6d, encode_rot6d
from .scenario import Scenario, TextCondition
from .skeleton import Pose, Skeleton, build_skeleton
from .synthesis import synthesize_training_data
from .trajectory import (
    EeTrajectory,
    generate_ee_bps,
    generate_object_trajectory,
    recover_ee_positions,
)

__version__ = "0.1.0"
