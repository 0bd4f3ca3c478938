"""poseworld: interactive camera-grounded world simulation engine.

User actions become twists, twists become SE(3) camera poses, poses drive
both view-conditioned generation (ray-line camera codes plus an injection
MLP) and pose-anchored long-term memory retrieval; a progressive noise
schedule rolls the latent window forward, and a deterministic procedural
voxel world serves as the verifiable ground truth.
"""

__version__ = "0.1.0"

from .actions import InputState, Sensitivity, input_to_twist, quantize_to_external
from .config import SessionConfig, load_config, parse_config
from .se3 import (Pose, Trajectory, Twist, accumulate, compose, exp_twist,
                  inverse, linear_step, log_pose)

__all__ = [
    "__version__",
    "InputState", "Sensitivity", "input_to_twist", "quantize_to_external",
    "SessionConfig", "load_config", "parse_config",
    "Pose", "Trajectory", "Twist", "accumulate", "compose", "exp_twist",
    "inverse", "linear_step", "log_pose",
]
