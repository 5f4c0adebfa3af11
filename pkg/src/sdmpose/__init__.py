"""Shape decomposition model for lifting 2D body joints to 3D poses."""

from .camera import project, update_camera
from .core import (
    CameraMatrix,
    Codes,
    DictKind,
    Pose2D,
    Pose3D,
    PoseDictionary,
    center_pose,
    center_pose2d,
    combine,
)
from .dictlearn import DictLearnConfig, TrainReport, learn_dictionaries
from .errors import SDMError
from .metrics import estimation_error, per_joint_error, rigid_align
from .solver import SolveReport, SolverConfig, solve_sdm, solve_sr_baseline

__version__ = "0.1.0"

__all__ = [
    "CameraMatrix", "Codes", "DictKind", "DictLearnConfig", "Pose2D", "Pose3D", "PoseDictionary",
    "SDMError", "SolveReport", "SolverConfig", "TrainReport", "center_pose", "center_pose2d",
    "combine", "estimation_error", "learn_dictionaries", "per_joint_error", "project",
    "rigid_align", "solve_sdm", "solve_sr_baseline", "update_camera",
]
