"""Deterministic human-robot co-manipulation simulator.

A seven-DOF arm driven by a hierarchical stack-of-tasks controller
(cascaded quadratic programs) collaborates with a simulated or live human
partner on a marker-uncapping task, using synthetic visuo-tactile
perception: RANSAC+SVM object detection, 18-joint skeleton intent
tracking, and sponge-style tactile sensing with friction-cone grip
modulation.
"""

from comanip.config import RunConfig
from comanip.geometry import FrameTransform, Pose, Twist, apply_transform
from comanip.kinematics import (
    JointConfig,
    Manipulator,
    default_arm,
    forward_kinematics,
    geometric_jacobian,
)
from comanip.qp import QpProblem, QpSolution, kkt_residual, solve_qp
from comanip.scenario import (
    EpisodeLog,
    HumanModel,
    Phase,
    Simulation,
    WorldState,
    run_episode,
    slip_dynamics,
    step,
)
from comanip.tasks import Priority, SensorSnapshot, TaskSpec, TaskStack, resolve, task_error

__all__ = [
    "Pose",
    "Twist",
    "FrameTransform",
    "apply_transform",
    "JointConfig",
    "Manipulator",
    "default_arm",
    "forward_kinematics",
    "geometric_jacobian",
    "QpProblem",
    "QpSolution",
    "solve_qp",
    "kkt_residual",
    "TaskSpec",
    "Priority",
    "TaskStack",
    "SensorSnapshot",
    "task_error",
    "resolve",
    "RunConfig",
    "WorldState",
    "Phase",
    "HumanModel",
    "Simulation",
    "EpisodeLog",
    "run_episode",
    "step",
    "slip_dynamics",
]

__version__ = "0.1.0"
