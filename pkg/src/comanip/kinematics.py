"""Serial manipulator model: standard DH chain, forward kinematics, Jacobian.

Standard (distal) Denavit-Hartenberg convention, all joints revolute:
T_i = Rz(theta_i + offset_i) Tz(d_i) Tx(a_i) Rx(alpha_i).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from comanip.geometry import Pose, quat_from_matrix


@dataclass
class JointConfig:
    """Joint angles plus the limits every controller must respect."""

    q: np.ndarray
    limits: np.ndarray  # (n, 2) [min, max] rad
    velocity_limits: np.ndarray  # (n,) max |qdot| rad/s

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float).reshape(-1)
        n = self.q.size
        if n < 1:
            raise ValueError("at least one joint required")
        self.limits = np.asarray(self.limits, dtype=float).reshape(n, 2)
        self.velocity_limits = np.asarray(self.velocity_limits, dtype=float).reshape(n)
        lo, hi = self.limits[:, 0], self.limits[:, 1]
        if np.any(self.q < lo - 1e-12) or np.any(self.q > hi + 1e-12):
            raise ValueError("joint angles outside limits")

    @property
    def n(self) -> int:
        return self.q.size

    def with_q(self, q) -> "JointConfig":
        return JointConfig(np.asarray(q, dtype=float), self.limits.copy(), self.velocity_limits.copy())


@dataclass
class Manipulator:
    """Link table of standard DH rows (a, alpha, d, theta_offset) plus base pose."""

    dh: np.ndarray  # (n, 4) columns a, alpha, d, theta_offset
    base_frame: Pose = field(default_factory=Pose.identity)

    def __post_init__(self):
        self.dh = np.asarray(self.dh, dtype=float).reshape(-1, 4)
        if self.dh.shape[0] < 2:
            raise ValueError("manipulator needs at least 2 links")
        if not np.all(np.isfinite(self.dh)):
            raise ValueError("DH parameters must be finite")

    @property
    def n(self) -> int:
        return self.dh.shape[0]

    @staticmethod
    def from_json(path: str | Path) -> "Manipulator":
        rows = json.loads(Path(path).read_text())
        dh = [[r["a"], r["alpha"], r["d"], r["theta_offset"]] for r in rows]
        return Manipulator(np.array(dh, dtype=float))


def _dh_matrix(a: float, alpha: float, d: float, theta: float) -> np.ndarray:
    ct, st = np.cos(theta), np.sin(theta)
    ca, sa = np.cos(alpha), np.sin(alpha)
    return np.array(
        [
            [ct, -st * ca, st * sa, a * ct],
            [st, ct * ca, -ct * sa, a * st],
            [0.0, sa, ca, d],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )


def _check_dims(m: Manipulator, q: JointConfig | np.ndarray) -> np.ndarray:
    qv = q.q if isinstance(q, JointConfig) else np.asarray(q, dtype=float).reshape(-1)
    if qv.size != m.n:
        raise ValueError(f"configuration has {qv.size} joints, manipulator has {m.n}")
    return qv


def link_frames(m: Manipulator, q: JointConfig | np.ndarray) -> list[np.ndarray]:
    """Homogeneous transforms of frames 0..n in the robot base frame."""
    qv = _check_dims(m, q)
    T = m.base_frame.matrix()
    frames = [T.copy()]
    for i in range(m.n):
        a, alpha, d, off = m.dh[i]
        T = T @ _dh_matrix(a, alpha, d, qv[i] + off)
        frames.append(T.copy())
    return frames


def forward_kinematics(m: Manipulator, q: JointConfig | np.ndarray) -> Pose:
    """End-effector pose in the robot base frame."""
    T = link_frames(m, q)[-1]
    return Pose(T[:3, 3], quat_from_matrix(T[:3, :3]))


def geometric_jacobian(m: Manipulator, q: JointConfig | np.ndarray) -> np.ndarray:
    """6xn geometric Jacobian, rows linear then angular, base frame."""
    frames = link_frames(m, q)
    p_ee = frames[-1][:3, 3]
    J = np.zeros((6, m.n))
    for i in range(m.n):
        z = frames[i][:3, 2]
        r = p_ee - frames[i][:3, 3]
        J[0, i] = z[1] * r[2] - z[2] * r[1]
        J[1, i] = z[2] * r[0] - z[0] * r[2]
        J[2, i] = z[0] * r[1] - z[1] * r[0]
        J[3:, i] = z
    return J


# Redundant 7-DOF arm (iiwa-like geometry) used throughout the simulator;
# redundancy gives the task hierarchy a null space to exploit.
DEFAULT_DH = np.array(
    [
        [0.0, -np.pi / 2, 0.340, 0.0],
        [0.0, np.pi / 2, 0.0, 0.0],
        [0.0, np.pi / 2, 0.400, 0.0],
        [0.0, -np.pi / 2, 0.0, 0.0],
        [0.0, -np.pi / 2, 0.400, 0.0],
        [0.0, np.pi / 2, 0.0, 0.0],
        [0.0, 0.0, 0.126, 0.0],
    ]
)

DEFAULT_POSITION_LIMIT = 2.9  # rad
DEFAULT_VELOCITY_LIMIT = 1.5  # rad/s


def default_arm() -> Manipulator:
    return Manipulator(DEFAULT_DH.copy())


def default_joint_config(q=None) -> JointConfig:
    n = DEFAULT_DH.shape[0]
    if q is None:
        q = np.zeros(n)
    limits = np.tile([-DEFAULT_POSITION_LIMIT, DEFAULT_POSITION_LIMIT], (n, 1))
    return JointConfig(np.asarray(q, dtype=float), limits, np.full(n, DEFAULT_VELOCITY_LIMIT))
