"""Stack-of-tasks controller: prioritized objectives resolved by cascaded QPs.

Each hard-priority level solves one QP over joint velocities. Tasks sharing
a level are blended by their soft weights inside that QP; completed levels
are protected by equality locks (J_i qdot = J_i qdot_i*), so lower levels
can only act in the null space of everything above them. Joint position
limits enter as velocity-damper bounds and velocity limits as box bounds,
both installed in every level's QP, so the returned command can never
violate them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from comanip.geometry import Pose, orientation_error
from comanip.kinematics import JointConfig, Manipulator, forward_kinematics, geometric_jacobian
from comanip.qp import QpProblem, solve_qp

CONTROL_DT = 0.01  # s
LIMIT_DAMPER_BETA = 0.5

TASK_KINDS = ("cartesian_position", "cartesian_orientation", "force", "posture", "joint_limit_guard")


class UnknownFrameError(ValueError):
    """Task target expressed in a frame the controller does not know."""


class StaleSensorError(RuntimeError):
    """Sensor snapshot older than the freshness budget (2 control ticks)."""


@dataclass
class TaskSpec:
    kind: str
    target: object  # Pose | 3-vector | quaternion | q-vector, by kind
    gain: float  # 1/s for motion tasks, m/(s N) admittance for force tasks
    frame: str = "base"

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise ValueError(f"unknown task kind {self.kind!r}")
        if not (np.isfinite(self.gain) and self.gain > 0):
            raise ValueError("gain must be positive and finite")


@dataclass
class Priority:
    hard_level: int
    soft_weight: float = 1.0

    def __post_init__(self):
        if self.hard_level < 0:
            raise ValueError("hard_level must be >= 0")
        if not (np.isfinite(self.soft_weight) and self.soft_weight > 0):
            raise ValueError("soft_weight must be positive and finite")


@dataclass
class SensorSnapshot:
    """Measurements the force tasks consume, stamped with the control tick."""

    tick: int = 0
    current_tick: int = 0
    measured_force: np.ndarray = field(default_factory=lambda: np.zeros(3))  # N, base frame

    def __post_init__(self):
        self.measured_force = np.asarray(self.measured_force, dtype=float).reshape(3)

    @property
    def age_ticks(self) -> int:
        return self.current_tick - self.tick


@dataclass
class TaskStack:
    tasks: list[tuple[TaskSpec, Priority]]
    regularization: float = 1e-6

    def __post_init__(self):
        if not self.tasks:
            raise ValueError("stack needs at least one task")
        levels = sorted({p.hard_level for _, p in self.tasks})
        if levels != list(range(len(levels))):
            raise ValueError("hard levels must be contiguous from 0")

    def levels(self) -> list[int]:
        return sorted({p.hard_level for _, p in self.tasks})

    def at_level(self, level: int) -> list[tuple[TaskSpec, Priority]]:
        return [(t, p) for t, p in self.tasks if p.hard_level == level]

    @staticmethod
    def from_json(path: str | Path, regularization: float = 1e-6) -> "TaskStack":
        entries = json.loads(Path(path).read_text())
        tasks = []
        for e in entries:
            spec = TaskSpec(
                kind=e["kind"],
                target=np.asarray(e["target"], dtype=float) if e.get("target") is not None else None,
                gain=float(e["gain"]),
                frame=e.get("frame", "base"),
            )
            tasks.append((spec, Priority(int(e["hard_level"]), float(e.get("soft_weight", 1.0)))))
        return TaskStack(tasks, regularization)


def _target_position(target) -> np.ndarray:
    if isinstance(target, Pose):
        return target.position
    return np.asarray(target, dtype=float).reshape(3)


def _target_orientation(target) -> np.ndarray:
    if isinstance(target, Pose):
        return target.orientation
    return np.asarray(target, dtype=float).reshape(4)


def task_error(
    m: Manipulator,
    t: TaskSpec,
    state: JointConfig,
    sensors: SensorSnapshot | None = None,
    kin: tuple | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Task Jacobian and desired task-space velocity edot* = gain * error.

    Force tasks turn a force error into a corrective velocity through the
    admittance gain. A joint_limit_guard contributes no objective rows; it
    acts purely through the inequality bounds installed by `resolve`.
    `kin` optionally carries precomputed (ee_pose, jacobian) for the state
    so a multi-task stack evaluates the kinematics once per tick.
    """
    if t.frame != "base":
        raise UnknownFrameError(f"task frame {t.frame!r}; targets must be given in 'base'")
    n = state.n
    if t.kind == "joint_limit_guard":
        return np.zeros((0, n)), np.zeros(0)
    if t.kind == "posture":
        q_target = np.asarray(t.target, dtype=float).reshape(n)
        return np.eye(n), t.gain * (q_target - state.q)

    pose, J = kin if kin is not None else (forward_kinematics(m, state), geometric_jacobian(m, state))
    if t.kind == "cartesian_position":
        e = _target_position(t.target) - pose.position
        return J[:3], t.gain * e
    if t.kind == "cartesian_orientation":
        e = orientation_error(_target_orientation(t.target), pose.orientation)
        return J[3:], t.gain * e
    # force task
    if sensors is None:
        raise ValueError("force task requires a sensor snapshot")
    if sensors.age_ticks > 2:
        raise StaleSensorError(f"sensor data {sensors.age_ticks} ticks old")
    e = np.asarray(t.target, dtype=float).reshape(3) - sensors.measured_force
    return J[:3], t.gain * e


def _velocity_bounds(state: JointConfig, dt: float, beta: float) -> tuple[np.ndarray, np.ndarray]:
    # box bounds = velocity limits tightened by the position-limit damper
    hi = np.minimum(state.velocity_limits, beta * (state.limits[:, 1] - state.q) / dt)
    lo = np.maximum(-state.velocity_limits, beta * (state.limits[:, 0] - state.q) / dt)
    return lo, hi


@dataclass
class LevelSolve:
    level: int
    qdot: np.ndarray
    status: str


@dataclass
class ResolveResult:
    qdot: np.ndarray
    levels: list[LevelSolve]
    failed_level: int | None = None


def resolve_detailed(
    m: Manipulator,
    stack: TaskStack,
    state: JointConfig,
    sensors: SensorSnapshot | None = None,
    dt: float = CONTROL_DT,
) -> ResolveResult:
    """Run the cascade, one QP per hard level, locking completed levels."""
    n = state.n
    lo, hi = _velocity_bounds(state, dt, LIMIT_DAMPER_BETA)
    # locks are kept as an orthonormal basis of the completed task rows:
    # the same span, but a perfectly conditioned equality block
    lock_rows: list[np.ndarray] = []
    lock_rhs: list[float] = []
    qdot = np.zeros(n)
    solves: list[LevelSolve] = []
    kin = None
    if any(t.kind in ("cartesian_position", "cartesian_orientation", "force") for t, _ in stack.tasks):
        kin = (forward_kinematics(m, state), geometric_jacobian(m, state))

    for level in stack.levels():
        entries = stack.at_level(level)
        beta = LIMIT_DAMPER_BETA
        rows = []
        weights = []
        for t, p in entries:
            if t.kind == "joint_limit_guard":
                beta = min(beta, t.gain)  # guards can only tighten the damper
                weights.append(p.soft_weight)
                continue
            J, edot = task_error(m, t, state, sensors, kin=kin)
            rows.append((J, edot, p.soft_weight))
            weights.append(p.soft_weight)

        mean_w = float(np.mean(weights)) if weights else 1.0
        H = stack.regularization * mean_w * np.eye(n)
        g = np.zeros(n)
        for J, edot, w in rows:
            H = H + w * (J.T @ J)
            g = g - w * (J.T @ edot)

        lo_lvl, hi_lvl = _velocity_bounds(state, dt, beta) if beta != LIMIT_DAMPER_BETA else (lo, hi)
        A_eq = np.vstack(lock_rows) if lock_rows else None
        b_eq = np.asarray(lock_rhs) if lock_rhs else None
        problem = QpProblem(H, g, A_eq=A_eq, b_eq=b_eq, bounds=(lo_lvl, hi_lvl))
        sol = solve_qp(problem, x0=qdot)
        solves.append(LevelSolve(level, sol.x, sol.status))
        if sol.status != "optimal":
            return ResolveResult(qdot, solves, failed_level=level)
        qdot = sol.x
        for J, edot, _ in rows:
            for a in J:
                # orthogonalize (twice, for numerical hygiene); rows already
                # spanned carry no new lock and are dropped
                a_perp = a.copy()
                for _ in range(2):
                    for b in lock_rows:
                        a_perp -= (b @ a_perp) * b
                norm = np.linalg.norm(a_perp)
                if norm > 1e-10 * max(1.0, np.linalg.norm(a)):
                    u = a_perp / norm
                    lock_rows.append(u)
                    lock_rhs.append(float(u @ qdot))

    return ResolveResult(qdot, solves)


def resolve(
    m: Manipulator,
    stack: TaskStack,
    state: JointConfig,
    sensors: SensorSnapshot | None = None,
    dt: float = CONTROL_DT,
) -> np.ndarray:
    """Joint-velocity command honoring the hierarchy and all limits."""
    return resolve_detailed(m, stack, state, sensors, dt).qdot


def level_residuals(
    m: Manipulator,
    stack: TaskStack,
    state: JointConfig,
    qdot: np.ndarray,
    sensors: SensorSnapshot | None = None,
) -> dict[int, list[np.ndarray]]:
    """Per-task velocity residuals J qdot - edot*, grouped by level."""
    out: dict[int, list[np.ndarray]] = {}
    for t, p in stack.tasks:
        if t.kind == "joint_limit_guard":
            continue
        J, edot = task_error(m, t, state, sensors)
        out.setdefault(p.hard_level, []).append(J @ qdot - edot)
    return out
