import json

import numpy as np
import pytest

from comanip.geometry import Pose, quat_from_axis_angle
from comanip.kinematics import (
    JointConfig,
    Manipulator,
    default_arm,
    default_joint_config,
    forward_kinematics,
    geometric_jacobian,
)
from comanip.tasks import (
    Priority,
    SensorSnapshot,
    StaleSensorError,
    TaskSpec,
    TaskStack,
    UnknownFrameError,
    level_residuals,
    resolve,
    resolve_detailed,
    task_error,
)


def planar_three_link():
    return Manipulator(np.array([[0.4, 0.0, 0.0, 0.0]] * 3))


def cfg(m, q, vel=2.0):
    return JointConfig(np.asarray(q, float), np.tile([-np.pi, np.pi], (m.n, 1)), np.full(m.n, vel))


def test_position_task_zero_error_at_target():
    m = planar_three_link()
    state = cfg(m, [0.1, -0.2, 0.3])
    pose = forward_kinematics(m, state)
    t = TaskSpec("cartesian_position", pose.position, gain=1.0)
    _, edot = task_error(m, t, state)
    assert np.allclose(edot, 0.0, atol=1e-12)


def test_position_task_proportional_law():
    m = planar_three_link()
    state = cfg(m, [0.0, 0.0, 0.0])
    pose = forward_kinematics(m, state)
    t = TaskSpec("cartesian_position", pose.position + np.array([0, 0, 0.1]), gain=1.0)
    _, edot = task_error(m, t, state)
    assert np.allclose(edot, [0.0, 0.0, 0.1], atol=1e-12)


def test_force_task_admittance():
    m = planar_three_link()
    state = cfg(m, [0.0, 0.1, 0.0])
    sensors = SensorSnapshot(tick=5, current_tick=5, measured_force=np.array([0, 0, 4.0]))
    t = TaskSpec("force", np.array([0, 0, 6.0]), gain=0.002)
    _, edot = task_error(m, t, state, sensors)
    assert np.allclose(edot, [0, 0, 0.004], atol=1e-15)


def test_force_task_stale_sensor_rejected():
    m = planar_three_link()
    state = cfg(m, [0.0, 0.1, 0.0])
    sensors = SensorSnapshot(tick=2, current_tick=5, measured_force=np.zeros(3))
    t = TaskSpec("force", np.zeros(3), gain=0.002)
    with pytest.raises(StaleSensorError):
        task_error(m, t, state, sensors)


def test_unknown_frame_rejected():
    m = planar_three_link()
    state = cfg(m, [0.0, 0.0, 0.0])
    t = TaskSpec("cartesian_position", np.zeros(3), gain=1.0, frame="tool")
    with pytest.raises(UnknownFrameError):
        task_error(m, t, state)


def test_orientation_task_rows():
    m = default_arm()
    state = default_joint_config(np.array([0.2, 0.4, -0.1, -1.0, 0.3, 0.9, 0.0]))
    target = quat_from_axis_angle([0, 1, 0], 0.3)
    t = TaskSpec("cartesian_orientation", target, gain=2.0)
    J, edot = task_error(m, t, state)
    assert J.shape == (3, 7)
    assert edot.shape == (3,)


def test_resolve_stationary_at_target():
    m = planar_three_link()
    state = cfg(m, [0.3, -0.4, 0.2])
    pose = forward_kinematics(m, state)
    stack = TaskStack([(TaskSpec("cartesian_position", pose.position, gain=1.0), Priority(0))])
    qdot = resolve(m, stack, state)
    assert np.max(np.abs(qdot)) < 1e-6


def test_resolve_matches_pinv_nullspace_oracle():
    m = planar_three_link()
    state = cfg(m, [0.2, 0.5, -0.3])
    pose = forward_kinematics(m, state)
    target = pose.position + np.array([0.05, -0.03, 0.0])
    posture_goal = np.zeros(3)
    stack = TaskStack(
        [
            (TaskSpec("cartesian_position", target, gain=1.0), Priority(0)),
            (TaskSpec("posture", posture_goal, gain=1.0), Priority(1)),
        ],
        regularization=1e-9,
    )
    qdot = resolve(m, stack, state)

    # oracle: pseudo-inverse plus null-space projector
    J = geometric_jacobian(m, state)[:3]
    xdot = 1.0 * (target - pose.position)
    J_pinv = np.linalg.pinv(J)
    N = np.eye(3) - J_pinv @ J
    oracle = J_pinv @ xdot + N @ (1.0 * (posture_goal - state.q))
    assert np.max(np.abs(qdot - oracle)) < 1e-6


def test_soft_weight_dominance():
    m = planar_three_link()
    state = cfg(m, [0.1, 0.2, 0.3])
    pose = forward_kinematics(m, state)
    heavy_target = pose.position + np.array([0.04, 0.0, 0.0])
    light_target = pose.position + np.array([0.0, 0.08, 0.0])

    both = TaskStack(
        [
            (TaskSpec("cartesian_position", light_target, gain=1.0), Priority(0, 1.0)),
            (TaskSpec("cartesian_position", heavy_target, gain=1.0), Priority(0, 1e6)),
        ]
    )
    alone = TaskStack(
        [(TaskSpec("cartesian_position", heavy_target, gain=1.0), Priority(0, 1e6))]
    )
    assert np.max(np.abs(resolve(m, both, state) - resolve(m, alone, state))) < 1e-3


def test_cascade_preserves_upper_levels():
    m = default_arm()
    rng = np.random.default_rng(21)
    for _ in range(20):
        q = rng.uniform(-1.2, 1.2, 7)
        state = default_joint_config(q)
        pose = forward_kinematics(m, state)
        base = [
            (
                TaskSpec("cartesian_position", pose.position + rng.uniform(-0.05, 0.05, 3), gain=1.0),
                Priority(0),
            ),
            (
                TaskSpec("posture", rng.uniform(-0.5, 0.5, 7), gain=0.5),
                Priority(1),
            ),
        ]
        stack = TaskStack(list(base))
        qdot_before = resolve(m, stack, state)
        res_before = level_residuals(m, stack, state, qdot_before)

        extra = (TaskSpec("posture", rng.uniform(-1.0, 1.0, 7), gain=1.0), Priority(2))
        stack_more = TaskStack(list(base) + [extra])
        qdot_after = resolve(m, stack_more, state)
        res_after = level_residuals(m, stack_more, state, qdot_after)

        for level in (0, 1):
            for ra, rb in zip(res_before[level], res_after[level]):
                assert np.max(np.abs(ra - rb)) < 1e-8


def test_velocity_limits_respected():
    m = planar_three_link()
    state = cfg(m, [0.0, 0.0, 0.0], vel=0.3)
    pose = forward_kinematics(m, state)
    # far target would demand large joint speeds
    stack = TaskStack(
        [(TaskSpec("cartesian_position", pose.position + np.array([1.0, 1.0, 0.0]), gain=5.0), Priority(0))]
    )
    qdot = resolve(m, stack, state)
    assert np.all(np.abs(qdot) <= 0.3 + 1e-12)


def test_limit_damper_near_joint_bound():
    m = planar_three_link()
    n = m.n
    limits = np.tile([-1.0, 1.0], (n, 1))
    q = np.array([0.999, 0.0, 0.0])
    state = JointConfig(q, limits, np.full(n, 2.0))
    pose = forward_kinematics(m, state)
    stack = TaskStack(
        [(TaskSpec("cartesian_position", pose.position + np.array([0.0, 1.0, 0.0]), gain=5.0), Priority(0))]
    )
    qdot = resolve(m, stack, state)
    # damper: qdot_0 <= 0.5 * (1.0 - 0.999) / 0.01 = 0.05
    assert qdot[0] <= 0.05 + 1e-12


def test_weight_scaling_invariance():
    m = planar_three_link()
    state = cfg(m, [0.2, -0.1, 0.4])
    pose = forward_kinematics(m, state)
    t1 = TaskSpec("cartesian_position", pose.position + np.array([0.03, 0.0, 0.0]), gain=1.0)
    t2 = TaskSpec("posture", np.array([0.0, 0.0, 0.0]), gain=1.0)

    def build(scale):
        return TaskStack([(t1, Priority(0, 1.0 * scale)), (t2, Priority(0, 3.0 * scale))])

    q1 = resolve(m, build(1.0), state)
    q2 = resolve(m, build(137.0), state)
    assert np.max(np.abs(q1 - q2)) < 1e-9


def test_stack_validation():
    t = TaskSpec("posture", np.zeros(3), gain=1.0)
    with pytest.raises(ValueError):
        TaskStack([])
    with pytest.raises(ValueError):
        TaskStack([(t, Priority(1))])  # level 0 missing
    with pytest.raises(ValueError):
        TaskSpec("posture", np.zeros(3), gain=-1.0)
    with pytest.raises(ValueError):
        Priority(0, soft_weight=0.0)
    with pytest.raises(ValueError):
        TaskSpec("warp_drive", np.zeros(3), gain=1.0)


def test_stack_from_json(tmp_path):
    entries = [
        {"kind": "cartesian_position", "target": [0.5, 0.0, 0.3], "gain": 1.5, "hard_level": 0, "soft_weight": 2.0},
        {"kind": "posture", "target": [0.0] * 7, "gain": 0.5, "hard_level": 1},
    ]
    path = tmp_path / "stack.json"
    path.write_text(json.dumps(entries))
    stack = TaskStack.from_json(path)
    assert len(stack.tasks) == 2
    assert stack.tasks[0][1].soft_weight == 2.0
    assert stack.tasks[1][1].hard_level == 1


def test_joint_limit_guard_contributes_no_rows():
    m = planar_three_link()
    state = cfg(m, [0.0, 0.0, 0.0])
    J, edot = task_error(m, TaskSpec("joint_limit_guard", None, gain=0.5), state)
    assert J.shape == (0, 3)
    assert edot.size == 0


def test_resolve_detailed_reports_levels():
    m = planar_three_link()
    state = cfg(m, [0.1, 0.1, 0.1])
    pose = forward_kinematics(m, state)
    stack = TaskStack(
        [
            (TaskSpec("cartesian_position", pose.position, gain=1.0), Priority(0)),
            (TaskSpec("posture", np.zeros(3), gain=1.0), Priority(1)),
        ]
    )
    result = resolve_detailed(m, stack, state)
    assert [ls.level for ls in result.levels] == [0, 1]
    assert result.failed_level is None
