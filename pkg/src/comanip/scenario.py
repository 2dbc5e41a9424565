"""World model and the collaboration state machine.

One fixed-step loop drives everything: a scripted (or interactive) human
grips the marker from the bottom, the robot hovers 40 cm above the active
wrist, recognizes the cap, grasps it from its centroid, lifts it 20 cm,
holds while the human pulls the marker free, releases the cap on an open
palm, and returns home. Identical (config, seed, script) inputs produce a
byte-identical episode log.
"""

from __future__ import annotations

import json
import threading
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from comanip.config import RunConfig
from comanip.geometry import (
    FrameTransform,
    Pose,
    apply_transform,
    apply_transform_points,
    quat_from_axis_angle,
)
from comanip.intent import (
    GestureDebouncer,
    GestureEvent,
    Skeleton,
    classify_gesture,
    neutral_skeleton,
)
from comanip.kinematics import (
    JointConfig,
    Manipulator,
    default_arm,
    default_joint_config,
    forward_kinematics,
)
from comanip.tactile import (
    ContactForce,
    FrictionModel,
    GripCommand,
    ShallowNet,
    deformation_to_force,
    modulate_grip,
    sense,
    train_default_net,
)
from comanip.tasks import Priority, TaskSpec, TaskStack, resolve_detailed
from comanip.vision import (
    CAP_HEIGHT,
    CAP_RADIUS,
    LABEL_CAP,
    MARKER_HEIGHT,
    MARKER_RADIUS,
    PointCloud,
    SvmModel,
    _cylinder_points,
    classify,
    cluster_objects,
    estimate_pose,
    extract_features,
    ransac_plane,
    split_cluster_at_height,
    svm_training_set,
)

PHASES = ("Idle", "PreGrasp", "Approach", "Grasp", "Lift", "Hold", "Release", "Home")

ALLOWED_TRANSITIONS = {
    "Idle": {"PreGrasp"},
    "PreGrasp": {"Approach", "Home"},
    "Approach": {"Grasp"},
    "Grasp": {"Lift"},
    "Lift": {"Hold"},
    "Hold": {"Release", "Home"},
    "Release": {"Home"},
    "Home": set(),
}

GRIPPER_OPEN = 0.08  # m aperture
GRIPPER_CLOSE_SPEED = 0.4  # m/s
EE_DOWN_ORIENTATION = quat_from_axis_angle([1.0, 0.0, 0.0], np.pi)  # tool z down

TRACK_CAM = FrameTransform(
    quat_from_axis_angle([0.0, 0.0, 1.0], np.pi), np.array([1.3, 0.0, 0.55]), "track_cam", "base"
)
DETECT_CAM = FrameTransform(
    quat_from_axis_angle([0.0, 0.0, 1.0], np.pi / 2), np.array([0.6, -0.7, 0.3]), "detect_cam", "base"
)


@dataclass
class Phase:
    name: str
    entry_time: float = 0.0

    def __post_init__(self):
        if self.name not in PHASES:
            raise ValueError(f"unknown phase {self.name!r}")


@dataclass
class HumanAction:
    time: float
    kind: str  # grip_bottom | pull_down | open_palm

    def __post_init__(self):
        if self.kind not in ("grip_bottom", "pull_down", "open_palm"):
            raise ValueError(f"unknown human action {self.kind!r}")


@dataclass
class HumanModel:
    mode: str = "scripted"  # scripted | interactive
    script: list[HumanAction] = field(default_factory=list)
    pull_force: float = 8.0  # N

    def __post_init__(self):
        if self.mode not in ("scripted", "interactive"):
            raise ValueError("mode must be scripted or interactive")
        times = [a.time for a in self.script]
        if times != sorted(times):
            raise ValueError("scripted actions must be time-ordered")


def reference_script() -> list[HumanAction]:
    """The CI storyboard: grip early, pull once the robot holds, then open."""
    return [
        HumanAction(0.5, "grip_bottom"),
        HumanAction(8.0, "pull_down"),
        HumanAction(11.0, "open_palm"),
    ]


def reference_human(pull_force: float = 8.0) -> HumanModel:
    return HumanModel("scripted", reference_script(), pull_force)


@dataclass
class WorldState:
    robot: JointConfig
    ee_pose: Pose
    gripper_aperture: float
    grip_command: GripCommand
    cap_pose: Pose
    marker_pose: Pose
    cap_grasped: bool = False
    marker_held_by_human: bool = True
    marker_attached_to_cap: bool = True
    marker_detached: bool = False
    grasp_lost: bool = False
    slide_total: float = 0.0
    pull_sustain_s: float = 0.0
    slip_events: int = 0
    sliding: bool = False
    human_pull: float = 0.0
    time: float = 0.0
    tick: int = 0
    # latest published sensor values
    cap_hypothesis: dict | None = None
    tactile_true: ContactForce = field(default_factory=lambda: ContactForce(0.0, (0.0, 0.0)))
    tactile_estimate: ContactForce = field(default_factory=lambda: ContactForce(0.0, (0.0, 0.0)))
    targets: dict = field(default_factory=dict)
    grasp_height: float = 0.0
    contact: bool = False


def _marker_from_cap(cap: Pose) -> Pose:
    return Pose(cap.position - np.array([0.0, 0.0, (CAP_HEIGHT + MARKER_HEIGHT) / 2]))


def _cap_from_marker(marker: Pose) -> Pose:
    return Pose(marker.position + np.array([0.0, 0.0, (CAP_HEIGHT + MARKER_HEIGHT) / 2]))


def marker_bottom(marker: Pose) -> np.ndarray:
    return marker.position - np.array([0.0, 0.0, MARKER_HEIGHT / 2])


def initial_world(config: RunConfig, arm: Manipulator) -> WorldState:
    q = np.asarray(config.home_posture, dtype=float)
    robot = default_joint_config(q) if arm.n == 7 else JointConfig(
        q, np.tile([-2.9, 2.9], (arm.n, 1)), np.full(arm.n, 1.5)
    )
    marker = Pose(np.asarray(config.marker_initial, dtype=float))
    return WorldState(
        robot=robot,
        ee_pose=forward_kinematics(arm, robot),
        gripper_aperture=GRIPPER_OPEN,
        grip_command=GripCommand(0.0),
        cap_pose=_cap_from_marker(marker),
        marker_pose=marker,
    )


# --- finite-state machine ---


def _build_stack(phase_name: str, world: WorldState, config: RunConfig) -> TaskStack:
    posture = (
        TaskSpec("posture", np.asarray(config.home_posture, dtype=float), gain=config.posture_gain),
        Priority(1),
    )
    orientation = (
        TaskSpec("cartesian_orientation", EE_DOWN_ORIENTATION, gain=config.orientation_gain),
        Priority(0, config.orientation_weight),
    )

    def reach(target_key: str) -> TaskStack:
        target = world.targets[target_key]
        position = (
            TaskSpec("cartesian_position", np.asarray(target, dtype=float), gain=config.cartesian_gain),
            Priority(0, 1.0),
        )
        return TaskStack([position, orientation, posture], config.stack_regularization)

    if phase_name == "Idle" or phase_name == "Home":
        return TaskStack(
            [(TaskSpec("posture", np.asarray(config.home_posture, dtype=float), gain=config.posture_gain), Priority(0))],
            config.stack_regularization,
        )
    if phase_name == "PreGrasp":
        return reach("pregrasp")
    if phase_name == "Approach":
        return reach("approach")
    if phase_name == "Grasp":
        return reach("grasp")
    # Lift, Hold, Release all hold the lift target
    return reach("lift")


def step(
    world: WorldState,
    phase: Phase,
    events: list[GestureEvent],
    dt: float,
    config: RunConfig,
    log: list | None = None,
) -> tuple[WorldState, Phase, TaskStack]:
    """One FSM evaluation: transition if triggered, emit the tick's stack.

    Mutates and returns `world` (the episode loop owns the single copy).
    """
    t = world.time

    def note(msg: str) -> None:
        if log is not None:
            log.append({"t": t, "note": msg})

    def transition(name: str) -> Phase:
        if name not in ALLOWED_TRANSITIONS[phase.name]:
            note(f"invalid transition {phase.name}->{name} ignored")
            return phase
        return Phase(name, t)

    new_phase = phase
    for ev in events:
        if ev.kind == "grip_bottom" and phase.name == "Idle":
            world.targets["pregrasp"] = ev.wrist_pose + np.array([0.0, 0.0, config.pregrasp_offset])
            world.targets["pregrasp_wrist"] = ev.wrist_pose.copy()
            new_phase = transition("PreGrasp")
        elif ev.kind == "open_palm" and phase.name == "Hold":
            new_phase = transition("Release")
            if new_phase.name == "Release":
                # the object is surrendered deliberately; no longer a grasp
                world.cap_grasped = False
        elif ev.kind in ("grip_bottom", "open_palm"):
            note(f"event {ev.kind} ignored in phase {phase.name}")
        # pull_down carries no transition; it is informational

    if new_phase is phase:
        if phase.name == "PreGrasp":
            hyp = world.cap_hypothesis
            if hyp is not None and hyp["score"] >= config.hypothesis_min_score:
                world.targets["approach"] = np.asarray(hyp["position"], dtype=float)
                new_phase = transition("Approach")
            elif t - phase.entry_time > config.perception_timeout_s:
                note("perception timeout in PreGrasp; aborting")
                new_phase = transition("Home")
        elif phase.name == "Approach":
            hyp = world.cap_hypothesis
            if hyp is not None and hyp["score"] >= config.hypothesis_min_score:
                world.targets["approach"] = np.asarray(hyp["position"], dtype=float)
            err = np.linalg.norm(world.ee_pose.position - world.targets["approach"])
            if err <= config.approach_tolerance:
                world.targets["grasp"] = world.targets["approach"].copy()
                new_phase = transition("Grasp")
        elif phase.name == "Grasp":
            if world.tactile_estimate.normal >= config.grasp_contact_force:
                world.cap_grasped = True
                world.cap_pose = Pose(world.ee_pose.position.copy())
                world.grasp_height = float(world.cap_pose.position[2])
                world.targets["lift"] = world.ee_pose.position + np.array([0.0, 0.0, config.lift_height])
                new_phase = transition("Lift")
        elif phase.name == "Lift":
            risen = float(world.cap_pose.position[2]) - world.grasp_height
            if risen >= config.lift_height - 5e-4:
                new_phase = transition("Hold")
        elif phase.name == "Release":
            if world.gripper_aperture >= GRIPPER_OPEN - 1e-9:
                new_phase = transition("Home")
        elif phase.name == "Hold" and world.grasp_lost:
            note("grasp lost; aborting to Home")
            new_phase = transition("Home")

    return world, new_phase, _build_stack(new_phase.name, world, config)


def slip_dynamics(
    world: WorldState, grip: GripCommand, human_pull: float, dt: float, config: RunConfig
) -> WorldState:
    """Friction-cone contact physics at the gripper pads.

    The tangential load is the held weight plus the transmitted human pull;
    outside the cone the cap slides at a fixed rate until the grasp is
    lost. A sustained pull above the detach threshold while the grasp is
    stable pops the marker off the cap (the task's success event).
    """
    if not world.cap_grasped:
        world.tactile_true = ContactForce(0.0, (0.0, 0.0))
        world.sliding = False
        return world
    weight = config.cap_mass * config.gravity
    if world.marker_attached_to_cap and not world.marker_held_by_human:
        weight += config.marker_mass * config.gravity
    pull = human_pull if world.marker_attached_to_cap else 0.0
    load = weight + pull
    true_force = ContactForce(grip.target_normal_force, (load, 0.0))
    world.tactile_true = true_force

    slipping = load > config.mu * grip.target_normal_force
    world.sliding = slipping
    if slipping:
        world.slip_events += 1
        world.slide_total += config.slide_rate
        world.cap_pose = Pose(world.cap_pose.position - np.array([0.0, 0.0, config.slide_rate]))
        world.pull_sustain_s = 0.0
        if world.slide_total >= config.slide_detach:
            world.cap_grasped = False
            world.grasp_lost = True
        return world

    if world.marker_attached_to_cap and pull >= config.detach_force:
        world.pull_sustain_s += dt
        if world.pull_sustain_s >= config.detach_sustain_s:
            world.marker_attached_to_cap = False
            world.marker_detached = True
    else:
        world.pull_sustain_s = 0.0
    return world


# --- scripted human puppet ---


class HumanPuppet:
    """Plays the (timed or injected) action list as wrist motion, hand
    state, and pull force."""

    def __init__(self, model: HumanModel, config: RunConfig):
        self.model = model
        self.config = config
        self.pending = list(model.script)
        self.hand_state = "neutral"
        self.gripping = False
        self.pull_start: float | None = None
        self.open_palm_at: float | None = None
        self.wrist = np.asarray(config.human_wrist_rest, dtype=float).copy()
        self.detach_time: float | None = None
        self.frozen_marker: np.ndarray | None = None

    def inject(self, kind: str, t: float) -> None:
        self.pending.append(HumanAction(t, kind))

    def update(self, t: float, world: WorldState) -> float:
        """Advance the puppet; returns the current true pull force (N)."""
        while self.pending and self.pending[0].time <= t:
            action = self.pending.pop(0)
            if action.kind == "grip_bottom":
                self.gripping = True
                self.hand_state = "closed"
            elif action.kind == "pull_down":
                self.pull_start = t
            elif action.kind == "open_palm":
                self.hand_state = "open"
                self.gripping = False
                self.open_palm_at = t
                self.frozen_marker = world.marker_pose.position.copy()

        if world.marker_detached and self.detach_time is None:
            self.detach_time = t

        pull = 0.0
        if self.pull_start is not None and not world.marker_detached and world.cap_grasped:
            ramp = min(1.0, (t - self.pull_start) / self.config.pull_ramp_s)
            pull = self.model.pull_force * ramp

        # wrist placement
        if self.gripping:
            base = marker_bottom(world.marker_pose)
            descent = 0.0
            if self.pull_start is not None and not world.marker_detached:
                descent = min(0.05, 0.3 * (t - self.pull_start))
            if world.marker_detached and self.detach_time is not None:
                descent = min(0.10, 0.3 * (t - self.detach_time))
            self.wrist = base - np.array([0.0, 0.0, descent])
        world.human_pull = pull
        return pull

    def marker_follow(self, world: WorldState) -> None:
        """After detach the marker rides with the gripping hand."""
        if not world.marker_attached_to_cap and world.marker_held_by_human:
            if self.frozen_marker is not None:
                world.marker_pose = Pose(self.frozen_marker)
            elif self.gripping:
                world.marker_pose = Pose(self.wrist + np.array([0.0, 0.0, MARKER_HEIGHT / 2]))

    def skeleton(self, t: float, rng: np.random.Generator) -> Skeleton:
        wrist_cam = apply_transform(TRACK_CAM.inverse(), self.wrist)
        rest_cam = apply_transform(
            TRACK_CAM.inverse(), np.asarray(self.config.human_wrist_rest, dtype=float) + np.array([0.0, -0.3, 0.0])
        )
        return neutral_skeleton(
            t, right_wrist=wrist_cam, left_wrist=rest_cam, hand_state=self.hand_state
        )


# --- perception adapters ---


def build_detection_cloud(world: WorldState, config: RunConfig, rng: np.random.Generator) -> PointCloud:
    n_plane = 600
    n_out = 50
    plane_pts = np.column_stack(
        [rng.uniform(0.3, 0.9, n_plane), rng.uniform(-0.35, 0.35, n_plane), np.zeros(n_plane)]
    )
    cap_pts = _cylinder_points(rng, world.cap_pose.position, CAP_RADIUS, CAP_HEIGHT, 300)
    marker_pts = _cylinder_points(rng, world.marker_pose.position, MARKER_RADIUS, MARKER_HEIGHT, 300)
    outliers = np.column_stack(
        [rng.uniform(0.3, 0.9, n_out), rng.uniform(-0.35, 0.35, n_out), rng.uniform(0.05, 0.6, n_out)]
    )
    pts = np.vstack([plane_pts, cap_pts, marker_pts, outliers])
    pts += rng.normal(scale=config.scene_noise_sigma, size=pts.shape)
    return PointCloud(apply_transform_points(DETECT_CAM.inverse(), pts), "detect_cam")


def detect_cap(
    cloud: PointCloud, svm: SvmModel, config: RunConfig, seed: int
) -> dict | None:
    """Best cap hypothesis in the scene, or None.

    The joined cap-marker assembly forms a single Euclidean cluster, so
    clusters noticeably taller than a cap are split one cap-height below
    their top before classification.
    """
    try:
        plane = ransac_plane(cloud, config.ransac_threshold, config.ransac_iterations, seed)
    except ValueError:
        return None
    mask = np.ones(len(cloud), dtype=bool)
    mask[plane.inlier_indices] = False
    rest = PointCloud(cloud.points[mask], cloud.frame)
    best: dict | None = None
    for cluster in cluster_objects(rest, config.cluster_min_points, config.cluster_radius):
        d = plane.distances(cluster.points)
        parts = [cluster]
        if d.max() - d.min() > 1.6 * CAP_HEIGHT:
            top, body = split_cluster_at_height(cluster, plane, CAP_HEIGHT + 0.004)
            parts = [p for p in (top, body) if len(p) >= config.cluster_min_points]
        for part in parts:
            result = classify(svm, extract_features(part, plane))
            if result.label != LABEL_CAP or result.uncertain:
                continue
            hyp = estimate_pose(part, DETECT_CAM)
            cand = {"position": hyp.pose_base.position, "score": result.score}
            if best is None or cand["score"] > best["score"]:
                best = cand
    return best


# --- episode loop ---


@dataclass
class EpisodeLog:
    header: dict
    ticks: list[dict]
    summary: dict

    def to_jsonl(self) -> str:
        lines = [json.dumps({"type": "header", **self.header}, sort_keys=True)]
        lines += [json.dumps({"type": "tick", **t}, sort_keys=True) for t in self.ticks]
        lines.append(json.dumps({"type": "summary", **self.summary}, sort_keys=True))
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl())

    @staticmethod
    def load(path: str | Path) -> "EpisodeLog":
        header, ticks, summary = {}, [], {}
        for line in Path(path).read_text().splitlines():
            if not line.strip():
                continue
            d = json.loads(line)
            kind = d.pop("type")
            if kind == "header":
                header = d
            elif kind == "tick":
                ticks.append(d)
            else:
                summary = d
        return EpisodeLog(header, ticks, summary)


# deterministic training means identical inputs rebuild identical models;
# cache them so repeated in-process runs skip the cost
_MODEL_CACHE: dict[tuple, object] = {}


def _default_svm(seed: int, per_class: int) -> SvmModel:
    key = ("svm", seed, per_class)
    if key not in _MODEL_CACHE:
        X, y = svm_training_set(per_class, seed=seed)
        _MODEL_CACHE[key] = SvmModel(seed=seed).fit(X, y)
    return _MODEL_CACHE[key]


def _default_net(seed: int, n_samples: int, epochs: int) -> ShallowNet:
    key = ("net", seed, n_samples, epochs)
    if key not in _MODEL_CACHE:
        _MODEL_CACHE[key] = train_default_net(seed=seed, n_samples=n_samples, epochs=epochs)
    return _MODEL_CACHE[key]


class Simulation:
    """Owns the world; `tick()` advances exactly one control step.

    External commands (operator gestures, pause, parameter changes) enter
    through a serialized queue and are drained once per tick, at the tick
    boundary, so every mutation happens on the simulation thread.
    """

    def __init__(
        self,
        config: RunConfig,
        human: HumanModel | None = None,
        svm: SvmModel | None = None,
        net: ShallowNet | None = None,
        arm: Manipulator | None = None,
    ):
        self.config = config
        self.arm = arm or (
            Manipulator.from_json(config.manipulator_file) if config.manipulator_file else default_arm()
        )
        self.human = human or reference_human(config.pull_force)
        if svm is None:
            if config.svm_file:
                svm = SvmModel.load(config.svm_file)
            else:
                svm = _default_svm(config.seed + 1, config.svm_train_per_class)
        self.svm = svm
        if net is None:
            if config.tactile_net_file:
                net = ShallowNet.load(config.tactile_net_file)
            else:
                net = _default_net(config.seed + 2, config.tactile_train_samples, config.tactile_epochs)
        self.net = net

        self.world = initial_world(config, self.arm)
        self.phase = Phase("Idle", 0.0)
        self.puppet = HumanPuppet(self.human, config)
        self.friction = FrictionModel(config.mu, config.safety_factor)
        self.rng = np.random.default_rng(config.seed)
        self.debouncer = GestureDebouncer()
        self.window: deque[Skeleton] = deque(maxlen=6)
        self.next_perception_t = 0.0
        self.pending_events: list[GestureEvent] = []
        self.notes: list[dict] = []
        self.ticks: list[dict] = []
        self.milestones: dict[str, float] = {"Idle": 0.0}
        self.injected: list = []
        self._inject_lock = threading.Lock()
        self.paused = False
        self.injected_history: list[dict] = []

    # -- external command entry points (thread-safe) --

    def inject_gesture(self, kind: str) -> None:
        with self._inject_lock:
            self.injected.append(("gesture", kind))

    def set_param(self, name: str, value: float) -> None:
        with self._inject_lock:
            self.injected.append(("set_param", (name, float(value))))

    def _drain_injected(self) -> None:
        with self._inject_lock:
            items, self.injected = self.injected, []
        t = self.world.time
        for kind, payload in items:
            if kind == "gesture":
                self.injected_history.append({"t": t, "gesture": payload})
                self.puppet.inject(payload, t)
                if payload == "open_palm":
                    # the operator's palm is visible immediately
                    ev = GestureEvent("open_palm", self.puppet.wrist.copy(), t)
                    if self.debouncer.accept(ev):
                        self.pending_events.append(ev)
                elif payload == "grip_bottom":
                    ev = GestureEvent("grip_bottom", marker_bottom(self.world.marker_pose), t)
                    if self.debouncer.accept(ev):
                        self.pending_events.append(ev)
            else:
                name, value = payload
                self.injected_history.append({"t": t, "set_param": [name, value]})
                if name == "mu":
                    self.friction = FrictionModel(value, self.friction.safety_factor)
                    self.config = self.config.with_value("mu", str(value))
                elif name == "safety_factor":
                    self.friction = FrictionModel(self.friction.mu, value)
                    self.config = self.config.with_value("safety_factor", str(value))
                elif name == "pull_force":
                    self.human.pull_force = value

    # -- per-tick pipeline --

    def _perceive(self) -> None:
        t = self.world.time
        if t + 1e-12 < self.next_perception_t:
            return
        self.next_perception_t += 1.0 / self.config.perception_hz

        self.window.append(self.puppet.skeleton(t, self.rng))
        if len(self.window) >= 5:
            bottom_cam = apply_transform(TRACK_CAM.inverse(), marker_bottom(self.world.marker_pose))
            centroid_cam = apply_transform(TRACK_CAM.inverse(), self.world.marker_pose.position)
            ev = classify_gesture(list(self.window), centroid_cam, object_bottom=bottom_cam, extrinsics=TRACK_CAM)
            if ev.kind != "none" and self.debouncer.accept(ev):
                self.pending_events.append(ev)

        if self.phase.name in ("PreGrasp", "Approach", "Grasp"):
            cloud = build_detection_cloud(self.world, self.config, self.rng)
            hyp = detect_cap(cloud, self.svm, self.config, seed=int(self.rng.integers(0, 2**31)))
            if hyp is not None:
                self.world.cap_hypothesis = hyp

    def _update_gripper_and_tactile(self, dt: float) -> None:
        world = self.world
        phase = self.phase.name
        prev = world.grip_command

        if phase == "Grasp":
            world.gripper_aperture = max(2 * CAP_RADIUS, world.gripper_aperture - GRIPPER_CLOSE_SPEED * dt)
            closed = world.gripper_aperture <= 2 * CAP_RADIUS + 1e-9
            target = min(prev.target_normal_force + 5.0, self.config.initial_grip_force) if closed else 0.0
            world.grip_command = GripCommand(target)
        elif phase in ("Lift", "Hold"):
            world.grip_command = modulate_grip(world.tactile_estimate, self.friction, prev)
        elif phase == "Release":
            world.grip_command = GripCommand(0.0)
            world.gripper_aperture = min(GRIPPER_OPEN, world.gripper_aperture + GRIPPER_CLOSE_SPEED * dt)
        else:
            world.grip_command = GripCommand(0.0)
            world.gripper_aperture = GRIPPER_OPEN

        world.contact = world.cap_grasped or (
            phase == "Grasp" and world.gripper_aperture <= 2 * CAP_RADIUS + 1e-9
        )

        if world.cap_grasped:
            slip_dynamics(world, world.grip_command, world.human_pull, dt, self.config)
        elif world.contact:
            world.tactile_true = ContactForce(world.grip_command.target_normal_force, (0.0, 0.0))
        else:
            world.tactile_true = ContactForce(0.0, (0.0, 0.0))

        frame = sense(world.tactile_true.normal, world.tactile_true.tangential, rng=self.rng, timestamp=world.time)
        world.tactile_estimate = deformation_to_force(self.net, frame)

    def _integrate(self, stack: TaskStack, dt: float) -> None:
        world = self.world
        result = resolve_detailed(self.arm, stack, world.robot, dt=dt)
        if result.failed_level is not None:
            self.notes.append({"t": world.time, "note": f"level {result.failed_level} infeasible"})
        q = world.robot.q + result.qdot * dt
        world.robot = world.robot.with_q(np.clip(q, world.robot.limits[:, 0], world.robot.limits[:, 1]))
        world.ee_pose = forward_kinematics(self.arm, world.robot)

        if world.cap_grasped:
            world.cap_pose = Pose(world.ee_pose.position - np.array([0.0, 0.0, world.slide_total]))
        if world.marker_attached_to_cap:
            world.marker_pose = _marker_from_cap(world.cap_pose)
        else:
            self.puppet.marker_follow(world)

    def _record(self, events: list[GestureEvent]) -> None:
        w = self.world
        self.ticks.append(
            {
                "tick": w.tick,
                "t": round(w.time, 6),
                "phase": self.phase.name,
                "q": [float(v) for v in w.robot.q],
                "ee": [float(v) for v in w.ee_pose.position],
                "cap": [float(v) for v in w.cap_pose.position],
                "marker": [float(v) for v in w.marker_pose.position],
                "grip": w.grip_command.target_normal_force,
                "aperture": w.gripper_aperture,
                "tactile": {
                    "normal": w.tactile_estimate.normal,
                    "tangential": [float(v) for v in w.tactile_estimate.tangential],
                    "true_normal": w.tactile_true.normal,
                    "true_tangential": [float(v) for v in w.tactile_true.tangential],
                },
                "pull": w.human_pull,
                "slide": w.slide_total,
                "sliding": w.sliding,
                "detached": w.marker_detached,
                "events": [
                    {"kind": e.kind, "wrist": [float(v) for v in e.wrist_pose]} for e in events
                ],
                "targets": {k: [float(v) for v in v3] for k, v3 in w.targets.items()},
            }
        )

    def tick(self) -> None:
        dt = self.config.dt
        world = self.world
        self._drain_injected()
        self.puppet.update(world.time, world)
        self._perceive()
        events, self.pending_events = self.pending_events, []
        world, new_phase, stack = step(world, self.phase, events, dt, self.config, self.notes)
        if new_phase.name != self.phase.name:
            self.milestones[new_phase.name] = new_phase.entry_time
        self.phase = new_phase
        self._integrate(stack, dt)
        self._update_gripper_and_tactile(dt)
        self._record(events)
        world.tick += 1
        world.time = world.tick * dt

    def finished(self) -> bool:
        if self.phase.name != "Home":
            return False
        home = np.asarray(self.config.home_posture, dtype=float)
        return bool(np.max(np.abs(self.world.robot.q - home)) < self.config.settle_tolerance_rad)

    def succeeded(self) -> bool:
        return self.finished() and self.world.marker_detached and not self.world.grasp_lost

    def summary(self, timed_out: bool) -> dict:
        lift_rise = None
        if "Hold" in self.milestones:
            hold_tick = next(t for t in self.ticks if t["phase"] == "Hold")
            lift_rise = hold_tick["cap"][2] - self.world.grasp_height
        return {
            "success": self.succeeded() and not timed_out,
            "timed_out": timed_out,
            "grasp_lost": self.world.grasp_lost,
            "marker_detached": self.world.marker_detached,
            "milestones": {k: round(v, 6) for k, v in self.milestones.items()},
            "final_time": round(self.world.time, 6),
            "max_slide": self.world.slide_total,
            "slip_events": self.world.slip_events,
            "lift_rise": lift_rise,
            "injected": self.injected_history,
        }


def run_episode(
    config: RunConfig,
    seed: int | None = None,
    human: HumanModel | None = None,
    svm: SvmModel | None = None,
    net: ShallowNet | None = None,
) -> EpisodeLog:
    """Deterministic fixed-step episode to completion or timeout."""
    if seed is not None and seed != config.seed:
        config = config.with_value("seed", str(seed))
    sim = Simulation(config, human=human, svm=svm, net=net)
    max_ticks = int(round(config.episode_timeout_s * config.control_hz))
    timed_out = True
    while sim.world.tick < max_ticks:
        sim.tick()
        if sim.finished():
            timed_out = False
            break
    header = {
        "schema_version": 1,
        "config": config.to_dict(),
        "seed": config.seed,
        "script": [{"time": a.time, "kind": a.kind} for a in sim.human.script],
        "pull_force": sim.human.pull_force,
        "mode": sim.human.mode,
    }
    return EpisodeLog(header, sim.ticks, sim.summary(timed_out))
