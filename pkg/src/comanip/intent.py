"""Simulated tracking-camera stream: 18-joint skeletons and gesture events.

The joint layout follows the common 18-keypoint pose convention. Skeletons
carry an explicit hand_state channel: the keypoint set has no finger
joints, so palm open/closed cannot be derived from it and is instead set
directly by the scripted human model or the operator console.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from comanip.geometry import FrameTransform, apply_transform

JOINT_NAMES = (
    "nose",
    "neck",
    "right_shoulder",
    "right_elbow",
    "right_wrist",
    "left_shoulder",
    "left_elbow",
    "left_wrist",
    "right_hip",
    "right_knee",
    "right_ankle",
    "left_hip",
    "left_knee",
    "left_ankle",
    "right_eye",
    "left_eye",
    "right_ear",
    "left_ear",
)

HAND_STATES = ("open", "closed", "neutral")

WRIST_CONFIDENCE_MIN = 0.3
GRIP_PROXIMITY = 0.06  # m
PULL_DESCENT = 0.04  # m
DWELL_FRAMES = 5
DEBOUNCE_S = 0.5

GESTURE_KINDS = ("grip_bottom", "pull_down", "open_palm", "none")


class NoConfidentWristError(RuntimeError):
    pass


class WindowTooShortError(ValueError):
    pass


@dataclass
class Skeleton:
    """One tracking-camera frame: 18 named joints with confidences."""

    joints: dict[str, np.ndarray]  # name -> 3-vector, camera frame
    confidence: dict[str, float]
    timestamp: float
    hand_state: str = "neutral"

    def __post_init__(self):
        if set(self.joints) != set(JOINT_NAMES):
            raise ValueError("skeleton must carry exactly the 18 canonical joints")
        self.joints = {k: np.asarray(v, dtype=float).reshape(3) for k, v in self.joints.items()}
        for name, c in self.confidence.items():
            if not 0.0 <= c <= 1.0:
                raise ValueError(f"confidence for {name} outside [0, 1]")
        if self.hand_state not in HAND_STATES:
            raise ValueError(f"unknown hand_state {self.hand_state!r}")

    def to_json(self) -> str:
        return json.dumps(
            {
                "timestamp": self.timestamp,
                "hand_state": self.hand_state,
                "joints": {
                    k: {"position": self.joints[k].tolist(), "confidence": self.confidence[k]}
                    for k in JOINT_NAMES
                },
            }
        )

    @staticmethod
    def from_json(text: str) -> "Skeleton":
        d = json.loads(text)
        joints = {k: np.array(v["position"], dtype=float) for k, v in d["joints"].items()}
        conf = {k: float(v["confidence"]) for k, v in d["joints"].items()}
        return Skeleton(joints, conf, float(d["timestamp"]), d.get("hand_state", "neutral"))


def read_skeleton_jsonl(path: str | Path) -> list[Skeleton]:
    return [Skeleton.from_json(line) for line in Path(path).read_text().splitlines() if line.strip()]


def write_skeleton_jsonl(frames: list[Skeleton], path: str | Path) -> None:
    Path(path).write_text("".join(f.to_json() + "\n" for f in frames))


@dataclass
class GestureEvent:
    kind: str
    wrist_pose: np.ndarray | None  # base frame; None for kind="none"
    timestamp: float

    def __post_init__(self):
        if self.kind not in GESTURE_KINDS:
            raise ValueError(f"unknown gesture kind {self.kind!r}")
        if self.kind != "none":
            self.wrist_pose = np.asarray(self.wrist_pose, dtype=float).reshape(3)
            if not np.all(np.isfinite(self.wrist_pose)):
                raise ValueError("wrist pose must be finite")


def _confident_wrists(s: Skeleton) -> dict[str, np.ndarray]:
    out = {}
    for side in ("right_wrist", "left_wrist"):
        if s.confidence.get(side, 0.0) >= WRIST_CONFIDENCE_MIN:
            out[side] = s.joints[side]
    return out


def active_wrist(
    s: Skeleton, object_centroid, extrinsics: FrameTransform | None = None
) -> np.ndarray:
    """Wrist nearer the object (camera-frame comparison), in the base frame.

    Ties go to the right wrist. Both wrists below the confidence gate is an
    error: the tracker has lost the hands.
    """
    wrists = _confident_wrists(s)
    if not wrists:
        raise NoConfidentWristError("no wrist with confidence >= 0.3")
    centroid = np.asarray(object_centroid, dtype=float).reshape(3)
    d_right = np.linalg.norm(wrists["right_wrist"] - centroid) if "right_wrist" in wrists else np.inf
    d_left = np.linalg.norm(wrists["left_wrist"] - centroid) if "left_wrist" in wrists else np.inf
    chosen = wrists["right_wrist"] if d_right <= d_left else wrists["left_wrist"]
    if extrinsics is None:
        return chosen.copy()
    return apply_transform(extrinsics, chosen)


def classify_gesture(
    history: list[Skeleton],
    object_centroid,
    object_bottom=None,
    extrinsics: FrameTransform | None = None,
) -> GestureEvent:
    """Single gesture for a sliding window of skeleton frames.

    grip_bottom: active wrist within 6 cm of the object bottom with the
    hand closed over the last 5 frames. pull_down: wrist descended >= 4 cm
    across the window while closed. open_palm: hand open for 5 frames.
    Priority when several match: open_palm > pull_down > grip_bottom.
    `object_bottom` defaults to the centroid; both live in the camera frame.
    """
    if len(history) < DWELL_FRAMES:
        raise WindowTooShortError(f"need >= {DWELL_FRAMES} frames, got {len(history)}")
    centroid = np.asarray(object_centroid, dtype=float).reshape(3)
    bottom = centroid if object_bottom is None else np.asarray(object_bottom, dtype=float).reshape(3)
    recent = history[-DWELL_FRAMES:]
    last = history[-1]

    def wrist_of(frame: Skeleton) -> np.ndarray | None:
        try:
            return active_wrist(frame, centroid)
        except NoConfidentWristError:
            return None

    def event(kind: str) -> GestureEvent:
        w = wrist_of(last)
        pose = w if extrinsics is None else apply_transform(extrinsics, w)
        return GestureEvent(kind, pose, last.timestamp)

    if all(f.hand_state == "open" for f in recent) and wrist_of(last) is not None:
        return event("open_palm")

    wrists = [wrist_of(f) for f in history]
    if all(w is not None for w in wrists) and all(f.hand_state == "closed" for f in history):
        # descent along the base-frame vertical, not the camera axis
        first, final = wrists[0], wrists[-1]
        if extrinsics is not None:
            first = apply_transform(extrinsics, first)
            final = apply_transform(extrinsics, final)
        if first[2] - final[2] >= PULL_DESCENT:
            return event("pull_down")

    recent_wrists = [wrist_of(f) for f in recent]
    if (
        all(w is not None for w in recent_wrists)
        and all(f.hand_state == "closed" for f in recent)
        and all(np.linalg.norm(w - bottom) <= GRIP_PROXIMITY for w in recent_wrists)
    ):
        return event("grip_bottom")

    return GestureEvent("none", None, last.timestamp)


class GestureDebouncer:
    """Suppresses duplicate events: no identical kind twice within 0.5 s."""

    def __init__(self, window_s: float = DEBOUNCE_S):
        self.window_s = window_s
        self._last: dict[str, float] = {}

    def accept(self, event: GestureEvent) -> bool:
        if event.kind == "none":
            return False
        t_prev = self._last.get(event.kind)
        if t_prev is not None and event.timestamp - t_prev < self.window_s:
            return False
        self._last[event.kind] = event.timestamp
        return True


def neutral_skeleton(
    timestamp: float,
    right_wrist,
    left_wrist=(0.35, -0.55, -0.1),
    hand_state: str = "neutral",
    frame_noise: float = 0.0,
    rng: np.random.Generator | None = None,
) -> Skeleton:
    """Standing-person skeleton with explicitly placed wrists (camera frame)."""
    base = {
        "nose": (0.0, 0.0, 0.55),
        "neck": (0.0, 0.0, 0.40),
        "right_shoulder": (0.18, 0.0, 0.40),
        "right_elbow": (0.28, 0.0, 0.15),
        "left_shoulder": (-0.18, 0.0, 0.40),
        "left_elbow": (-0.28, 0.0, 0.15),
        "right_hip": (0.10, 0.0, -0.25),
        "right_knee": (0.10, 0.0, -0.65),
        "right_ankle": (0.10, 0.0, -1.05),
        "left_hip": (-0.10, 0.0, -0.25),
        "left_knee": (-0.10, 0.0, -0.65),
        "left_ankle": (-0.10, 0.0, -1.05),
        "right_eye": (0.03, 0.0, 0.58),
        "left_eye": (-0.03, 0.0, 0.58),
        "right_ear": (0.07, 0.0, 0.56),
        "left_ear": (-0.07, 0.0, 0.56),
    }
    joints = {k: np.array(v, dtype=float) for k, v in base.items()}
    joints["right_wrist"] = np.asarray(right_wrist, dtype=float).reshape(3)
    joints["left_wrist"] = np.asarray(left_wrist, dtype=float).reshape(3)
    if frame_noise > 0.0 and rng is not None:
        for k in joints:
            joints[k] = joints[k] + rng.normal(scale=frame_noise, size=3)
    conf = {k: 1.0 for k in JOINT_NAMES}
    return Skeleton(joints, conf, timestamp, hand_state)
