"""Rigid-body math: unit quaternions, poses, twists, and frame transforms.

All sensory observations live in local frames (camera, sensor) and are
re-expressed in the robot base frame before any controller sees them, so
the transform type carries explicit frame identifiers and refuses to act
on data from the wrong frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

QUAT_NORM_TOL = 1e-9


class FrameMismatchError(ValueError):
    """Raised when a transform is applied to data from another frame."""


def _as_vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=float).reshape(3)
    if not np.all(np.isfinite(a)):
        raise ValueError("expected finite 3-vector")
    return a


# --- quaternion helpers (w, x, y, z convention) ---

def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=float).reshape(4)
    n = np.linalg.norm(q)
    if n == 0.0 or not np.isfinite(n):
        raise ValueError("cannot normalize zero/non-finite quaternion")
    return q / n


def quat_multiply(q1, q2) -> np.ndarray:
    w1, x1, y1, z1 = q1
    w2, x2, y2, z2 = q2
    return np.array(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ]
    )


def quat_conjugate(q) -> np.ndarray:
    w, x, y, z = q
    return np.array([w, -x, -y, -z])


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = _as_vec3(axis)
    n = np.linalg.norm(axis)
    if n == 0.0:
        raise ValueError("rotation axis must be nonzero")
    half = 0.5 * angle
    return np.concatenate([[np.cos(half)], np.sin(half) * axis / n])


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = quat_normalize(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_rotate(q, v) -> np.ndarray:
    return quat_to_matrix(q) @ _as_vec3(v)


def quat_from_matrix(R) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    t = np.trace(R)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2
        q = np.array(
            [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
        )
    else:
        i = int(np.argmax(np.diag(R)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(max(R[i, i] - R[j, j] - R[k, k] + 1.0, 0.0)) * 2
        q = np.empty(4)
        q[0] = (R[k, j] - R[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (R[j, i] + R[i, j]) / s
        q[1 + k] = (R[k, i] + R[i, k]) / s
    return quat_normalize(q)


def orientation_error(q_target, q_current) -> np.ndarray:
    """Rotation error as 2 * vector part of the shortest-path error quaternion.

    Smooth near identity; the sign flip keeps the geodesic short.
    """
    q_err = quat_multiply(q_target, quat_conjugate(q_current))
    if q_err[0] < 0.0:
        q_err = -q_err
    return 2.0 * q_err[1:4]


@dataclass(frozen=True)
class Pose:
    """Position plus unit-quaternion orientation."""

    position: np.ndarray
    orientation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))

    def __post_init__(self):
        object.__setattr__(self, "position", _as_vec3(self.position))
        object.__setattr__(self, "orientation", quat_normalize(self.orientation))

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.zeros(3))

    def compose(self, other: "Pose") -> "Pose":
        """This pose followed by `other` expressed in this pose's frame."""
        return Pose(
            self.position + quat_rotate(self.orientation, other.position),
            quat_multiply(self.orientation, other.orientation),
        )

    def inverse(self) -> "Pose":
        q_inv = quat_conjugate(self.orientation)
        return Pose(-quat_rotate(q_inv, self.position), q_inv)

    def transform_point(self, p) -> np.ndarray:
        return self.position + quat_rotate(self.orientation, p)

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = quat_to_matrix(self.orientation)
        T[:3, 3] = self.position
        return T


@dataclass(frozen=True)
class Twist:
    """Task-space velocity: linear (m/s) and angular (rad/s) parts."""

    linear: np.ndarray
    angular: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "linear", _as_vec3(self.linear))
        object.__setattr__(self, "angular", _as_vec3(self.angular))

    @staticmethod
    def zero() -> "Twist":
        return Twist(np.zeros(3), np.zeros(3))

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.linear, self.angular])


@dataclass(frozen=True)
class FrameTransform:
    """Rigid transform re-expressing data from `from_frame` into `to_frame`."""

    rotation: np.ndarray
    translation: np.ndarray
    from_frame: str
    to_frame: str

    def __post_init__(self):
        object.__setattr__(self, "rotation", quat_normalize(self.rotation))
        object.__setattr__(self, "translation", _as_vec3(self.translation))

    @staticmethod
    def identity(frame: str = "base") -> "FrameTransform":
        return FrameTransform(np.array([1.0, 0, 0, 0]), np.zeros(3), frame, frame)

    def inverse(self) -> "FrameTransform":
        q_inv = quat_conjugate(self.rotation)
        return FrameTransform(
            q_inv, -quat_rotate(q_inv, self.translation), self.to_frame, self.from_frame
        )


def apply_transform(t: FrameTransform, p, *, frame: str | None = None):
    """Re-express a Pose or 3-vector from t.from_frame into t.to_frame.

    `frame` optionally declares the frame of a bare 3-vector so mismatches
    are caught; Pose inputs are assumed to be in t.from_frame.
    """
    if frame is not None and frame != t.from_frame:
        raise FrameMismatchError(f"data in frame {frame!r}, transform expects {t.from_frame!r}")
    if isinstance(p, Pose):
        return Pose(
            t.translation + quat_rotate(t.rotation, p.position),
            quat_multiply(t.rotation, p.orientation),
        )
    return t.translation + quat_rotate(t.rotation, _as_vec3(p))


def apply_transform_points(t: FrameTransform, points: np.ndarray) -> np.ndarray:
    """Vectorized apply_transform for an (N, 3) array of points."""
    P = np.asarray(points, dtype=float).reshape(-1, 3)
    return P @ quat_to_matrix(t.rotation).T + t.translation
