"""Sponge-sensor simulation and tactile grip control.

A 4x4 taxel grid reports 3-axis displacements generated by a linear
elastic contact model. A small 3-5-3 network (tanh hidden layer, linear
output) maps grid-mean displacement back to contact force; the friction
cone test and the grip modulator close the loop that keeps a held object
from slipping.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

GRID_SHAPE = (4, 4)
K_NORMAL = 500.0  # N/m
K_TANGENTIAL = 300.0  # N/m
NOISE_SIGMA_MM = 0.02
# linear range of the modeled sponge; covers the full grip envelope
# (40 N normal -> 80 mm at K_NORMAL)
RANGE_MM = 80.0

HIDDEN_UNITS = 5

F_MIN = 1.0  # N
F_MAX = 40.0  # N
RATE_LIMIT = 5.0  # N per control tick


@dataclass
class TactileFrame:
    """Taxel displacements in mm: (4, 4, 3) = normal, shear-x, shear-y."""

    taxels: np.ndarray
    timestamp: float = 0.0

    def __post_init__(self):
        self.taxels = np.asarray(self.taxels, dtype=float).reshape(*GRID_SHAPE, 3)
        if np.max(np.abs(self.taxels), initial=0.0) > RANGE_MM + 1e-9:
            raise ValueError(f"taxel displacement outside +-{RANGE_MM} mm range")

    def grid_mean(self) -> np.ndarray:
        return self.taxels.mean(axis=(0, 1))

    @staticmethod
    def zero(timestamp: float = 0.0) -> "TactileFrame":
        return TactileFrame(np.zeros((*GRID_SHAPE, 3)), timestamp)


@dataclass
class ContactForce:
    normal: float  # N, >= 0
    tangential: np.ndarray  # (2,) N

    def __post_init__(self):
        self.tangential = np.asarray(self.tangential, dtype=float).reshape(2)
        if not (np.isfinite(self.normal) and np.all(np.isfinite(self.tangential))):
            raise ValueError("contact force must be finite")
        if self.normal < 0:
            raise ValueError("normal force must be >= 0")

    def tangential_magnitude(self) -> float:
        return float(np.linalg.norm(self.tangential))


@dataclass
class FrictionModel:
    mu: float = 0.5
    safety_factor: float = 1.5

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        if self.safety_factor < 1.0:
            raise ValueError("safety factor must be >= 1")


@dataclass
class GripCommand:
    target_normal_force: float

    def __post_init__(self):
        if not 0.0 <= self.target_normal_force <= F_MAX:
            raise ValueError(f"grip command outside [0, {F_MAX}] N")


def sense(
    normal: float,
    tangential,
    rng: np.random.Generator | None = None,
    noise_sigma_mm: float = NOISE_SIGMA_MM,
    timestamp: float = 0.0,
) -> TactileFrame:
    """Elastic taxel response: displacement = force / stiffness, plus noise.

    Pass rng=None (or noise_sigma_mm=0) for the noise-free response.
    """
    tangential = np.asarray(tangential, dtype=float).reshape(2)
    if not (np.isfinite(normal) and np.all(np.isfinite(tangential))):
        raise ValueError("contact forces must be finite")
    mean_mm = np.array(
        [
            1000.0 * normal / K_NORMAL,
            1000.0 * tangential[0] / K_TANGENTIAL,
            1000.0 * tangential[1] / K_TANGENTIAL,
        ]
    )
    taxels = np.broadcast_to(mean_mm, (*GRID_SHAPE, 3)).copy()
    if rng is not None and noise_sigma_mm > 0.0:
        taxels += rng.normal(scale=noise_sigma_mm, size=taxels.shape)
    return TactileFrame(np.clip(taxels, -RANGE_MM, RANGE_MM), timestamp)


class UntrainedNetworkError(RuntimeError):
    pass


@dataclass
class ShallowNet:
    """3-input, 5-hidden (tanh), 3-output force regressor.

    Inputs and targets are standardized with training-set statistics; the
    zero_offset subtraction pins predict(zero frame) to exactly zero.
    """

    w1: np.ndarray = field(default_factory=lambda: np.zeros((3, HIDDEN_UNITS)))
    b1: np.ndarray = field(default_factory=lambda: np.zeros(HIDDEN_UNITS))
    w2: np.ndarray = field(default_factory=lambda: np.zeros((HIDDEN_UNITS, 3)))
    b2: np.ndarray = field(default_factory=lambda: np.zeros(3))
    zero_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    in_center: np.ndarray = field(default_factory=lambda: np.zeros(3))
    in_scale: np.ndarray = field(default_factory=lambda: np.ones(3))
    out_center: np.ndarray = field(default_factory=lambda: np.zeros(3))
    out_scale: np.ndarray = field(default_factory=lambda: np.ones(3))
    epochs: int = 5000
    learning_rate: float = 0.2  # 0.01 underfits this loss; see training notes
    seed: int = 0
    trained: bool = False

    def get_params(self) -> dict:
        return {"epochs": self.epochs, "learning_rate": self.learning_rate, "seed": self.seed}

    # --- flat parameter vector helpers (shared by training and FD checks) ---

    def pack(self) -> np.ndarray:
        return np.concatenate([self.w1.ravel(), self.b1, self.w2.ravel(), self.b2])

    def unpack(self, theta: np.ndarray) -> None:
        h = HIDDEN_UNITS
        i = 0
        self.w1 = theta[i : i + 3 * h].reshape(3, h).copy()
        i += 3 * h
        self.b1 = theta[i : i + h].copy()
        i += h
        self.w2 = theta[i : i + 3 * h].reshape(h, 3).copy()
        i += 3 * h
        self.b2 = theta[i : i + 3].copy()

    def _forward_std(self, Xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        hidden = np.tanh(Xs @ self.w1 + self.b1)
        return hidden, hidden @ self.w2 + self.b2

    def loss_and_grad(self, theta: np.ndarray, Xs: np.ndarray, Ys: np.ndarray) -> tuple[float, np.ndarray]:
        """Mean squared error over standardized data and its gradient."""
        self.unpack(theta)
        n = Xs.shape[0]
        hidden, out = self._forward_std(Xs)
        diff = out - Ys
        loss = float(np.mean(diff**2))
        d_out = 2.0 * diff / (n * Ys.shape[1])
        g_w2 = hidden.T @ d_out
        g_b2 = d_out.sum(axis=0)
        d_hidden = (d_out @ self.w2.T) * (1.0 - hidden**2)
        g_w1 = Xs.T @ d_hidden
        g_b1 = d_hidden.sum(axis=0)
        return loss, np.concatenate([g_w1.ravel(), g_b1, g_w2.ravel(), g_b2])

    def fit(self, X_mm: np.ndarray, Y_force: np.ndarray) -> "ShallowNet":
        """Full-batch gradient descent; deterministic for a fixed seed."""
        X_mm = np.asarray(X_mm, dtype=float)
        Y_force = np.asarray(Y_force, dtype=float)
        self.in_center = X_mm.mean(axis=0)
        self.in_scale = np.where(X_mm.std(axis=0) > 1e-12, X_mm.std(axis=0), 1.0)
        self.out_center = Y_force.mean(axis=0)
        self.out_scale = np.where(Y_force.std(axis=0) > 1e-12, Y_force.std(axis=0), 1.0)
        Xs = (X_mm - self.in_center) / self.in_scale
        Ys = (Y_force - self.out_center) / self.out_scale

        rng = np.random.default_rng(self.seed)
        theta = 0.1 * rng.standard_normal(3 * HIDDEN_UNITS + HIDDEN_UNITS + HIDDEN_UNITS * 3 + 3)
        for _ in range(self.epochs):
            _, grad = self.loss_and_grad(theta, Xs, Ys)
            theta = theta - self.learning_rate * grad
        self.unpack(theta)
        self.trained = True
        self.zero_offset = np.zeros(3)
        self.zero_offset = self._predict_mean_mm(np.zeros(3))
        return self

    def _predict_mean_mm(self, mean_mm: np.ndarray) -> np.ndarray:
        xs = (mean_mm - self.in_center) / self.in_scale
        _, out = self._forward_std(xs[None, :])
        return out[0] * self.out_scale + self.out_center - self.zero_offset

    def predict(self, frame: TactileFrame) -> np.ndarray:
        if not self.trained:
            raise UntrainedNetworkError("train or load the network first")
        return self._predict_mean_mm(frame.grid_mean())

    def to_dict(self) -> dict:
        return {
            "w1": self.w1.tolist(),
            "b1": self.b1.tolist(),
            "w2": self.w2.tolist(),
            "b2": self.b2.tolist(),
            "zero_offset": self.zero_offset.tolist(),
            "in_center": self.in_center.tolist(),
            "in_scale": self.in_scale.tolist(),
            "out_center": self.out_center.tolist(),
            "out_scale": self.out_scale.tolist(),
            "training": self.get_params(),
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @staticmethod
    def from_dict(d: dict) -> "ShallowNet":
        t = d.get("training", {})
        net = ShallowNet(
            np.array(d["w1"], dtype=float),
            np.array(d["b1"], dtype=float),
            np.array(d["w2"], dtype=float),
            np.array(d["b2"], dtype=float),
            np.array(d["zero_offset"], dtype=float),
            np.array(d["in_center"], dtype=float),
            np.array(d["in_scale"], dtype=float),
            np.array(d["out_center"], dtype=float),
            np.array(d["out_scale"], dtype=float),
            epochs=int(t.get("epochs", 5000)),
            learning_rate=float(t.get("learning_rate", 0.01)),
            seed=int(t.get("seed", 0)),
        )
        net.trained = True
        return net

    @staticmethod
    def load(path: str | Path) -> "ShallowNet":
        return ShallowNet.from_dict(json.loads(Path(path).read_text()))


def deformation_to_force(net: ShallowNet, frame: TactileFrame) -> ContactForce:
    """Force estimate from one tactile frame; exact zero for a zero frame."""
    y = net.predict(frame)
    return ContactForce(max(float(y[0]), 0.0), y[1:])


def training_set(
    n: int, seed: int, normal_range=(0.0, 20.0), shear_range=(-8.0, 8.0), noise: bool = True
) -> tuple[np.ndarray, np.ndarray]:
    """Sensed (grid-mean mm, force) pairs over the training force envelope."""
    rng = np.random.default_rng(seed)
    X = np.empty((n, 3))
    Y = np.empty((n, 3))
    for i in range(n):
        f_n = rng.uniform(*normal_range)
        f_t = rng.uniform(shear_range[0], shear_range[1], 2)
        frame = sense(f_n, f_t, rng=rng if noise else None)
        X[i] = frame.grid_mean()
        Y[i] = [f_n, f_t[0], f_t[1]]
    return X, Y


def train_default_net(seed: int = 0, n_samples: int = 2000, epochs: int = 5000) -> ShallowNet:
    X, Y = training_set(n_samples, seed)
    return ShallowNet(seed=seed, epochs=epochs).fit(X, Y)


def slip_check(f: ContactForce, fm: FrictionModel) -> str:
    """"slipping" iff the tangential load leaves the (closed) friction cone."""
    return "slipping" if f.tangential_magnitude() > fm.mu * f.normal else "stable"


def modulate_grip(f: ContactForce, fm: FrictionModel, prev: GripCommand) -> GripCommand:
    """Grip setpoint with cone headroom.

    Increases are rate-limited to 5 N per tick so the gripper never snaps
    shut; decreases apply immediately (the demand already carries the
    safety margin, and a lower demand means the load has dropped).
    """
    demand = fm.safety_factor * f.tangential_magnitude() / fm.mu
    target = float(np.clip(demand, F_MIN, F_MAX))
    if target > prev.target_normal_force + RATE_LIMIT:
        target = prev.target_normal_force + RATE_LIMIT
    return GripCommand(target)
