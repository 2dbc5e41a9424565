"""Run configuration: every tunable constant of the simulator in one place.

Loadable from JSON, overridable with --set key=value pairs, with the
server port additionally overridable through the COMANIP_PORT variable.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # rates
    control_hz: float = 100.0
    perception_hz: float = 30.0

    # files (optional; defaults are built in code when empty)
    manipulator_file: str = ""
    stack_file: str = ""
    svm_file: str = ""
    tactile_net_file: str = ""

    # RNG
    seed: int = 0

    # scenario geometry (base frame, m)
    marker_initial: tuple = (0.55, 0.0, 0.30)  # marker center, held by the human
    human_wrist_rest: tuple = (0.75, -0.25, 0.25)
    home_posture: tuple = (0.0, 0.5, 0.0, -1.6, 0.0, 1.0, 0.0)

    # scenario numbers
    pregrasp_offset: float = 0.40  # m above the active wrist
    lift_height: float = 0.20  # m
    approach_tolerance: float = 0.005  # m
    grasp_contact_force: float = 2.0  # N
    initial_grip_force: float = 5.0  # N
    perception_timeout_s: float = 5.0
    episode_timeout_s: float = 60.0
    settle_tolerance_rad: float = 0.05

    # masses and slip physics
    cap_mass: float = 0.010  # kg
    marker_mass: float = 0.025  # kg
    gravity: float = 9.81
    detach_force: float = 6.0  # N
    detach_sustain_s: float = 0.3
    slide_rate: float = 0.002  # m per tick while slipping
    slide_detach: float = 0.02  # m of total slide before the grasp is lost

    # grip / friction
    mu: float = 0.5
    safety_factor: float = 1.5

    # human model
    pull_force: float = 8.0  # N
    pull_ramp_s: float = 0.5

    # controller
    cartesian_gain: float = 2.0
    orientation_gain: float = 2.0
    orientation_weight: float = 0.3
    posture_gain: float = 1.0
    stack_regularization: float = 1e-6

    # perception knobs
    ransac_iterations: int = 150
    ransac_threshold: float = 0.005
    cluster_radius: float = 0.03
    cluster_min_points: int = 30
    hypothesis_min_score: float = 0.1
    scene_noise_sigma: float = 0.002
    svm_train_per_class: int = 100
    tactile_train_samples: int = 2000
    tactile_epochs: int = 5000

    # server
    port: int = 8765
    snapshot_hz: float = 30.0

    def __post_init__(self):
        if self.control_hz <= 0 or self.perception_hz <= 0:
            raise ConfigError("rates must be positive")
        if self.control_hz < self.perception_hz:
            raise ConfigError("control rate must be >= perception rate")

    @property
    def dt(self) -> float:
        return 1.0 / self.control_hz

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["marker_initial"] = list(self.marker_initial)
        d["human_wrist_rest"] = list(self.human_wrist_rest)
        d["home_posture"] = list(self.home_posture)
        return d

    @staticmethod
    def from_dict(d: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(RunConfig)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(d)
        for key in ("marker_initial", "human_wrist_rest", "home_posture"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return RunConfig(**kwargs)

    @staticmethod
    def load(path: str | Path | None = None, overrides: list[str] | None = None) -> "RunConfig":
        """Config file, then --set overrides, then the port env var."""
        data: dict = {}
        if path:
            try:
                data = json.loads(Path(path).read_text())
            except FileNotFoundError as e:
                raise ConfigError(f"config file not found: {path}") from e
            except json.JSONDecodeError as e:
                raise ConfigError(f"config file is not valid JSON: {e}") from e
        cfg = RunConfig.from_dict(data)
        for item in overrides or []:
            if "=" not in item:
                raise ConfigError(f"override must look like key=value, got {item!r}")
            key, _, raw = item.partition("=")
            cfg = cfg.with_value(key.strip(), raw.strip())
        env_port = os.environ.get("COMANIP_PORT")
        if env_port is not None:
            cfg = cfg.with_value("port", env_port)
        return cfg

    def with_value(self, key: str, raw: str) -> "RunConfig":
        fields = {f.name: f for f in dataclasses.fields(RunConfig)}
        if key not in fields:
            raise ConfigError(f"unknown config key: {key}")
        current = getattr(self, key)
        try:
            if isinstance(current, tuple):
                value = tuple(json.loads(raw))
            elif isinstance(current, bool):
                value = raw.lower() in ("1", "true", "yes")
            elif isinstance(current, int):
                value = int(raw)
            elif isinstance(current, float):
                value = float(raw)
            else:
                value = raw
        except (ValueError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot parse {raw!r} for key {key}: {e}") from e
        d = self.to_dict()
        d[key] = value
        return RunConfig.from_dict(d)
