"""WebSocket state streaming and command handling for the operator console.

One simulation thread owns the world and advances it in real time; client
connections are served from immutable snapshot dicts published once per
tick. Snapshots are coalesced latest-wins at the configured broadcast rate,
except that a phase transition flushes immediately so clients never miss a
storyboard beat. Inbound commands cross a serialized queue and take effect
at the next tick boundary.

Wire schema (schema_version 1), every message a JSON object with "type":
  server -> client:
    {"type": "hello", "schema_version": 1, "params": [...whitelist...]}
    {"type": "snapshot", "schema_version": 1, "data": {...}}
    {"type": "ack", "command": "...", "tick": N}
    {"type": "error", "message": "..."}
  client -> server:
    {"type": "gesture", "payload": {"kind": "grip_bottom|pull_down|open_palm"}}
    {"type": "pause", "payload": {"paused": true}}   (payload optional)
    {"type": "step"}
    {"type": "set_param", "payload": {"name": "mu|safety_factor|pull_force",
                                      "value": <number>}}
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass

import numpy as np
from websockets.sync.server import serve as ws_serve

from comanip.geometry import apply_transform
from comanip.scenario import TRACK_CAM, Simulation

SCHEMA_VERSION = 1
PARAM_WHITELIST = ("mu", "safety_factor", "pull_force")
GESTURE_KINDS = ("grip_bottom", "pull_down", "open_palm")


@dataclass
class StateSnapshot:
    """Immutable per-tick view published to clients."""

    tick: int
    time: float
    phase: str
    q: list
    ee_position: list
    ee_orientation: list
    cap: list
    marker: list
    skeleton: dict
    tactile: dict
    grip: float
    events: list
    paused: bool
    marker_detached: bool

    def to_dict(self) -> dict:
        return {
            "tick": self.tick,
            "time": self.time,
            "phase": self.phase,
            "q": self.q,
            "ee": {"position": self.ee_position, "orientation": self.ee_orientation},
            "objects": {"cap": self.cap, "marker": self.marker},
            "skeleton": self.skeleton,
            "tactile": self.tactile,
            "grip": self.grip,
            "events": self.events,
            "paused": self.paused,
            "marker_detached": self.marker_detached,
        }


def snapshot_from_sim(sim: Simulation, paused: bool) -> StateSnapshot:
    w = sim.world
    last = sim.ticks[-1] if sim.ticks else None
    skel = {"hand_state": sim.puppet.hand_state, "joints": {}}
    if sim.window:
        frame = sim.window[-1]
        skel["joints"] = {
            name: [float(v) for v in apply_transform(TRACK_CAM, pos)]
            for name, pos in frame.joints.items()
        }
    return StateSnapshot(
        tick=w.tick,
        time=round(w.time, 6),
        phase=sim.phase.name,
        q=[float(v) for v in w.robot.q],
        ee_position=[float(v) for v in w.ee_pose.position],
        ee_orientation=[float(v) for v in w.ee_pose.orientation],
        cap=[float(v) for v in w.cap_pose.position],
        marker=[float(v) for v in w.marker_pose.position],
        skeleton=skel,
        tactile={
            "normal": w.tactile_estimate.normal,
            "tangential": [float(v) for v in w.tactile_estimate.tangential],
            "cone_bound": sim.friction.mu * w.tactile_estimate.normal,
            "mu": sim.friction.mu,
            "safety_factor": sim.friction.safety_factor,
        },
        grip=w.grip_command.target_normal_force,
        events=(last or {}).get("events", []),
        paused=paused,
        marker_detached=w.marker_detached,
    )


class SimulationServer:
    """Runs the simulation thread and serves snapshots/commands on a port."""

    def __init__(self, sim: Simulation, port: int, realtime: bool = True):
        self.sim = sim
        self.port = port
        self.realtime = realtime
        self._cond = threading.Condition()
        self._latest: dict | None = None
        self._seq = 0
        self._phase_seq = 0  # bumps on phase change; forces immediate send
        self._paused = False
        self._step_requests = 0
        self._stop = threading.Event()
        self._server = None
        self._threads: list[threading.Thread] = []
        self.bound_port: int | None = None

    # -- simulation thread --

    def _publish(self) -> None:
        snap = snapshot_from_sim(self.sim, self._paused).to_dict()
        with self._cond:
            if self._latest is not None and snap["phase"] != self._latest["phase"]:
                self._phase_seq += 1
            self._latest = snap
            self._seq += 1
            self._cond.notify_all()

    def _sim_loop(self) -> None:
        dt = self.sim.config.dt
        next_t = time.monotonic()
        self._publish()
        while not self._stop.is_set():
            if self._paused:
                do_step = False
                with self._cond:
                    if self._step_requests > 0:
                        self._step_requests -= 1
                        do_step = True
                if do_step:
                    self.sim.tick()
                    self._publish()
                else:
                    time.sleep(0.002)
                next_t = time.monotonic()
                continue
            self.sim.tick()
            self._publish()
            if self.sim.finished():
                break
            if self.realtime:
                next_t += dt
                delay = next_t - time.monotonic()
                if delay > 0:
                    time.sleep(delay)

    # -- per-connection handling --

    def _sender(self, ws) -> None:
        interval = 1.0 / self.sim.config.snapshot_hz
        sent_seq = -1
        sent_phase_seq = -1
        last_send = 0.0
        while not self._stop.is_set():
            with self._cond:
                self._cond.wait_for(lambda: self._seq != sent_seq or self._stop.is_set(), timeout=0.25)
                if self._stop.is_set():
                    return
                if self._seq == sent_seq:
                    continue
                flush = self._phase_seq != sent_phase_seq
                snap = self._latest
                seq = self._seq
                phase_seq = self._phase_seq
            now = time.monotonic()
            if not flush and now - last_send < interval:
                time.sleep(interval - (now - last_send))
                with self._cond:  # latest wins after the nap
                    snap = self._latest
                    seq = self._seq
                    phase_seq = self._phase_seq
            try:
                ws.send(json.dumps({"type": "snapshot", "schema_version": SCHEMA_VERSION, "data": snap}))
            except Exception:
                return
            sent_seq = seq
            sent_phase_seq = phase_seq
            last_send = time.monotonic()

    def _handle_command(self, raw: str) -> dict:
        try:
            msg = json.loads(raw)
        except json.JSONDecodeError:
            return {"type": "error", "message": "malformed JSON"}
        if not isinstance(msg, dict) or "type" not in msg:
            return {"type": "error", "message": "message must be an object with a type"}
        if set(msg) - {"type", "payload"}:
            return {"type": "error", "message": "unexpected top-level keys"}
        kind = msg["type"]
        payload = msg.get("payload")
        if payload is not None and not isinstance(payload, dict):
            return {"type": "error", "message": "payload must be an object"}
        if kind == "gesture":
            if not isinstance(payload, dict) or set(payload) != {"kind"}:
                return {"type": "error", "message": "gesture payload must be exactly {kind}"}
            gesture = payload["kind"]
            if gesture not in GESTURE_KINDS:
                return {"type": "error", "message": f"unknown gesture {gesture!r}"}
            self.sim.inject_gesture(gesture)
            return {"type": "ack", "command": "gesture", "kind": gesture, "tick": self.sim.world.tick}
        if kind == "pause":
            if payload is not None and (set(payload) != {"paused"} or not isinstance(payload["paused"], bool)):
                return {"type": "error", "message": "pause payload must be exactly {paused: bool}"}
            paused = payload["paused"] if payload is not None else True
            with self._cond:
                self._paused = paused
            return {"type": "ack", "command": "pause", "paused": paused, "tick": self.sim.world.tick}
        if kind == "step":
            if payload is not None:
                return {"type": "error", "message": "step takes no payload"}
            with self._cond:
                if not self._paused:
                    return {"type": "error", "message": "step requires a paused simulation"}
                self._step_requests += 1
            return {"type": "ack", "command": "step", "tick": self.sim.world.tick}
        if kind == "set_param":
            if not isinstance(payload, dict) or set(payload) != {"name", "value"}:
                return {"type": "error", "message": "set_param payload must be exactly {name, value}"}
            name = payload["name"]
            if name not in PARAM_WHITELIST:
                return {"type": "error", "message": f"parameter {name!r} not settable"}
            value = payload["value"]
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                return {"type": "error", "message": "value must be a number"}
            value = float(value)
            if value <= 0 or (name == "safety_factor" and value < 1.0):
                return {"type": "error", "message": f"value {value} out of range for {name}"}
            self.sim.set_param(name, value)
            return {"type": "ack", "command": "set_param", "name": name, "value": value, "tick": self.sim.world.tick}
        return {"type": "error", "message": f"unknown command type {kind!r}"}

    def _handler(self, ws) -> None:
        ws.send(json.dumps({"type": "hello", "schema_version": SCHEMA_VERSION, "params": list(PARAM_WHITELIST)}))
        sender = threading.Thread(target=self._sender, args=(ws,), daemon=True)
        sender.start()
        try:
            for raw in ws:
                reply = self._handle_command(raw)
                ws.send(json.dumps(reply))
        except Exception:
            pass  # client went away; the simulation continues

    # -- lifecycle --

    def start(self) -> None:
        self._server = ws_serve(self._handler, "127.0.0.1", self.port)
        self.bound_port = self._server.socket.getsockname()[1]
        sim_thread = threading.Thread(target=self._sim_loop, daemon=True, name="sim")
        srv_thread = threading.Thread(target=self._server.serve_forever, daemon=True, name="ws-server")
        sim_thread.start()
        srv_thread.start()
        self._threads = [sim_thread, srv_thread]

    def wait(self, timeout: float | None = None) -> None:
        self._threads[0].join(timeout)

    def stop(self) -> None:
        self._stop.set()
        with self._cond:
            self._cond.notify_all()
        if self._server is not None:
            self._server.shutdown()
        for t in self._threads:
            t.join(timeout=2.0)


def serve(sim: Simulation, port: int, realtime: bool = True) -> SimulationServer:
    """Start the server; returns the handle (call .stop() to shut down)."""
    server = SimulationServer(sim, port, realtime)
    server.start()
    return server
