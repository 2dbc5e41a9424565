"""Command-line entry points.

Subcommands: run (scripted or interactive episode), replay (determinism
check against a recorded log), train-svm, train-tactile, bench.

Exit codes: 0 success, 2 invalid configuration or arguments, 3 episode
failed or timed out, 4 replay divergence.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from comanip.config import ConfigError, RunConfig
from comanip.kinematics import default_arm, default_joint_config, forward_kinematics
from comanip.qp import QpProblem, solve_qp
from comanip.scenario import (
    EpisodeLog,
    HumanAction,
    HumanModel,
    Simulation,
    reference_human,
    run_episode,
)
from comanip.tactile import ShallowNet, train_default_net, training_set
from comanip.tasks import Priority, TaskSpec, TaskStack, resolve
from comanip.vision import SvmModel, svm_training_set

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FAILED = 3
EXIT_DIVERGED = 4


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="comanip", description="Human-robot co-manipulation simulator")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one episode")
    run.add_argument("--config", help="JSON config file")
    run.add_argument("--seed", type=int, help="override the config seed")
    run.add_argument("--log", default="episode.jsonl", help="episode log output path")
    run.add_argument("--summary", help="write the run summary JSON here too")
    run.add_argument("--interactive", action="store_true", help="serve the operator console")
    run.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")

    rep = sub.add_parser("replay", help="re-run a recorded episode and verify determinism")
    rep.add_argument("log", help="episode log to replay")

    tsvm = sub.add_parser("train-svm", help="train and persist the object classifier")
    tsvm.add_argument("--out", default="svm.json")
    tsvm.add_argument("--seed", type=int, default=1)
    tsvm.add_argument("--per-class", type=int, default=100)

    ttac = sub.add_parser("train-tactile", help="train and persist the tactile force net")
    ttac.add_argument("--out", default="tactile_net.json")
    ttac.add_argument("--seed", type=int, default=2)
    ttac.add_argument("--samples", type=int, default=2000)
    ttac.add_argument("--epochs", type=int, default=5000)

    bench = sub.add_parser("bench", help="controller timing statistics")
    bench.add_argument("--config", help="JSON config file")
    bench.add_argument("--iterations", type=int, default=500)
    return p


def _cmd_run(args) -> int:
    cfg = RunConfig.load(args.config, args.overrides)
    if args.seed is not None:
        cfg = cfg.with_value("seed", str(args.seed))

    if args.interactive:
        from comanip.server import serve

        human = HumanModel("interactive", [], cfg.pull_force)
        sim = Simulation(cfg, human=human)
        server = serve(sim, cfg.port)
        print(f"serving operator console on ws://127.0.0.1:{server.bound_port}", flush=True)
        try:
            server.wait(cfg.episode_timeout_s + 5.0)
        except KeyboardInterrupt:
            pass
        finally:
            server.stop()
        log = EpisodeLog(
            {
                "schema_version": 1,
                "config": cfg.to_dict(),
                "seed": cfg.seed,
                "script": [],
                "pull_force": sim.human.pull_force,
                "mode": "interactive",
            },
            sim.ticks,
            sim.summary(timed_out=not sim.finished()),
        )
    else:
        log = run_episode(cfg, human=reference_human(cfg.pull_force))

    Path(args.log).write_text(log.to_jsonl())
    if args.summary:
        Path(args.summary).write_text(json.dumps(log.summary, sort_keys=True, indent=2) + "\n")
    s = log.summary
    print(
        f"episode: success={s['success']} phases={list(s['milestones'])} "
        f"t={s['final_time']}s slips={s['slip_events']} log={args.log}"
    )
    return EXIT_OK if s["success"] else EXIT_FAILED


def _replay_simulation(log: EpisodeLog) -> EpisodeLog:
    cfg = RunConfig.from_dict(log.header["config"])
    script = [HumanAction(a["time"], a["kind"]) for a in log.header.get("script", [])]
    human = HumanModel("scripted", script, log.header.get("pull_force", cfg.pull_force))
    sim = Simulation(cfg, human=human)
    injections = sorted(log.summary.get("injected", []), key=lambda d: d["t"])
    pending = list(injections)
    n_ticks = len(log.ticks)
    for _ in range(n_ticks):
        t = sim.world.time
        while pending and pending[0]["t"] <= t + 1e-12:
            item = pending.pop(0)
            if "gesture" in item:
                sim.inject_gesture(item["gesture"])
            else:
                name, value = item["set_param"]
                sim.set_param(name, value)
        sim.tick()
    timed_out = bool(log.summary.get("timed_out", False))
    return EpisodeLog(dict(log.header), sim.ticks, sim.summary(timed_out))


def _cmd_replay(args) -> int:
    path = Path(args.log)
    if not path.exists():
        print(f"log not found: {path}", file=sys.stderr)
        return EXIT_CONFIG
    original_text = path.read_text()
    try:
        log = EpisodeLog.load(path)
        replayed = _replay_simulation(log)
    except (KeyError, ConfigError, json.JSONDecodeError) as e:
        print(f"log is unreadable or corrupt: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    replay_text = replayed.to_jsonl()
    if replay_text == original_text:
        print(f"replay ok: {len(replayed.ticks)} ticks reproduced byte-identically")
        return EXIT_OK
    orig_lines = original_text.splitlines()
    new_lines = replay_text.splitlines()
    for i, (a, b) in enumerate(zip(orig_lines, new_lines)):
        if a != b:
            print(f"replay diverged at line {i + 1}:", file=sys.stderr)
            print(f"  recorded: {a[:120]}", file=sys.stderr)
            print(f"  replayed: {b[:120]}", file=sys.stderr)
            return EXIT_DIVERGED
    print(
        f"replay diverged in length: recorded {len(orig_lines)} lines, replayed {len(new_lines)}",
        file=sys.stderr,
    )
    return EXIT_DIVERGED


def _cmd_train_svm(args) -> int:
    X, y = svm_training_set(args.per_class, seed=args.seed)
    svm = SvmModel(seed=args.seed).fit(X, y)
    X_h, y_h = svm_training_set(max(args.per_class // 2, 25), seed=args.seed + 7919)
    acc = float(np.mean(svm.predict(X_h) == y_h))
    svm.save(args.out)
    print(f"svm trained on {len(y)} samples, holdout accuracy {acc:.3f}, saved to {args.out}")
    return EXIT_OK


def _cmd_train_tactile(args) -> int:
    net = train_default_net(seed=args.seed, n_samples=args.samples, epochs=args.epochs)
    X_h, Y_h = training_set(400, seed=args.seed + 7919)
    preds = np.array([net._predict_mean_mm(x) for x in X_h])
    rmse = np.sqrt(np.mean((preds - Y_h) ** 2, axis=0))
    net.save(args.out)
    print(
        f"tactile net trained on {args.samples} samples, holdout RMSE "
        f"[{rmse[0]:.3f}, {rmse[1]:.3f}, {rmse[2]:.3f}] N, saved to {args.out}"
    )
    return EXIT_OK


def _cmd_bench(args) -> int:
    cfg = RunConfig.load(args.config, None)
    arm = default_arm()
    state = default_joint_config(np.array([0.0, 0.5, 0.0, -1.6, 0.0, 1.0, 0.0]))
    pose = forward_kinematics(arm, state)
    stack = TaskStack(
        [
            (TaskSpec("cartesian_position", pose.position + np.array([0.1, 0.05, 0.1]), gain=2.0), Priority(0)),
            (TaskSpec("cartesian_orientation", pose.orientation, gain=2.0), Priority(0, 0.3)),
            (TaskSpec("posture", np.zeros(7), gain=1.0), Priority(1)),
        ]
    )
    times = []
    for _ in range(args.iterations):
        t0 = time.perf_counter()
        resolve(arm, stack, state, dt=cfg.dt)
        times.append((time.perf_counter() - t0) * 1000.0)
    times_ms = np.array(times)

    rng = np.random.default_rng(0)
    qp_times = []
    for _ in range(args.iterations):
        M = rng.normal(size=(7, 7))
        p = QpProblem(M @ M.T + np.eye(7), rng.normal(size=7), bounds=(np.full(7, -1.5), np.full(7, 1.5)))
        t0 = time.perf_counter()
        solve_qp(p)
        qp_times.append((time.perf_counter() - t0) * 1000.0)
    qp_ms = np.array(qp_times)

    print(f"cascade resolve latency over {args.iterations} runs (3 tasks, 2 levels, 7 DOF):")
    print(f"  p50 {np.percentile(times_ms, 50):.3f} ms   p99 {np.percentile(times_ms, 99):.3f} ms")
    print(f"single QP solve latency (n=7, box bounds):")
    print(f"  p50 {np.percentile(qp_ms, 50):.3f} ms   p99 {np.percentile(qp_ms, 99):.3f} ms")
    budget = 1000.0 / cfg.control_hz
    print(f"control budget at {cfg.control_hz:.0f} Hz: {budget:.1f} ms per tick")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code not in (0, None) else 0
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "replay":
            return _cmd_replay(args)
        if args.command == "train-svm":
            return _cmd_train_svm(args)
        if args.command == "train-tactile":
            return _cmd_train_tactile(args)
        if args.command == "bench":
            return _cmd_bench(args)
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
