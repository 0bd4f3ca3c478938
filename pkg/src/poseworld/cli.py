"""Command-line entry point.

Subcommands: rollout (scripted session -> frames + artifacts), eval
(trajectory error table), compare-mapping (integration drift table),
segment (window + memory-clip report), record-replay (digest audit),
serve (streaming session service).
"""

from __future__ import annotations

import argparse
import json
import statistics
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import SessionConfig, apply_overrides, load_config
from .errors import EngineError
from .evaluate import (TwistSamplerConfig, compute_errors, drift_table_csv,
                       format_drift_table, run_drift_experiment)
from .formats import (build_record, frame_digest, read_action_script,
                      read_trajectory, save_record, write_trajectory)
from .memory import select_offline_clips
from .rollout import ErrorEvent, RolloutEngine
from .se3 import Trajectory
from .world import save_png, save_ppm


def _fail(code: str, detail: str, status: int = 2) -> int:
    print(json.dumps({"error": code, "detail": detail}), file=sys.stderr)
    return status


def _load_session_config(args) -> SessionConfig:
    cfg = load_config(args.config) if args.config else SessionConfig()
    if getattr(args, "seed", None) is not None:
        cfg = apply_overrides(cfg, {"seed": args.seed})
    return cfg


def _run_engine(cfg: SessionConfig, inputs) -> tuple:
    engine = RolloutEngine(cfg)
    events = []
    for inp in inputs:
        events.extend(engine.push_action(inp))
    events.extend(engine.flush())
    return engine, events


def cmd_rollout(args) -> int:
    try:
        cfg = _load_session_config(args)
        inputs = read_action_script(args.script) if args.script else []
    except (EngineError, ValueError, OSError) as exc:
        return _fail("invalid-config", str(exc))
    out = Path(args.out)
    frames_dir = out / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)

    engine, events = _run_engine(cfg, inputs)
    bad = [e for e in events if isinstance(e, ErrorEvent)]
    if bad:
        return _fail(bad[0].code, bad[0].detail, status=1)

    digests = []
    timings = []
    with open(out / "retrieval.log", "w", encoding="utf-8") as rlog:
        for ev in events:
            name = f"frame_{ev.index:06d}"
            save_png(ev.pixels, frames_dir / f"{name}.png")
            if args.dump_ppm:
                save_ppm(ev.pixels, frames_dir / f"{name}.ppm")
            digests.append(frame_digest(ev.pixels))
            timings.append(ev.step_ms)
            if ev.index % cfg.r == 0:
                ids = ",".join(str(i) for i in ev.retrieved)
                rlog.write(f"latent {ev.latent_index} frames "
                           f"[{ev.index},{ev.index + cfg.r}) retrieved: {ids}\n")

    traj = Trajectory([ev.pose for ev in events], cfg.frame_interval)
    write_trajectory(out / "trajectory.txt", traj)
    with open(out / "digests.txt", "w", encoding="utf-8") as fh:
        fh.write("\n".join(digests) + "\n")

    warmup = cfg.n_stages * cfg.r
    steady = timings[warmup:] or timings
    report = {
        "frames": len(events),
        "warmup_frames": warmup,
        "median_steady_ms": statistics.median(steady),
        "mean_steady_ms": statistics.fmean(steady),
        "max_ms": max(timings),
        "per_frame_ms": timings,
    }
    with open(out / "timings.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=1)
    save_record(out / "record.json", cfg, engine.records, digests)
    print(f"rollout: {len(events)} frames -> {out} "
          f"(median steady {report['median_steady_ms']:.2f} ms/frame)")
    return 0


def cmd_eval(args) -> int:
    try:
        est = read_trajectory(args.est)
        ref = read_trajectory(args.ref)
        errors = compute_errors(est, ref, delta=args.delta)
    except (EngineError, ValueError, OSError) as exc:
        return _fail("eval-failed", str(exc))
    table = errors.as_dict()
    width = max(len(k) for k in table)
    for key, val in table.items():
        print(f"{key:<{width}}  {val:.9g}")
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(",".join(table.keys()) + "\n")
            fh.write(",".join(f"{v:.9g}" for v in table.values()) + "\n")
    return 0


def cmd_compare_mapping(args) -> int:
    sampler = TwistSamplerConfig()
    report = run_drift_experiment(args.n, args.len, sampler, seed=args.seed)
    print(format_drift_table(report))
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(drift_table_csv(report))
    return 0


def cmd_segment(args) -> int:
    try:
        traj = read_trajectory(args.trajectory)
    except (EngineError, ValueError, OSError) as exc:
        return _fail("parse-error", str(exc))
    n = len(traj)
    windows = [(s, s + args.window) for s in range(0, n - args.window + 1, args.window)]
    out = []
    for win in windows:
        clips = select_offline_clips(traj, win, args.clips, args.clip_len)
        out.append({"window": list(win), "clips": [list(c) for c in clips]})
    if args.json:
        print(json.dumps({"frames": n, "windows": out}, indent=1))
    else:
        print(f"{n} frames -> {len(windows)} windows of {args.window}")
        for item in out:
            clips = " ".join(f"[{a},{b})" for a, b in item["clips"])
            print(f"window [{item['window'][0]},{item['window'][1]}): {clips}")
    return 0


def cmd_record_replay(args) -> int:
    from .formats import load_record, record_config, record_inputs

    try:
        doc = load_record(args.record)
        cfg = record_config(doc)
        inputs = record_inputs(doc)
    except (EngineError, ValueError, OSError) as exc:
        return _fail("parse-error", str(exc))
    if doc["engine_version"] != __version__:
        print(f"warning: record from engine {doc['engine_version']}, "
              f"replaying on {__version__}", file=sys.stderr)
    _, events = _run_engine(cfg, inputs)
    bad = [e for e in events if isinstance(e, ErrorEvent)]
    if bad:
        return _fail(bad[0].code, bad[0].detail, status=1)
    digests = [frame_digest(ev.pixels) for ev in events]
    expected = doc.get("frame_digests", [])
    if digests == expected:
        print(f"replay ok: {len(digests)} frames, digests identical")
        return 0
    mismatches = sum(1 for a, b in zip(digests, expected) if a != b)
    mismatches += abs(len(digests) - len(expected))
    print(f"replay FAILED: {mismatches} digest mismatches", file=sys.stderr)
    return 1


def cmd_serve(args) -> int:
    try:
        cfg = _load_session_config(args)
    except (EngineError, ValueError, OSError) as exc:
        return _fail("invalid-config", str(exc))
    from .server import serve

    host, _, port = args.bind.rpartition(":")
    serve(host or "127.0.0.1", int(port), cfg, ui_dir=args.ui_dir,
          snapshot_dir=args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="poseworld",
                                     description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rollout", help="run a scripted session and write artifacts")
    p.add_argument("--config", help="config file (flat key=value)")
    p.add_argument("--script", help="action script file")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--dump-ppm", action="store_true", help="also write P6 dumps")
    p.set_defaults(func=cmd_rollout)

    p = sub.add_parser("eval", help="trajectory error table (est vs ref)")
    p.add_argument("est")
    p.add_argument("ref")
    p.add_argument("--delta", type=int, default=1, help="relative-pose frame gap")
    p.add_argument("--csv", help="also write the table as CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare-mapping",
                       help="decoupled-linear vs screw integration drift table")
    p.add_argument("--n", type=int, default=50, help="number of trajectories")
    p.add_argument("--len", type=int, default=200, help="frames per trajectory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv", help="also write the table as CSV")
    p.set_defaults(func=cmd_compare_mapping)

    p = sub.add_parser("segment", help="split a trajectory into windows with memory clips")
    p.add_argument("trajectory")
    p.add_argument("--window", type=int, default=64)
    p.add_argument("--clips", type=int, default=4)
    p.add_argument("--clip-len", type=int, default=4)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("record-replay", help="replay a recorded session and audit digests")
    p.add_argument("record")
    p.set_defaults(func=cmd_record_replay)

    p = sub.add_parser("serve", help="run the streaming session service")
    p.add_argument("--bind", default="127.0.0.1:8765")
    p.add_argument("--config", help="config file (flat key=value)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", default=".", help="directory for pool snapshots")
    p.add_argument("--ui-dir", default="frontend", help="static UI directory")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
