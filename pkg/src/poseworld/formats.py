"""Text and JSON persistence formats.

Trajectory file (one line per frame, unit quaternion Hamilton w-first):
    #camtraj v1 frame_interval=0.05
    frame_index ts tx ty tz qw qx qy qz

Action script (one line per input sample; keys is a subset of WASD):
    frame_index keys=WD dx=3 dy=-1 dt=0.05

Recorded session: a JSON document holding the config snapshot, engine
version, per-action records (input, twist, relative pose, global pose)
and per-frame digests, sufficient to replay bit-identically.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

from . import __version__
from .actions import InputState
from .config import SessionConfig, apply_overrides
from .errors import ParseError
from .se3 import (DEFAULT_FRAME_INTERVAL, Pose, Trajectory, quat_to_rotation,
                  rotation_to_quat)

TRAJ_HEADER_PREFIX = "#camtraj v1"


def pose_to_seven(p: Pose) -> list:
    q = rotation_to_quat(p.R)
    return [float(p.t[0]), float(p.t[1]), float(p.t[2]),
            float(q[0]), float(q[1]), float(q[2]), float(q[3])]


def pose_from_seven(vals) -> Pose:
    vals = [float(v) for v in vals]
    if len(vals) != 7:
        raise ValueError(f"expected 7 pose values, got {len(vals)}")
    return Pose(quat_to_rotation(vals[3:]), np.array(vals[:3]))


def format_trajectory(traj: Trajectory) -> str:
    lines = [f"{TRAJ_HEADER_PREFIX} frame_interval={traj.frame_interval:g}"]
    for i, p in enumerate(traj.poses):
        ts = i * traj.frame_interval
        sev = pose_to_seven(p)
        nums = " ".join(f"{v:.17g}" for v in sev)
        lines.append(f"{i} {ts:.6f} {nums}")
    return "\n".join(lines) + "\n"


def write_trajectory(path, traj: Trajectory) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_trajectory(traj))


def parse_trajectory(text: str, path: str = "<trajectory>") -> Trajectory:
    lines = text.splitlines()
    if not lines or not lines[0].startswith(TRAJ_HEADER_PREFIX):
        raise ParseError(path, 1, f"missing header {TRAJ_HEADER_PREFIX!r}")
    frame_interval = DEFAULT_FRAME_INTERVAL
    header_rest = lines[0][len(TRAJ_HEADER_PREFIX):].strip()
    for tok in header_rest.split():
        key, _, val = tok.partition("=")
        if key == "frame_interval":
            try:
                frame_interval = float(val)
            except ValueError:
                raise ParseError(path, 1, f"bad frame_interval {val!r}") from None
        else:
            raise ParseError(path, 1, f"unknown header field {key!r}")
    poses = []
    for line_no, line in enumerate(lines[1:], start=2):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.split()
        if len(parts) != 9:
            raise ParseError(path, line_no, f"expected 9 fields, got {len(parts)}")
        try:
            poses.append(pose_from_seven(parts[2:]))
        except ValueError as exc:
            raise ParseError(path, line_no, str(exc)) from None
    if not poses:
        raise ParseError(path, len(lines), "no pose records")
    return Trajectory(poses, frame_interval)


def read_trajectory(path) -> Trajectory:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_trajectory(fh.read(), str(path))


_SCRIPT_KEYS = "WASD"


def format_action_script(inputs) -> str:
    lines = []
    for i, s in enumerate(inputs):
        keys = "".join(k for k in _SCRIPT_KEYS if k in s.keys)
        lines.append(f"{i} keys={keys} dx={int(s.mouse_dx)} dy={int(s.mouse_dy)} "
                     f"dt={s.dt:g}")
    return "\n".join(lines) + ("\n" if lines else "")


def write_action_script(path, inputs) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_action_script(inputs))


def parse_action_script(text: str, path: str = "<script>") -> list:
    out = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.split()
        if len(parts) != 5:
            raise ParseError(path, line_no, f"expected 5 fields, got {len(parts)}")
        fields = {}
        for tok in parts[1:]:
            key, sep, val = tok.partition("=")
            if not sep:
                raise ParseError(path, line_no, f"expected key=value, got {tok!r}")
            fields[key] = val
        missing = {"keys", "dx", "dy", "dt"} - fields.keys()
        if missing:
            raise ParseError(path, line_no, f"missing fields {sorted(missing)}")
        keyset = set(fields["keys"])
        if not keyset <= set(_SCRIPT_KEYS):
            raise ParseError(path, line_no,
                             f"keys must be a subset of {_SCRIPT_KEYS}, got {fields['keys']!r}")
        try:
            out.append(InputState(keys=frozenset(keyset),
                                  mouse_dx=float(int(fields["dx"])),
                                  mouse_dy=float(int(fields["dy"])),
                                  dt=float(fields["dt"])))
        except ValueError as exc:
            raise ParseError(path, line_no, str(exc)) from None
    return out


def read_action_script(path) -> list:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_action_script(fh.read(), str(path))


def frame_digest(pixels: np.ndarray) -> str:
    """Digest of raw RGB bytes; PNG re-encoding does not change it."""
    return hashlib.sha256(np.ascontiguousarray(pixels).tobytes()).hexdigest()


RECORD_FORMAT = "poseworld-record"


def _input_to_json(s: InputState) -> dict:
    return {"keys": sorted(s.keys), "dx": s.mouse_dx, "dy": s.mouse_dy, "dt": s.dt}


def _input_from_json(d: dict) -> InputState:
    return InputState(keys=frozenset(d["keys"]), mouse_dx=float(d["dx"]),
                      mouse_dy=float(d["dy"]), dt=float(d["dt"]))


def build_record(config: SessionConfig, records, digests) -> dict:
    return {
        "format": RECORD_FORMAT,
        "version": 1,
        "engine_version": __version__,
        "frame_interval": config.frame_interval,
        "config": config.to_dict(),
        "records": [
            {
                "frame": rec.frame_index,
                "input": _input_to_json(rec.input),
                "twist": [float(v) for v in rec.twist.as_vector()],
                "rel_pose": pose_to_seven(rec.rel_pose),
                "global_pose": pose_to_seven(rec.global_pose),
            }
            for rec in records if not rec.padded
        ],
        "frame_digests": list(digests),
    }


def save_record(path, config: SessionConfig, records, digests) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(build_record(config, records, digests), fh, indent=1)
        fh.write("\n")


def load_record(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != RECORD_FORMAT:
        raise ValueError(f"{path}: not a {RECORD_FORMAT} document")
    return doc


def record_config(doc: dict) -> SessionConfig:
    return apply_overrides(SessionConfig(), doc["config"])


def record_inputs(doc: dict) -> list:
    return [_input_from_json(rec["input"]) for rec in doc["records"]]
