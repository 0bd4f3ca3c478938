"""Keyboard/mouse input states mapped to twist velocities.

Keys move the camera in its own body frame (W/S along +/-z, D/A along
+/-x, Space/Ctrl along +/-y); mouse deltas are per-sample angular impulses
(already integrated by the OS, not rates to scale by dt). Roll is never
produced by user input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .se3 import Twist

VALID_KEYS = frozenset({"W", "A", "S", "D", "Space", "Ctrl"})

QUANTIZE_SCHEMES = ("binary_keys", "discrete_speed", "text")

# 0.25 * default move_speed (2.0 u/s) * default frame interval (0.05 s)
DEFAULT_QUANTIZE_THRESHOLD = 0.025


@dataclass(frozen=True)
class InputState:
    """One raw input sample: held keys plus mouse deltas over dt seconds."""

    keys: frozenset = frozenset()
    mouse_dx: float = 0.0
    mouse_dy: float = 0.0
    dt: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "keys", frozenset(self.keys))
        bad = self.keys - VALID_KEYS
        if bad:
            raise ValueError(f"unknown keys: {sorted(bad)}")
        if not (math.isfinite(self.mouse_dx) and math.isfinite(self.mouse_dy)):
            raise ValueError("mouse deltas must be finite")


@dataclass(frozen=True)
class Sensitivity:
    """Input-to-velocity gains."""

    move_speed: float = 2.0     # world units per second per held movement key
    yaw_rate: float = 0.0025    # radians per pixel of mouse_dx
    pitch_rate: float = 0.0025  # radians per pixel of mouse_dy
    pitch_limit: float = 1.4    # max |accumulated pitch|, radians

    def __post_init__(self):
        if min(self.move_speed, self.yaw_rate, self.pitch_rate, self.pitch_limit) <= 0:
            raise ValueError("sensitivities must be positive")
        if self.pitch_limit > math.pi / 2:
            raise ValueError("pitch_limit must not exceed pi/2")


def input_to_twist(s: InputState, cfg: Sensitivity, current_pitch: float = 0.0) -> Twist:
    """Translate one input sample into a body-frame twist.

    The pitch component is clamped so that current_pitch plus this sample's
    pitch never leaves [-pitch_limit, pitch_limit]; the caller owns the
    accumulator.
    """
    if not (s.dt > 0.0 and math.isfinite(s.dt)):
        raise ValueError(f"dt must be positive and finite, got {s.dt}")
    if abs(current_pitch) > cfg.pitch_limit + 1e-12:
        raise ValueError("current_pitch already exceeds pitch_limit")
    step = cfg.move_speed * s.dt
    k = s.keys
    v = np.array([
        step * (("D" in k) - ("A" in k)),
        step * (("Space" in k) - ("Ctrl" in k)),
        step * (("W" in k) - ("S" in k)),
    ])
    wy = cfg.yaw_rate * s.mouse_dx
    wx_raw = cfg.pitch_rate * s.mouse_dy
    new_pitch = min(cfg.pitch_limit, max(-cfg.pitch_limit, current_pitch + wx_raw))
    wx = new_pitch - current_pitch
    return Twist(v, np.array([wx, wy, 0.0]))


def mean_twist(twists) -> Twist:
    """Component-wise average, used when one external action covers a chunk."""
    twists = list(twists)
    if not twists:
        return Twist.zero()
    m = np.mean([t.as_vector() for t in twists], axis=0)
    return Twist.from_vector(m)


def quantize_to_external(a: Twist, scheme: str,
                         threshold: float = DEFAULT_QUANTIZE_THRESHOLD) -> dict:
    """Collapse a twist onto a coarse external action vocabulary.

    Mirrors how a continuous (v_x, v_z, w_x, w_y) action is mapped onto
    pre-trained discrete action spaces: every component is compared against
    one threshold, and only the four externally representable axes survive.

    binary_keys   -> {"keys": [...], "dx": -1|0|1, "dy": -1|0|1}
    discrete_speed-> {"actions": [(name, speed), ...]}
    text          -> {"phrases": [...]} ("stays still" sentinel when inactive)
    """
    if scheme not in QUANTIZE_SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}, expected one of {QUANTIZE_SCHEMES}")
    vx, _, vz = a.v
    wx, wy, _ = a.w

    def active(x: float) -> int:
        if x > threshold:
            return 1
        if x < -threshold:
            return -1
        return 0

    sx, sz, swx, swy = active(vx), active(vz), active(wx), active(wy)

    if scheme == "binary_keys":
        keys = []
        if sz > 0:
            keys.append("W")
        if sz < 0:
            keys.append("S")
        if sx > 0:
            keys.append("D")
        if sx < 0:
            keys.append("A")
        return {"keys": keys, "dx": swy, "dy": swx}

    if scheme == "discrete_speed":
        actions = []
        if sz:
            actions.append(("forward" if sz > 0 else "backward", abs(float(vz))))
        if sx:
            actions.append(("right" if sx > 0 else "left", abs(float(vx))))
        if swy:
            actions.append(("turn_right" if swy > 0 else "turn_left", abs(float(wy))))
        if swx:
            actions.append(("tilt_down" if swx > 0 else "tilt_up", abs(float(wx))))
        return {"actions": actions}

    phrases = []
    if sz:
        phrases.append("Person moves forward" if sz > 0 else "Person moves backward")
    if sx:
        phrases.append("Person moves right" if sx > 0 else "Person moves left")
    if swy:
        phrases.append("Person turns right" if swy > 0 else "Person turns left")
    if swx:
        phrases.append("Person looks down" if swx > 0 else "Person looks up")
    if not phrases:
        phrases.append("Person stays still")
    return {"phrases": phrases}
