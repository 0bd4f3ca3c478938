"""Session configuration: dataclass, validation, and the flat config file.

Config files are line-oriented `key=value` text; `#` starts a comment.
Unknown keys are rejected so typos fail loudly at load time.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .actions import Sensitivity
from .se3 import DEFAULT_FRAME_INTERVAL

LATENT_DOWNSAMPLE = 8


@dataclass(frozen=True)
class SessionConfig:
    scene_seed: int = 0
    seed: int = 0
    resolution: tuple = (64, 64)   # (H, W)
    n_steps: int = 64              # file key: N
    n_stages: int = 8              # file key: S
    r: int = 4
    sink_size: int = 1
    short_term: int = 8
    long_term_L: int = 4
    retrieval_K: int = 16
    context_budget: int = 21
    frame_interval: float = DEFAULT_FRAME_INTERVAL
    fov_deg: float = 75.0
    drift_rate: float = 0.0
    camera_penalty: float = 0.05
    sensitivity: Sensitivity = field(default_factory=Sensitivity)

    def validate(self) -> "SessionConfig":
        if self.n_steps < 1 or self.n_stages < 1 or self.n_steps % self.n_stages:
            raise ValueError(f"N={self.n_steps} must be a positive multiple of S={self.n_stages}")
        if self.r < 1:
            raise ValueError("r must be >= 1")
        if self.retrieval_K < 1:
            raise ValueError("retrieval_K must be >= 1")
        if not (0 <= self.long_term_L <= self.retrieval_K):
            raise ValueError("long_term_L must satisfy 0 <= L <= retrieval_K")
        if self.sink_size < 0 or self.short_term < 0:
            raise ValueError("window sizes must be non-negative")
        used = self.sink_size + self.short_term + self.long_term_L + self.n_stages
        if used > self.context_budget:
            raise ValueError(f"conditioning set {used} exceeds context budget {self.context_budget}")
        h, w = self.resolution
        if h < LATENT_DOWNSAMPLE or w < LATENT_DOWNSAMPLE or h % LATENT_DOWNSAMPLE or w % LATENT_DOWNSAMPLE:
            raise ValueError(f"resolution {self.resolution} must be divisible by {LATENT_DOWNSAMPLE}")
        if self.frame_interval <= 0:
            raise ValueError("frame_interval must be positive")
        if self.drift_rate < 0 or self.camera_penalty < 0:
            raise ValueError("drift_rate and camera_penalty must be non-negative")
        return self

    def to_dict(self) -> dict:
        return {
            "scene_seed": self.scene_seed,
            "seed": self.seed,
            "resolution": f"{self.resolution[0]}x{self.resolution[1]}",
            "N": self.n_steps,
            "S": self.n_stages,
            "r": self.r,
            "sink_size": self.sink_size,
            "short_term": self.short_term,
            "long_term_L": self.long_term_L,
            "retrieval_K": self.retrieval_K,
            "context_budget": self.context_budget,
            "frame_interval": self.frame_interval,
            "fov_deg": self.fov_deg,
            "drift_rate": self.drift_rate,
            "camera_penalty": self.camera_penalty,
            "move_speed": self.sensitivity.move_speed,
            "yaw_rate": self.sensitivity.yaw_rate,
            "pitch_rate": self.sensitivity.pitch_rate,
            "pitch_limit": self.sensitivity.pitch_limit,
        }


def _parse_resolution(text: str) -> tuple:
    parts = text.lower().split("x")
    if len(parts) != 2:
        raise ValueError(f"resolution must look like 64x64, got {text!r}")
    return (int(parts[0]), int(parts[1]))


_INT_KEYS = {"scene_seed", "seed", "N", "S", "r", "sink_size", "short_term",
             "long_term_L", "retrieval_K", "context_budget"}
_FLOAT_KEYS = {"frame_interval", "fov_deg", "drift_rate", "camera_penalty",
               "move_speed", "yaw_rate", "pitch_rate", "pitch_limit"}
_FIELD_FOR_KEY = {"N": "n_steps", "S": "n_stages"}
_SENSITIVITY_KEYS = {"move_speed", "yaw_rate", "pitch_rate", "pitch_limit"}


def apply_overrides(cfg: SessionConfig, overrides: dict) -> SessionConfig:
    """Apply flat-file-style key/value overrides onto a config."""
    updates = {}
    sens = {}
    for key, raw in overrides.items():
        if key == "resolution":
            updates["resolution"] = (_parse_resolution(raw) if isinstance(raw, str)
                                     else tuple(raw))
        elif key in _INT_KEYS:
            updates[_FIELD_FOR_KEY.get(key, key)] = int(raw)
        elif key in _SENSITIVITY_KEYS:
            sens[key] = float(raw)
        elif key in _FLOAT_KEYS:
            updates[key] = float(raw)
        else:
            raise ValueError(f"unknown config key {key!r}")
    if sens:
        base = cfg.sensitivity
        updates["sensitivity"] = Sensitivity(
            move_speed=sens.get("move_speed", base.move_speed),
            yaw_rate=sens.get("yaw_rate", base.yaw_rate),
            pitch_rate=sens.get("pitch_rate", base.pitch_rate),
            pitch_limit=sens.get("pitch_limit", base.pitch_limit),
        )
    return replace(cfg, **updates).validate()


def parse_config(text: str, base: SessionConfig | None = None) -> SessionConfig:
    overrides = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValueError(f"line {line_no}: expected key=value, got {stripped!r}")
        key, _, value = stripped.partition("=")
        overrides[key.strip()] = value.strip()
    return apply_overrides(base or SessionConfig(), overrides)


def load_config(path) -> SessionConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def dump_config(cfg: SessionConfig) -> str:
    return "\n".join(f"{k}={v}" for k, v in cfg.to_dict().items()) + "\n"
