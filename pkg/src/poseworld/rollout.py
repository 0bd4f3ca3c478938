"""Progressive autoregressive rollout over a sliding latent window.

Denoising is discretized into N steps partitioned into S stages. The
window holds up to S in-progress latents, oldest first: every stage
advance pushes each slot N/S steps down its own noise band, so noise
levels strictly increase from the oldest slot to the newest. When the
oldest slot completes all N steps it is emitted: decoded to frames,
pushed into short-term memory, and inserted into the long-term pool;
long-term context is re-retrieved once per shift under the new window
origin. A small set of initial latents can be attached as a permanent
attention sink.

The denoiser here is a deterministic stub standing in for a trained
network: each step contracts the latent toward the ground-truth latent of
the procedural world, with conditioning quality modulating the rate (a
wrong or missing camera feature slows convergence) and an optional seeded
drift model that makes the memory/sink ablations behave directionally
like their trained counterparts. Drift is disabled by default, so the
stub converges to the world oracle exactly.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .actions import InputState, input_to_twist
from .camera import (CameraEmbedder, embedder_forward, group_per_latent,
                     init_camera_embedder, poses_to_plucker)
from .config import LATENT_DOWNSAMPLE, SessionConfig
from .errors import DenoiserError, InvalidStateError
from .memory import MemoryEntry, MemoryPool, insert, retrieve
from .se3 import Pose, Trajectory, compose, exp_twist
from .world import SceneSpec, ToyCodec, render

_NOISE_TAG = 11
_DRIFT_TAG = 13

EMBED_HIDDEN = 32
EMBED_FEAT = 16


@dataclass
class NoiseSchedule:
    """N strictly decreasing noise levels split into S equal stages.

    levels[k] is the noise carried into step k; the step after the last
    level lands at exactly zero, so a latent that has completed all N
    steps is fully denoised.
    """

    n_steps: int = 64
    n_stages: int = 8
    levels: np.ndarray | None = None

    def __post_init__(self):
        if self.n_steps < 1 or self.n_stages < 1 or self.n_steps % self.n_stages:
            raise ValueError("n_steps must be a positive multiple of n_stages")
        if self.levels is None:
            self.levels = 1.0 - np.arange(self.n_steps) / self.n_steps
        self.levels = np.asarray(self.levels, dtype=float)
        if self.levels.shape != (self.n_steps,):
            raise ValueError("levels length must equal n_steps")
        if np.any(np.diff(self.levels) >= 0) or self.levels[-1] < 0:
            raise ValueError("levels must be strictly decreasing and non-negative")

    @property
    def steps_per_stage(self) -> int:
        return self.n_steps // self.n_stages

    def sigma_now(self, steps_done: int) -> float:
        if steps_done >= self.n_steps:
            return 0.0
        return float(self.levels[steps_done])

    def step_bounds(self, step_index: int) -> tuple:
        if not 0 <= step_index < self.n_steps:
            raise ValueError(f"step index {step_index} out of range")
        s_from = float(self.levels[step_index])
        s_to = float(self.levels[step_index + 1]) if step_index + 1 < self.n_steps else 0.0
        return s_from, s_to


@dataclass
class ProgressiveSlot:
    latent_index: int       # emission order; doubles as the memory entry id
    frame_start: int        # global index of the first of its r frames
    poses: list             # r global poses
    latent: np.ndarray
    steps_done: int = 0


@dataclass
class ContextEntry:
    """One conditioning item: a latent with its global poses and the camera
    code realigned to the current window origin."""

    latent: np.ndarray
    poses: list
    frame_start: int
    code: np.ndarray


@dataclass
class ConditioningContext:
    window_origin: Pose
    slot_latent_index: int
    slot_frame_start: int
    slot_poses: list
    camera_code: np.ndarray | None
    camera_feature: np.ndarray | None
    sink: list = field(default_factory=list)
    short_term: list = field(default_factory=list)
    long_term: list = field(default_factory=list)
    # scratch fields: a context is immutable across the steps of one stage,
    # so the denoiser memoizes its per-context work here
    cached_target: np.ndarray | None = None
    cached_penalty: float | None = None


@dataclass
class RolloutWindow:
    schedule: NoiseSchedule
    r: int
    short_capacity: int = 8
    progressive: list = field(default_factory=list)
    short_term: deque = None
    long_term: list = field(default_factory=list)
    sink: list = field(default_factory=list)
    sink_attached: bool = False
    fallback_origin: Pose = field(default_factory=Pose.identity)

    def __post_init__(self):
        if self.short_term is None:
            self.short_term = deque(maxlen=max(0, self.short_capacity))

    @property
    def window_origin(self) -> Pose:
        if self.progressive:
            return self.progressive[0].poses[0]
        return self.fallback_origin

    def slot_sigmas(self) -> list:
        return [self.schedule.sigma_now(s.steps_done) for s in self.progressive]


@dataclass
class RolloutAudit:
    """Counters the acceptance checks read back after a session."""

    step_counts: dict = field(default_factory=dict)     # latent_index -> steps applied
    emitted_steps: dict = field(default_factory=dict)   # latent_index -> steps at emission
    stage_advances: int = 0
    first_emission_advance: int | None = None
    monotonicity_checks: int = 0
    monotonicity_violations: int = 0
    max_context_size: int = 0


def _realigned_code(poses, origin: Pose, r: int) -> np.ndarray:
    plucker = poses_to_plucker(Trajectory(list(poses)), origin)
    return group_per_latent(plucker, r)


def attach_sink(window: RolloutWindow, entries) -> RolloutWindow:
    """Pin the session's initial latents into every future conditioning set.

    May be called once; sink latents are never evicted afterwards.
    """
    if window.sink_attached:
        raise InvalidStateError("attention sink already attached")
    window.sink = list(entries)
    window.sink_attached = True
    return window


def advance_stage(window: RolloutWindow, denoiser, embedder: CameraEmbedder | None = None,
                  audit: RolloutAudit | None = None) -> RolloutWindow:
    """Advance every progressive slot N/S denoising steps in its own band."""
    schedule = window.schedule
    origin = window.window_origin
    shared_sink = [ContextEntry(e.latent, e.pose_set, e.frame_range[0],
                                _realigned_code(e.pose_set, origin, window.r))
                   for e in window.sink]
    shared_short = [ContextEntry(e.latent, e.pose_set, e.frame_range[0],
                                 _realigned_code(e.pose_set, origin, window.r))
                    for e in window.short_term]
    shared_long = [ContextEntry(e.latent, e.pose_set, e.frame_range[0],
                                _realigned_code(e.pose_set, origin, window.r))
                   for e in window.long_term]
    for slot_pos, slot in enumerate(window.progressive):
        if slot.steps_done >= schedule.n_steps:
            raise InvalidStateError(
                f"slot {slot_pos} already fully denoised; shift before advancing")
        code = _realigned_code(slot.poses, origin, window.r)
        feature = embedder_forward(embedder, code) if embedder is not None else None
        ctx = ConditioningContext(
            window_origin=origin,
            slot_latent_index=slot.latent_index,
            slot_frame_start=slot.frame_start,
            slot_poses=slot.poses,
            camera_code=code,
            camera_feature=feature,
            sink=shared_sink,
            short_term=shared_short,
            long_term=shared_long,
        )
        for _ in range(schedule.steps_per_stage):
            s_from, s_to = schedule.step_bounds(slot.steps_done)
            try:
                slot.latent = denoiser.step(slot.latent, s_from, s_to, ctx)
            except Exception as exc:  # noqa: BLE001 - annotate with slot index
                raise DenoiserError(slot_pos, exc) from exc
            slot.steps_done += 1
            if audit is not None:
                audit.step_counts[slot.latent_index] = (
                    audit.step_counts.get(slot.latent_index, 0) + 1)
    if audit is not None:
        audit.stage_advances += 1
    return window


def shift_window(window: RolloutWindow, pool: MemoryPool, retrieval_k: int,
                 retrieval_l: int, audit: RolloutAudit | None = None):
    """Emit the fully denoised oldest slot and refresh long-term context.

    The emitted latent becomes a memory entry and a short-term item; the
    retrieval ids that conditioned it are returned alongside. The fresh
    pure-noise slot is appended by the engine when the next r action poses
    exist, which keeps generation action-paced without changing the step
    accounting.
    """
    if not window.progressive:
        raise InvalidStateError("no progressive slots to shift")
    slot = window.progressive[0]
    if slot.steps_done != window.schedule.n_steps:
        raise InvalidStateError(
            f"cannot shift: oldest slot has {slot.steps_done}/{window.schedule.n_steps} steps")
    used_retrieval = [e.id for e in window.long_term]
    entry = MemoryEntry(
        id=slot.latent_index,
        pose_set=list(slot.poses),
        latent=slot.latent,
        frame_range=(slot.frame_start, slot.frame_start + window.r),
    )
    window.progressive.pop(0)
    window.fallback_origin = slot.poses[-1]
    insert(pool, entry)
    if window.short_term.maxlen:
        window.short_term.append(entry)
    window.long_term = retrieve(pool, window.window_origin, retrieval_k, retrieval_l) \
        if retrieval_l > 0 else []
    if audit is not None:
        audit.emitted_steps[slot.latent_index] = slot.steps_done
        if audit.first_emission_advance is None:
            audit.first_emission_advance = audit.stage_advances
    return entry, used_retrieval


class OracleDenoiser:
    """Deterministic contractive denoiser stub tied to the procedural world.

    step() pulls the latent toward an effective target latent with factor
    (sigma_to + eps) / (sigma_from + eps): eps is zero while the provided
    camera feature matches the one recomputed from the slot's true poses,
    so a correctly conditioned latent lands exactly on its target after
    the final step. With drift enabled the target is the world-oracle
    latent plus a per-emission random-walk offset, blended toward the
    residuals of whatever sink / short-term / long-term context is
    present; richer context means stronger pull back toward previously
    generated content, which is what makes revisits consistent.
    """

    def __init__(self, scene: SceneSpec, codec: ToyCodec, resolution, fov_deg,
                 embedder: CameraEmbedder, seed: int = 0, drift_rate: float = 0.0,
                 camera_penalty: float = 0.05, mem_weight: float = 0.75,
                 sink_weight: float = 0.15, short_weight: float = 0.2):
        self.scene = scene
        self.codec = codec
        self.resolution = tuple(resolution)
        self.fov_deg = fov_deg
        self.embedder = embedder
        self.seed = seed
        self.drift_rate = drift_rate
        self.camera_penalty = camera_penalty
        self.mem_weight = mem_weight
        self.sink_weight = sink_weight
        self.short_weight = short_weight
        self._oracle_cache: dict = {}
        self._drift_cache: dict = {0: None}

    def oracle_latent(self, poses, frame_start: int) -> np.ndarray:
        cached = self._oracle_cache.get(frame_start)
        if cached is None:
            frames = [render(self.scene, p, self.resolution, self.fov_deg)
                      for p in poses]
            cached = self.codec.encode(frames)
            self._oracle_cache[frame_start] = cached
        return cached

    def _drift_at(self, latent_index: int, shape) -> np.ndarray:
        if latent_index == 0 or self.drift_rate == 0.0:
            return np.zeros(shape)
        cached = self._drift_cache.get(latent_index)
        if cached is None:
            prev = self._drift_at(latent_index - 1, shape)
            rng = np.random.default_rng((self.seed, _DRIFT_TAG, latent_index))
            cached = prev + self.drift_rate * rng.standard_normal(shape)
            self._drift_cache[latent_index] = cached
        return cached

    def _mean_residual(self, entries) -> np.ndarray | None:
        if not entries:
            return None
        res = [e.latent - self.oracle_latent(e.poses, e.frame_start) for e in entries]
        return np.mean(res, axis=0)

    def _effective_target(self, ctx: ConditioningContext) -> np.ndarray:
        oracle = self.oracle_latent(ctx.slot_poses, ctx.slot_frame_start)
        if self.drift_rate == 0.0:
            return oracle
        own = self._drift_at(ctx.slot_latent_index, oracle.shape)
        blend = np.zeros_like(oracle)
        total = 0.0
        mem = self._mean_residual(ctx.long_term)
        if mem is not None:
            n = len(ctx.long_term)
            w = self.mem_weight * n / (n + 1.0)
            blend += w * mem
            total += w
        snk = self._mean_residual(ctx.sink)
        if snk is not None:
            blend += self.sink_weight * snk
            total += self.sink_weight
        sht = self._mean_residual(ctx.short_term)
        if sht is not None:
            n = len(ctx.short_term)
            w = self.short_weight * n / (n + 1.0)
            blend += w * sht
            total += w
        return oracle + (1.0 - total) * own + blend

    def _conditioning_penalty(self, ctx: ConditioningContext) -> float:
        if ctx.camera_feature is None or ctx.camera_code is None:
            return self.camera_penalty
        expected_code = _realigned_code(ctx.slot_poses, ctx.window_origin,
                                        len(ctx.slot_poses))
        expected = embedder_forward(self.embedder, expected_code)
        if ctx.camera_feature.shape != expected.shape or \
                not np.allclose(ctx.camera_feature, expected, atol=1e-9):
            return self.camera_penalty
        return 0.0

    def step(self, latent: np.ndarray, sigma_from: float, sigma_to: float,
             ctx: ConditioningContext) -> np.ndarray:
        if ctx.cached_target is None:
            ctx.cached_target = self._effective_target(ctx)
            ctx.cached_penalty = self._conditioning_penalty(ctx)
        target = ctx.cached_target
        eps = ctx.cached_penalty
        factor = (sigma_to + eps) / (sigma_from + eps)
        return target + (latent - target) * factor


@dataclass
class FrameEvent:
    index: int
    pixels: np.ndarray
    pose: Pose
    latent_index: int
    retrieved: list
    step_ms: float


@dataclass
class ErrorEvent:
    code: str
    detail: str


@dataclass
class ActionRecord:
    frame_index: int
    input: InputState
    twist: object
    rel_pose: Pose
    global_pose: Pose
    padded: bool = False


class RolloutEngine:
    """Action-paced session: each incoming input advances the camera one
    frame; every r frames one stage advance runs, and completed latents are
    emitted as decoded frames."""

    def __init__(self, config: SessionConfig, initial_pose: Pose | None = None,
                 scene: SceneSpec | None = None, denoiser=None):
        config.validate()
        self.config = config
        self.scene = scene if scene is not None else SceneSpec(config.scene_seed)
        self.codec = ToyCodec(r=config.r, downsample=LATENT_DOWNSAMPLE)
        self.latent_shape = self.codec.latent_shape(config.resolution)
        self.embedder = init_camera_embedder(config.r, EMBED_HIDDEN, EMBED_FEAT,
                                             seed=config.seed, zero_init_output=False)
        self.denoiser = denoiser if denoiser is not None else OracleDenoiser(
            self.scene, self.codec, config.resolution, config.fov_deg,
            self.embedder, seed=config.seed, drift_rate=config.drift_rate,
            camera_penalty=config.camera_penalty)
        self.schedule = NoiseSchedule(config.n_steps, config.n_stages)
        self.pool = MemoryPool(exclusion_horizon=config.short_term)
        self.window = RolloutWindow(self.schedule, config.r,
                                    short_capacity=config.short_term)
        self.audit = RolloutAudit()
        start = initial_pose if initial_pose is not None else Pose.identity()
        self.window.fallback_origin = start
        self.poses = [start]
        self.pitch = 0.0
        self.records: list = []
        self._pending = [start]
        self._slots_created = 0
        self._emitted = 0
        self._sink_buffer: list = []

    @property
    def emitted_frames(self) -> int:
        return self._emitted * self.config.r

    def push_action(self, inp: InputState, padded: bool = False) -> list:
        twist = input_to_twist(inp, self.config.sensitivity, self.pitch)
        self.pitch += float(twist.w[0])
        delta = exp_twist(twist)
        pose = compose(self.poses[-1], delta)
        self.poses.append(pose)
        self.records.append(ActionRecord(len(self.poses) - 1, inp, twist, delta,
                                         pose, padded))
        self._pending.append(pose)
        if len(self._pending) >= self.config.r:
            batch, self._pending = self._pending[:self.config.r], self._pending[self.config.r:]
            return self._run_batch(batch)
        return []

    def flush(self) -> list:
        """Pad with zero inputs until every requested frame has been emitted."""
        target = len(self.poses)
        events = []
        idle = InputState(dt=self.config.frame_interval)
        while self.emitted_frames < target:
            events.extend(self.push_action(idle, padded=True))
        return events

    def _run_batch(self, batch_poses) -> list:
        t0 = time.perf_counter()
        cfg = self.config
        frame_start = self._slots_created * cfg.r
        rng = np.random.default_rng((cfg.seed, _NOISE_TAG, frame_start))
        slot = ProgressiveSlot(
            latent_index=self._slots_created,
            frame_start=frame_start,
            poses=list(batch_poses),
            latent=rng.standard_normal(self.latent_shape),
        )
        self.window.progressive.append(slot)
        self._slots_created += 1

        advance_stage(self.window, self.denoiser, self.embedder, self.audit)
        self._check_invariants()

        events = []
        oldest = self.window.progressive[0]
        if oldest.steps_done == self.schedule.n_steps:
            entry, used_ids = shift_window(self.window, self.pool,
                                           cfg.retrieval_K, cfg.long_term_L,
                                           self.audit)
            self._emitted += 1
            if cfg.sink_size > 0 and not self.window.sink_attached:
                self._sink_buffer.append(entry)
                if len(self._sink_buffer) == cfg.sink_size:
                    attach_sink(self.window, self._sink_buffer)
            frames = self.codec.decode(entry.latent)
            step_ms = (time.perf_counter() - t0) * 1000.0 / cfg.r
            for k in range(cfg.r):
                idx = entry.frame_range[0] + k
                events.append(FrameEvent(idx, frames[k], entry.pose_set[k],
                                         entry.id, list(used_ids), step_ms))
        return events

    def _check_invariants(self) -> None:
        sig = self.window.slot_sigmas()
        self.audit.monotonicity_checks += 1
        if any(sig[i] >= sig[i + 1] for i in range(len(sig) - 1)):
            self.audit.monotonicity_violations += 1
            raise InvalidStateError(f"noise levels not strictly increasing: {sig}")
        ctx_size = (len(self.window.sink) + len(self.window.short_term)
                    + len(self.window.long_term) + self.config.n_stages)
        self.audit.max_context_size = max(self.audit.max_context_size, ctx_size)
        if ctx_size > self.config.context_budget:
            raise InvalidStateError(
                f"conditioning set {ctx_size} exceeds budget {self.config.context_budget}")


def run_session(initial_pose: Pose | None, action_stream, config: SessionConfig,
                flush: bool = True):
    """Drive a full session over an action iterable, yielding frame events.

    Any engine error surfaces as a single ErrorEvent and ends the stream.
    """
    try:
        engine = RolloutEngine(config, initial_pose=initial_pose)
        for inp in action_stream:
            for ev in engine.push_action(inp):
                yield ev
        if flush:
            for ev in engine.flush():
                yield ev
    except Exception as exc:  # noqa: BLE001 - structured stream termination
        yield ErrorEvent(code=type(exc).__name__, detail=str(exc))
