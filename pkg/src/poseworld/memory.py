"""Pose-anchored long-term memory pool with hierarchical retrieval.

Entries pair a latent with the global poses of its r frames. Retrieval is
two-stage: the K entries whose anchor positions are nearest the query
position, then the L of those whose anchor orientations align best with
the query orientation (largest trace of the relative rotation). Anchors
are the last pose of each entry's pose set. Ties always break toward the
smaller (older) id, and the scan is a flat linear pass so results are
deterministic and trivially checkable against a brute-force double sort.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .se3 import Pose, Trajectory, compose, inverse


@dataclass
class MemoryEntry:
    id: int
    pose_set: list          # r global Poses, one per frame of the latent
    latent: np.ndarray
    frame_range: tuple      # [start, end) global frame indices

    @property
    def anchor_pose(self) -> Pose:
        return self.pose_set[-1]


@dataclass
class MemoryPool:
    """Append-only entry store; single writer, any number of readers.

    The exclusion_horizon most recent entries are never returned by
    retrieval: they duplicate what the short-term window already provides.
    """

    exclusion_horizon: int = 8
    entries: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def eligible(self) -> list:
        cut = len(self.entries) - max(0, self.exclusion_horizon)
        return self.entries[:max(0, cut)]


def insert(pool: MemoryPool, e: MemoryEntry) -> MemoryPool:
    if pool.entries and e.id <= pool.entries[-1].id:
        raise ValueError(f"entry id {e.id} does not exceed max id {pool.entries[-1].id}")
    pool.entries.append(e)
    return pool


def retrieve(pool: MemoryPool, query: Pose, K: int, L: int) -> list:
    """Two-stage lookup: TopK by anchor distance, then TopL by rotation trace.

    Returns at most L entries in descending rotation-trace order; fewer when
    the eligible set is smaller. Stage-1 ties (equal distance) and stage-2
    ties (equal trace) both prefer the smaller id.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    if L > K:
        raise ValueError("L must not exceed K")
    cands = pool.eligible()
    if not cands or L < 1:
        return []
    ids = np.array([e.id for e in cands])
    anchors_t = np.stack([e.anchor_pose.t for e in cands])
    diff = anchors_t - query.t
    dists = np.sqrt(np.sum(diff * diff, axis=1))
    order = np.lexsort((ids, dists))[:K]
    stage1 = [cands[i] for i in order]
    traces = np.array([float(np.trace(e.anchor_pose.R.T @ query.R)) for e in stage1])
    s1_ids = np.array([e.id for e in stage1])
    order2 = np.lexsort((s1_ids, -traces))[:L]
    return [stage1[i] for i in order2]


def realign_for_window(entries, window_origin: Pose) -> list:
    """Re-express every stored pose relative to the current window origin.

    Returns (pose_set, latent) pairs; latents are shared, not copied.
    """
    inv_o = inverse(window_origin)
    out = []
    for e in entries:
        out.append(([compose(inv_o, p) for p in e.pose_set], e.latent))
    return out


def select_offline_clips(traj: Trajectory, segment: tuple, n_clips: int,
                         clip_len: int) -> list:
    """Pick up to n_clips non-overlapping clip windows outside `segment`.

    Candidates are every [s, s+clip_len) window of the trajectory disjoint
    from segment; the query anchor is the pose of the segment's last frame,
    each candidate's anchor the pose of its own last frame. Retrieval
    semantics apply with K = 4*n_clips and L = n_clips over candidate
    anchors (ties prefer the smaller start index); the stage-2 ranking is
    walked greedily, skipping candidates that overlap an already chosen
    clip. Returns [start, end) tuples; fewer than n_clips when candidates
    run out, never an error.
    """
    seg_start, seg_end = segment
    n = len(traj)
    if not (0 <= seg_start < seg_end <= n):
        raise ValueError(f"segment {segment} outside trajectory of length {n}")
    if n_clips < 1 or clip_len < 1:
        return []
    starts = [s for s in range(0, n - clip_len + 1)
              if s + clip_len <= seg_start or s >= seg_end]
    if not starts:
        return []
    query = traj.poses[seg_end - 1]
    anchors = [traj.poses[s + clip_len - 1] for s in starts]
    dists = np.array([float(np.linalg.norm(a.t - query.t)) for a in anchors])
    starts_arr = np.array(starts)
    k = 4 * n_clips
    order = np.lexsort((starts_arr, dists))[:k]
    traces = np.array([float(np.trace(anchors[i].R.T @ query.R)) for i in order])
    order2 = np.lexsort((starts_arr[order], -traces))
    chosen = []
    for j in order2:
        s = int(starts_arr[order[j]])
        rng = (s, s + clip_len)
        if any(rng[0] < c[1] and c[0] < rng[1] for c in chosen):
            continue
        chosen.append(rng)
        if len(chosen) == n_clips:
            break
    return chosen


_SNAPSHOT_MAGIC = b"MPSN"


def save_pool(path, pool: MemoryPool, r: int, latent_shape: tuple) -> None:
    """Snapshot format: magic, u32 (count, r, h, w, c, exclusion_horizon),
    then per entry i64 id, i64 start, i64 end, r 4x4 float32 pose matrices,
    and the float32 latent payload. Little-endian throughout."""
    h, w, c = latent_shape
    with open(path, "wb") as fh:
        fh.write(_SNAPSHOT_MAGIC)
        fh.write(struct.pack("<6I", len(pool.entries), r, h, w, c,
                             pool.exclusion_horizon))
        for e in pool.entries:
            if len(e.pose_set) != r:
                raise ValueError(f"entry {e.id} pose_set length != r")
            if tuple(e.latent.shape) != (h, w, c):
                raise ValueError(f"entry {e.id} latent shape {e.latent.shape} != {latent_shape}")
            fh.write(struct.pack("<qqq", e.id, e.frame_range[0], e.frame_range[1]))
            for p in e.pose_set:
                fh.write(np.ascontiguousarray(p.matrix(), dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(e.latent, dtype="<f4").tobytes())


def load_pool(path) -> tuple[MemoryPool, int, tuple]:
    with open(path, "rb") as fh:
        if fh.read(4) != _SNAPSHOT_MAGIC:
            raise ValueError("bad pool snapshot magic")
        count, r, h, w, c, horizon = struct.unpack("<6I", fh.read(24))
        pool = MemoryPool(exclusion_horizon=horizon)
        for _ in range(count):
            eid, start, end = struct.unpack("<qqq", fh.read(24))
            poses = []
            for _ in range(r):
                m = np.frombuffer(fh.read(64), dtype="<f4").astype(float).reshape(4, 4)
                poses.append(Pose.from_matrix(m))
            latent = np.frombuffer(fh.read(4 * h * w * c), dtype="<f4")
            latent = latent.astype(float).reshape(h, w, c)
            insert(pool, MemoryEntry(eid, poses, latent, (start, end)))
    return pool, r, (h, w, c)
