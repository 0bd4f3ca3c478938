"""Camera conditioning: per-frame ray embeddings and the injection MLP.

Each pose is reduced to the 6-vector line coordinates of its optical axis
(unit direction d of the +z axis in the window-reference frame, moment
m = o x d with o the camera center in that frame), stacked F x 6. Frames
are then grouped r at a time to match the temporal compression of the
latent stream, and a two-layer MLP maps each group into the feature width
of the denoiser, injected additively.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .se3 import Pose, Trajectory, compose, inverse

_WEIGHTS_MAGIC = b"CEW1"


def poses_to_plucker(traj: Trajectory, reference: Pose) -> np.ndarray:
    """F x 6 array of (direction, moment) rows, realigned to `reference`.

    Every pose is left-multiplied by inverse(reference), so the embedding
    depends only on motion relative to the reference frame, not on any
    global placement.
    """
    inv_ref = inverse(reference)
    rs = np.stack([p.R for p in traj.poses])
    ts = np.stack([p.t for p in traj.poses])
    d = np.einsum("ij,njk->nik", inv_ref.R, rs)[:, :, 2]
    o = ts @ inv_ref.R.T + inv_ref.t
    out = np.empty((len(traj), 6))
    out[:, :3] = d
    out[:, 3] = o[:, 1] * d[:, 2] - o[:, 2] * d[:, 1]
    out[:, 4] = o[:, 2] * d[:, 0] - o[:, 0] * d[:, 2]
    out[:, 5] = o[:, 0] * d[:, 1] - o[:, 1] * d[:, 0]
    return out


def group_per_latent(p: np.ndarray, r: int) -> np.ndarray:
    """Concatenate r consecutive per-frame rows into one row per latent."""
    p = np.asarray(p, dtype=float)
    if p.ndim != 2 or p.shape[1] != 6:
        raise ValueError(f"expected an F x 6 array, got {p.shape}")
    f_frames = p.shape[0]
    if f_frames % r != 0:
        raise ValueError(f"frame count {f_frames} not divisible by r={r}")
    return p.reshape(f_frames // r, 6 * r)


def ungroup_per_latent(code: np.ndarray, r: int) -> np.ndarray:
    code = np.asarray(code, dtype=float)
    if code.ndim != 2 or code.shape[1] != 6 * r:
        raise ValueError(f"expected f x {6 * r}, got {code.shape}")
    return code.reshape(code.shape[0] * r, 6)


@dataclass
class CameraEmbedder:
    """Two affine layers with a sigmoid-weighted linear unit between them."""

    w1: np.ndarray  # (hidden, 6r)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (c_feat, hidden)
    b2: np.ndarray  # (c_feat,)

    def __post_init__(self):
        self.w1 = np.asarray(self.w1, dtype=float)
        self.b1 = np.asarray(self.b1, dtype=float)
        self.w2 = np.asarray(self.w2, dtype=float)
        self.b2 = np.asarray(self.b2, dtype=float)
        h, _ = self.w1.shape
        c, h2 = self.w2.shape
        if h2 != h or self.b1.shape != (h,) or self.b2.shape != (c,):
            raise ValueError("inconsistent embedder weight shapes")
        for a in (self.w1, self.b1, self.w2, self.b2):
            if not np.all(np.isfinite(a)):
                raise ValueError("embedder weights must be finite")

    @property
    def in_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    @property
    def out_dim(self) -> int:
        return self.w2.shape[0]

    def params(self) -> dict:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}


def init_camera_embedder(r: int, hidden: int, out_dim: int, seed: int = 0,
                         zero_init_output: bool = True) -> CameraEmbedder:
    """Seeded initialization; with zero_init_output the module starts as an
    exact identity under additive injection."""
    rng = np.random.default_rng(seed)
    in_dim = 6 * r
    w1 = rng.standard_normal((hidden, in_dim)) / np.sqrt(in_dim)
    b1 = np.zeros(hidden)
    if zero_init_output:
        w2 = np.zeros((out_dim, hidden))
    else:
        w2 = rng.standard_normal((out_dim, hidden)) / np.sqrt(hidden)
    b2 = np.zeros(out_dim)
    return CameraEmbedder(w1, b1, w2, b2)


def _silu(x: np.ndarray) -> np.ndarray:
    return x / (1.0 + np.exp(-x))


def _silu_grad(x: np.ndarray) -> np.ndarray:
    s = 1.0 / (1.0 + np.exp(-x))
    return s * (1.0 + x * (1.0 - s))


def embedder_forward(e: CameraEmbedder, code: np.ndarray) -> np.ndarray:
    code = np.atleast_2d(np.asarray(code, dtype=float))
    if code.shape[1] != e.in_dim:
        raise ValueError(f"code width {code.shape[1]} != embedder input {e.in_dim}")
    return _silu(code @ e.w1.T + e.b1) @ e.w2.T + e.b2


def embedder_backward(e: CameraEmbedder, code: np.ndarray,
                      grad_out: np.ndarray) -> dict:
    """Parameter gradients of sum(forward(code) * grad_out)."""
    code = np.atleast_2d(np.asarray(code, dtype=float))
    grad_out = np.atleast_2d(np.asarray(grad_out, dtype=float))
    y1 = code @ e.w1.T + e.b1
    a = _silu(y1)
    gb2 = grad_out.sum(axis=0)
    gw2 = grad_out.T @ a
    gy1 = (grad_out @ e.w2) * _silu_grad(y1)
    gb1 = gy1.sum(axis=0)
    gw1 = gy1.T @ code
    return {"w1": gw1, "b1": gb1, "w2": gw2, "b2": gb2}


def embed_and_inject(code: np.ndarray, features: np.ndarray,
                     e: CameraEmbedder) -> np.ndarray:
    """features + embedder(code), the additive residual conditioning form."""
    features = np.asarray(features, dtype=float)
    emb = embedder_forward(e, code)
    if emb.shape != features.shape:
        raise ValueError(f"feature shape {features.shape} != embedding shape {emb.shape}")
    return features + emb


def save_embedder(path, e: CameraEmbedder, r: int) -> None:
    """Weights file: magic "CEW1", then u32 (hidden, c_feat, r), then the
    flat little-endian float32 arrays w1, b1, w2, b2 in row-major order."""
    if e.in_dim != 6 * r:
        raise ValueError(f"embedder input {e.in_dim} inconsistent with r={r}")
    with open(path, "wb") as fh:
        fh.write(_WEIGHTS_MAGIC)
        fh.write(struct.pack("<III", e.hidden, e.out_dim, r))
        for a in (e.w1, e.b1, e.w2, e.b2):
            fh.write(np.ascontiguousarray(a, dtype="<f4").tobytes())


def load_embedder(path) -> tuple[CameraEmbedder, int]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _WEIGHTS_MAGIC:
            raise ValueError(f"bad weights file magic {magic!r}")
        hidden, c_feat, r = struct.unpack("<III", fh.read(12))
        in_dim = 6 * r
        counts = [hidden * in_dim, hidden, c_feat * hidden, c_feat]
        flats = []
        for n in counts:
            buf = fh.read(4 * n)
            if len(buf) != 4 * n:
                raise ValueError("truncated weights file")
            flats.append(np.frombuffer(buf, dtype="<f4").astype(float))
    e = CameraEmbedder(flats[0].reshape(hidden, in_dim), flats[1],
                       flats[2].reshape(c_feat, hidden), flats[3])
    return e, r
