"""Deterministic procedural voxel world: ray-cast renderer, latent codec, metrics.

The scene is a bounded occupancy grid (floor, perimeter walls, partition
walls with doorways, pillars, scattered colored blocks) generated purely
from 64-bit integer hashes of the seed, so the same seed yields bit-exact
geometry and colors on every platform. Rendering casts one ray per pixel
through a pinhole camera and walks the grid with integer DDA; shading is
block color times distance falloff times a fixed per-face factor, with no
lighting model, so pixel differences measure geometry and not shading
noise.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_RESOLUTION = (64, 64)  # (H, W)
DEFAULT_FOV_DEG = 75.0

_SKY = np.array([135.0, 185.0, 235.0])
_VOID = np.array([40.0, 42.0, 48.0])
_FACE_SHADE = np.array([1.0, 0.85, 0.7])  # x, y, z faces

_BASE_PALETTE = np.array([
    [0, 0, 0],        # 0: air, unused
    [96, 96, 104],    # floor
    [150, 110, 70],   # walls
    [200, 60, 60],    # pillar variants
    [60, 160, 200],
    [220, 180, 60],
    [140, 200, 80],
    [200, 100, 200],  # scattered blocks
], dtype=np.int64)

_U64 = np.uint64
_ESCAPE = 255  # sentinel block type in the padded shell


def _splitmix64(x):
    """Integer hash; numpy uint64 arithmetic wraps mod 2^64 by design."""
    with np.errstate(over="ignore"):
        x = np.asarray(x, dtype=_U64)
        x = x + _U64(0x9E3779B97F4A7C15)
        x = (x ^ (x >> _U64(30))) * _U64(0xBF58476D1CE4E5B9)
        x = (x ^ (x >> _U64(27))) * _U64(0x94D049BB133111EB)
        return x ^ (x >> _U64(31))


def _hash_coords(seed: int, tag: int, *coords):
    h = _splitmix64(_U64(seed & 0xFFFFFFFFFFFFFFFF) ^ _splitmix64(_U64(tag)))
    for c in coords:
        h = _splitmix64(h ^ _splitmix64(np.asarray(c, dtype=np.int64).astype(_U64)))
    return h


@dataclass
class SceneSpec:
    """Procedural scene: occupancy grid plus palette, all derived from seed."""

    seed: int = 0
    size: tuple = (48, 12, 48)
    grid: np.ndarray = field(init=False, repr=False)
    palette: np.ndarray = field(init=False, repr=False)
    spawn: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        nx, ny, nz = self.size
        grid = np.zeros((nx, ny, nz), dtype=np.uint8)
        grid[:, 0, :] = 1  # floor
        grid[0, :, :] = 2
        grid[nx - 1, :, :] = 2
        grid[:, :, 0] = 2
        grid[:, :, nz - 1] = 2

        xs, zs = np.meshgrid(np.arange(nx), np.arange(nz), indexing="ij")

        # partition walls with hashed doorways form rooms and corridors
        part = _hash_coords(self.seed, 2, xs, zs)
        on_line = ((xs % 12 == 6) | (zs % 12 == 6)) & (xs > 0) & (xs < nx - 1) & (zs > 0) & (zs < nz - 1)
        wall_cells = on_line & (part % _U64(4) != 0)
        wall_h = min(4, ny - 1)
        for y in range(1, wall_h + 1):
            grid[:, y, :][wall_cells] = 2

        # pillars on a coarse lattice, hash-gated, with hashed heights/types
        pil = _hash_coords(self.seed, 1, xs, zs)
        pil_cells = (xs % 6 == 3) & (zs % 6 == 3) & ~on_line & (pil % _U64(4) != 0)
        heights = 2 + (pil >> _U64(8)) % _U64(3)
        types = 3 + (pil >> _U64(16)) % _U64(4)
        px, pz = np.nonzero(pil_cells)
        for x, z in zip(px, pz):
            h = int(heights[x, z])
            grid[x, 1:1 + h, z] = int(types[x, z])

        # sparse scattered blocks in remaining air
        xi, yi, zi = np.meshgrid(np.arange(nx), np.arange(1, ny), np.arange(nz),
                                 indexing="ij")
        sc = _hash_coords(self.seed, 3, xi, yi, zi)
        scatter = (sc % _U64(149) == 0) & (grid[:, 1:, :] == 0)
        grid[:, 1:, :][scatter] = (4 + (sc >> _U64(16)) % _U64(4))[scatter].astype(np.uint8)

        # guaranteed-free spawn chamber at the grid center
        cx, cz = nx // 2, nz // 2
        grid[max(1, cx - 4):cx + 5, 1:min(ny, 6), max(1, cz - 4):cz + 5] = 0

        # per-scene palette modulation, integer arithmetic only
        pal = _BASE_PALETTE.copy()
        for t in range(1, pal.shape[0]):
            h = _hash_coords(self.seed, 100, t)
            shift = np.array([int(h % _U64(33)), int((h >> _U64(8)) % _U64(33)),
                              int((h >> _U64(16)) % _U64(33))]) - 16
            pal[t] = np.clip(pal[t] + shift, 0, 255)

        self.grid = grid
        self.palette = pal.astype(float)
        self.spawn = np.array([cx + 0.5, 2.5, cz + 0.5])
        self.rebuild()

    def rebuild(self) -> None:
        """Refresh the ray-walk acceleration data; call after mutating grid."""
        nx, ny, nz = self.size
        # one-cell sentinel shell (255) lets the ray walk skip bounds checks
        padded = np.full((nx + 2, ny + 2, nz + 2), _ESCAPE, dtype=np.uint8)
        padded[1:-1, 1:-1, 1:-1] = self.grid
        self._flat = padded.ravel()
        self._strides = np.array([(ny + 2) * (nz + 2), nz + 2, 1], dtype=np.int64)

    def occupancy(self, x: int, y: int, z: int) -> int:
        nx, ny, nz = self.size
        if 0 <= x < nx and 0 <= y < ny and 0 <= z < nz:
            return int(self.grid[x, y, z])
        return 0


@dataclass
class Frame:
    pixels: np.ndarray  # (H, W, 3) uint8
    pose: object = None
    index: int = -1


def _as_pixels(f) -> np.ndarray:
    return f.pixels if isinstance(f, Frame) else np.asarray(f)


_dir_cache: dict = {}


def _pixel_dirs(height: int, width: int, fov_deg: float) -> np.ndarray:
    key = (height, width, fov_deg)
    cached = _dir_cache.get(key)
    if cached is not None:
        return cached
    f = (height / 2.0) / math.tan(math.radians(fov_deg) / 2.0)
    xs = (np.arange(width) + 0.5 - width / 2.0) / f
    ys = -(np.arange(height) + 0.5 - height / 2.0) / f
    dirs = np.empty((height, width, 3))
    dirs[:, :, 0] = xs[None, :]
    dirs[:, :, 1] = ys[:, None]
    dirs[:, :, 2] = 1.0
    dirs /= np.linalg.norm(dirs, axis=2, keepdims=True)
    _dir_cache[key] = dirs
    return dirs


def clamp_to_free(scene: SceneSpec, pos: np.ndarray) -> np.ndarray:
    """Clamp a world position into the grid's free interior; solid cells are
    escaped by moving up. Clamping events are logged, never fatal."""
    nx, ny, nz = scene.size
    p = np.array(pos, dtype=float)
    lo = np.array([1.001, 1.001, 1.001])
    hi = np.array([nx - 1.001, ny - 0.001, nz - 1.001])
    clamped = np.minimum(np.maximum(p, lo), hi)
    if not np.array_equal(clamped, p):
        log.info("camera clamped from %s to %s", p, clamped)
        p = clamped
    ix, iy, iz = int(p[0]), int(p[1]), int(p[2])
    while iy < ny and scene.grid[ix, min(iy, ny - 1), iz] != 0:
        iy += 1
        p[1] = iy + 0.5
    return p


def render(scene: SceneSpec, pose, resolution: tuple = DEFAULT_RESOLUTION,
           fov_deg: float = DEFAULT_FOV_DEG, index: int = -1) -> Frame:
    """Ray-cast one frame from a camera-to-world pose.

    The camera center is pose.t offset by the scene spawn point; rays walk
    voxels front-to-back with DDA and stop at the first occupied cell.
    """
    height, width = resolution
    dirs = (_pixel_dirs(height, width, fov_deg) @ pose.R.T).reshape(-1, 3)
    origin = clamp_to_free(scene, np.asarray(pose.t, dtype=float) + scene.spawn)

    n = dirs.shape[0]
    nx, ny, nz = scene.size
    flat_grid = scene._flat
    sx, sy, sz = (int(v) for v in scene._strides)

    d = dirs.copy()
    d[np.abs(d) < 1e-12] = 1e-12  # avoid division by zero; rays stay representable
    inv = 1.0 / np.abs(d)
    pos = np.where(d > 0, 1.0, 0.0)
    voxel = np.floor(origin)
    frac = origin - voxel
    # per-axis state as flat columns; voxel position tracked as one padded
    # flat index per ray, advanced by signed strides
    tx, ty, tz = ((pos[:, a] - frac[a]) * (2.0 * pos[:, a] - 1.0) * inv[:, a]
                  for a in range(3))
    stepx = np.where(d[:, 0] > 0, sx, -sx).astype(np.int64)
    stepy = np.where(d[:, 1] > 0, sy, -sy).astype(np.int64)
    stepz = np.where(d[:, 2] > 0, sz, -sz).astype(np.int64)
    tdx, tdy, tdz = inv[:, 0].copy(), inv[:, 1].copy(), inv[:, 2].copy()
    base = (int(voxel[0]) + 1) * sx + (int(voxel[1]) + 1) * sy + (int(voxel[2]) + 1) * sz
    flat = np.full(n, base, dtype=np.int64)

    hit_type = np.zeros(n, dtype=np.uint8)
    hit_dist = np.zeros(n)
    hit_axis = np.zeros(n, dtype=np.int64)
    alive = np.arange(n)

    max_iters = 2 * (nx + ny + nz) + 8
    for _ in range(max_iters):
        if alive.size == 0:
            break
        tmin = np.minimum(np.minimum(tx, ty), tz)
        mx = tx == tmin
        my = (~mx) & (ty == tmin)
        mz = ~(mx | my)
        flat = flat + np.where(mx, stepx, np.where(my, stepy, stepz))
        tx = tx + mx * tdx
        ty = ty + my * tdy
        tz = tz + mz * tdz
        blk = flat_grid[flat]
        done = blk != 0
        if done.any():
            idx = alive[done]
            hit_type[idx] = blk[done]
            hit_dist[idx] = tmin[done]
            hit_axis[idx] = np.where(mx[done], 0, np.where(my[done], 1, 2))
            keep = ~done
            alive = alive[keep]
            flat = flat[keep]
            tx, ty, tz = tx[keep], ty[keep], tz[keep]
            tdx, tdy, tdz = tdx[keep], tdy[keep], tdz[keep]
            stepx, stepy, stepz = stepx[keep], stepy[keep], stepz[keep]

    colors = np.empty((n, 3))
    solid = (hit_type > 0) & (hit_type != _ESCAPE)
    falloff = 1.0 / (1.0 + 0.06 * hit_dist[solid])
    shade = _FACE_SHADE[hit_axis[solid]]
    colors[solid] = scene.palette[hit_type[solid]] * (falloff * shade)[:, None]
    sky = ~solid
    colors[sky] = np.where(dirs[sky, 1:2] > 0, _SKY[None, :], _VOID[None, :])

    pixels = np.floor(colors + 0.5).clip(0, 255).astype(np.uint8)
    return Frame(pixels.reshape(height, width, 3), pose=pose, index=index)


@dataclass(frozen=True)
class ToyCodec:
    """Fixed linear latent codec: block-average downsample spatially, stack
    frames along channels. Invertible up to quantization on scenes that are
    piecewise constant at block scale."""

    r: int = 4
    downsample: int = 8

    def latent_shape(self, resolution: tuple) -> tuple:
        height, width = resolution
        if height % self.downsample or width % self.downsample:
            raise ValueError(f"resolution {resolution} not divisible by {self.downsample}")
        return (height // self.downsample, width // self.downsample, 3 * self.r)

    def encode(self, frames) -> np.ndarray:
        arrs = [_as_pixels(f) for f in frames]
        if len(arrs) != self.r:
            raise ValueError(f"expected {self.r} frames, got {len(arrs)}")
        height, width, _ = arrs[0].shape
        d = self.downsample
        if height % d or width % d:
            raise ValueError(f"frame shape {arrs[0].shape} not divisible by {d}")
        chans = []
        for a in arrs:
            if a.shape != arrs[0].shape:
                raise ValueError("frames must share one shape")
            f = a.astype(float) / 255.0
            chans.append(f.reshape(height // d, d, width // d, d, 3).mean(axis=(1, 3)))
        return np.concatenate(chans, axis=2)

    def decode(self, latent: np.ndarray) -> list:
        latent = np.asarray(latent, dtype=float)
        h, w, c = latent.shape
        if c != 3 * self.r:
            raise ValueError(f"latent channels {c} != 3*r for r={self.r}")
        d = self.downsample
        frames = []
        for i in range(self.r):
            block = latent[:, :, 3 * i:3 * i + 3]
            up = block.repeat(d, axis=0).repeat(d, axis=1) * 255.0
            frames.append(np.floor(up + 0.5).clip(0, 255).astype(np.uint8))
        return frames


PSNR_CAP_DB = 99.0


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB over all channels, capped at 99."""
    pa, pb = _as_pixels(a), _as_pixels(b)
    if pa.shape != pb.shape:
        raise ValueError(f"shape mismatch {pa.shape} vs {pb.shape}")
    mse = float(np.mean((pa.astype(float) - pb.astype(float)) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(255.0 ** 2 / mse))


def sharpness(f) -> float:
    """Variance of the 3x3 Laplacian of the BT.601 grayscale image."""
    p = _as_pixels(f).astype(float)
    gray = 0.299 * p[:, :, 0] + 0.587 * p[:, :, 1] + 0.114 * p[:, :, 2]
    lap = (gray[:-2, 1:-1] + gray[2:, 1:-1] + gray[1:-1, :-2] + gray[1:-1, 2:]
           - 4.0 * gray[1:-1, 1:-1])
    return float(np.var(lap))


def save_png(frame, path) -> None:
    from PIL import Image

    Image.fromarray(_as_pixels(frame), mode="RGB").save(path, format="PNG")


def load_png(path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))


def save_ppm(frame, path) -> None:
    """Binary P6 dump for bit-exact golden comparisons."""
    p = _as_pixels(frame)
    height, width, _ = p.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{width} {height}\n255\n".encode())
        fh.write(p.tobytes())
