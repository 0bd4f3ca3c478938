"""SE(3) rigid-transform kernels: twists, exponential/logarithm, composition.

Conventions used throughout the engine:
- right-handed coordinates, camera looks along +z, y is up;
- poses are camera-to-world extrinsics (R maps camera-frame vectors to the
  world frame, t is the camera center in world coordinates);
- a twist is a per-frame-transition velocity [v; w] expressed in the
  previous camera frame, so global poses accumulate by right-composition.

Numerical policy: closed forms (Rodrigues + left Jacobian) everywhere,
with a 2nd-order Taylor fallback below SMALL_ANGLE to avoid catastrophic
cancellation near zero rotation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import SingularLogarithmError

# Below this rotation angle both series switch to their 2nd-order Taylor form.
SMALL_ANGLE = 1e-6

# log_pose refuses angles within this margin of pi (branch ambiguity).
LOG_SINGULARITY_MARGIN = 1e-6

# compose re-orthonormalizes R when ||R^T R - I||_F exceeds this.
ORTHO_DEFECT_LIMIT = 1e-12

DEFAULT_FRAME_INTERVAL = 0.05  # seconds per frame, 20 FPS


@dataclass(frozen=True)
class Twist:
    """Six-vector of linear (v) and angular (w) velocity per frame transition."""

    v: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float).reshape(3))
        object.__setattr__(self, "w", np.asarray(self.w, dtype=float).reshape(3))
        if not (np.all(np.isfinite(self.v)) and np.all(np.isfinite(self.w))):
            raise ValueError("twist components must be finite")

    @classmethod
    def zero(cls) -> "Twist":
        return cls(np.zeros(3), np.zeros(3))

    @classmethod
    def from_vector(cls, a) -> "Twist":
        a = np.asarray(a, dtype=float).reshape(6)
        return cls(a[:3], a[3:])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.v, self.w])

    def scale(self, dt: float) -> "Twist":
        """Explicit duration scaling: multiplies all six components."""
        return Twist(self.v * dt, self.w * dt)


@dataclass
class Pose:
    """Rigid transform: 3x3 rotation R and translation 3-vector t."""

    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        self.R = np.asarray(self.R, dtype=float).reshape(3, 3)
        self.t = np.asarray(self.t, dtype=float).reshape(3)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.R
        m[:3, 3] = self.t
        return m

    @classmethod
    def from_matrix(cls, m) -> "Pose":
        m = np.asarray(m, dtype=float)
        return cls(m[:3, :3].copy(), m[:3, 3].copy())

    def orthogonality_defect(self) -> float:
        g = self.R.T @ self.R
        return float(np.sqrt(np.sum((g - np.eye(3)) ** 2)))

    def validate(self, tol: float = 1e-9) -> None:
        if self.orthogonality_defect() > tol:
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(self.R) - 1.0) > tol:
            raise ValueError("rotation determinant is not +1")


@dataclass
class Trajectory:
    """Time-ordered global poses; by convention poses[0] is the identity."""

    poses: list = field(default_factory=lambda: [Pose.identity()])
    frame_interval: float = DEFAULT_FRAME_INTERVAL

    def __post_init__(self):
        if len(self.poses) < 1:
            raise ValueError("trajectory needs at least one pose")

    def __len__(self) -> int:
        return len(self.poses)

    def positions(self) -> np.ndarray:
        return np.stack([p.t for p in self.poses])

    def rotations(self) -> np.ndarray:
        return np.stack([p.R for p in self.poses])


def hat(w) -> np.ndarray:
    """Skew-symmetric matrix of a 3-vector."""
    x, y, z = np.asarray(w, dtype=float).reshape(3)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(W) -> np.ndarray:
    """Inverse of hat for a skew-symmetric matrix."""
    W = np.asarray(W, dtype=float)
    return np.array([W[2, 1], W[0, 2], W[1, 0]])


def rodrigues(w) -> np.ndarray:
    """Rotation matrix of a rotation vector: exp of hat(w)."""
    w = np.asarray(w, dtype=float).reshape(3)
    theta = float(np.linalg.norm(w))
    W = hat(w)
    if theta < SMALL_ANGLE:
        return np.eye(3) + W + 0.5 * (W @ W)
    a = math.sin(theta) / theta
    half = math.sin(theta / 2.0) / theta
    b = 2.0 * half * half  # (1 - cos)/theta^2 without cancellation
    return np.eye(3) + a * W + b * (W @ W)


def left_jacobian(w) -> np.ndarray:
    """V matrix coupling rotation into translation in the SE(3) exponential."""
    w = np.asarray(w, dtype=float).reshape(3)
    theta = float(np.linalg.norm(w))
    W = hat(w)
    if theta < SMALL_ANGLE:
        return np.eye(3) + 0.5 * W + (W @ W) / 6.0
    half = math.sin(theta / 2.0) / theta
    b = 2.0 * half * half
    c = (theta - math.sin(theta)) / (theta * theta * theta)
    return np.eye(3) + b * W + c * (W @ W)


def left_jacobian_inv(w) -> np.ndarray:
    w = np.asarray(w, dtype=float).reshape(3)
    theta = float(np.linalg.norm(w))
    W = hat(w)
    if theta < SMALL_ANGLE:
        return np.eye(3) - 0.5 * W + (W @ W) / 12.0
    c = 1.0 / (theta * theta) - (1.0 + math.cos(theta)) / (2.0 * theta * math.sin(theta))
    return np.eye(3) - 0.5 * W + c * (W @ W)


def exp_twist(a: Twist) -> Pose:
    """Closed-form SE(3) exponential of a twist.

    Rotation via Rodrigues on w, translation via the left Jacobian applied
    to v, so simultaneous translation and rotation integrate as one screw
    motion rather than two decoupled updates.
    """
    return Pose(rodrigues(a.w), left_jacobian(a.w) @ a.v)


def rotation_angle(R) -> float:
    """Geodesic rotation angle of a rotation matrix, in [0, pi].

    atan2 of the measured sine (from the antisymmetric part) against the
    measured cosine (from the trace) stays accurate at both ends of the
    range, unlike a bare arccos of the trace.
    """
    R = np.asarray(R, dtype=float)
    s = 0.5 * float(np.linalg.norm(vee(R - R.T)))
    c = (float(np.trace(R)) - 1.0) * 0.5
    return math.atan2(s, c)


def so3_log(R) -> np.ndarray:
    """Rotation vector of a rotation matrix; raises near the pi branch point."""
    R = np.asarray(R, dtype=float)
    axis_raw = vee(R - R.T)  # 2 sin(theta) times the unit axis
    n = float(np.linalg.norm(axis_raw))
    c = (float(np.trace(R)) - 1.0) * 0.5
    theta = math.atan2(0.5 * n, c)
    if theta >= math.pi - LOG_SINGULARITY_MARGIN:
        raise SingularLogarithmError(
            f"rotation angle {theta:.9f} is within {LOG_SINGULARITY_MARGIN} of pi"
        )
    if theta < SMALL_ANGLE:
        return 0.5 * axis_raw * (1.0 + theta * theta / 6.0)
    return axis_raw * (theta / n)


def log_pose(p: Pose) -> Twist:
    """SE(3) logarithm; inverse of exp_twist away from the pi singularity."""
    w = so3_log(p.R)
    v = left_jacobian_inv(w) @ p.t
    return Twist(v, w)


def compose(a: Pose, b: Pose) -> Pose:
    """Pose composition a then b (b expressed in a's frame).

    Re-orthonormalizes the product rotation by polar projection whenever its
    orthogonality defect exceeds ORTHO_DEFECT_LIMIT, so long chains do not
    drift off the manifold.
    """
    R = a.R @ b.R
    g = R.T @ R
    defect_sq = float(np.sum((g - np.eye(3)) ** 2))
    if defect_sq > ORTHO_DEFECT_LIMIT * ORTHO_DEFECT_LIMIT:
        R = _polar_project(R)
    return Pose(R, a.R @ b.t + a.t)


def _polar_project(R: np.ndarray) -> np.ndarray:
    u, _, vt = np.linalg.svd(R)
    out = u @ vt
    if np.linalg.det(out) < 0.0:
        out = u @ np.diag([1.0, 1.0, -1.0]) @ vt
    return out


def inverse(p: Pose) -> Pose:
    return Pose(p.R.T.copy(), -(p.R.T @ p.t))


def accumulate(deltas, frame_interval: float = DEFAULT_FRAME_INTERVAL) -> Trajectory:
    """Fold relative poses into a global trajectory starting at identity."""
    poses = [Pose.identity()]
    for d in deltas:
        poses.append(compose(poses[-1], d))
    return Trajectory(poses, frame_interval)


def linear_step(prev: Pose, a: Twist) -> Pose:
    """Decoupled baseline update: translation and rotation advanced independently.

    t' = t + R v and R' = R exp(hat(w)). Exact when v = 0 or w = 0; drifts
    from the true screw motion whenever both are nonzero. Exposed only for
    the integration-scheme comparison harness.
    """
    return Pose(prev.R @ rodrigues(a.w), prev.t + prev.R @ a.v)


def rotation_to_quat(R) -> np.ndarray:
    """Unit quaternion (w, x, y, z), Hamilton convention, w >= 0."""
    R = np.asarray(R, dtype=float)
    m00, m11, m22 = R[0, 0], R[1, 1], R[2, 2]
    tr = m00 + m11 + m22
    if tr > 0.0:
        s = math.sqrt(tr + 1.0) * 2.0
        q = np.array([0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s,
                      (R[1, 0] - R[0, 1]) / s])
    elif m00 >= m11 and m00 >= m22:
        s = math.sqrt(1.0 + m00 - m11 - m22) * 2.0
        q = np.array([(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s,
                      (R[0, 2] + R[2, 0]) / s])
    elif m11 >= m22:
        s = math.sqrt(1.0 + m11 - m00 - m22) * 2.0
        q = np.array([(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s,
                      (R[1, 2] + R[2, 1]) / s])
    else:
        s = math.sqrt(1.0 + m22 - m00 - m11) * 2.0
        q = np.array([(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s,
                      (R[1, 2] + R[2, 1]) / s, 0.25 * s])
    q = q / np.linalg.norm(q)
    if q[0] < 0.0:
        q = -q
    return q


def quat_to_rotation(q) -> np.ndarray:
    """Rotation matrix of a (w, x, y, z) quaternion; input is normalized first."""
    q = np.asarray(q, dtype=float).reshape(4)
    n = float(np.linalg.norm(q))
    if n == 0.0 or not np.isfinite(n):
        raise ValueError("quaternion must be nonzero and finite")
    w, x, y, z = q / n
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])
