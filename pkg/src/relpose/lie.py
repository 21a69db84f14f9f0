"""Small fixed-size linear algebra and Lie group helpers.

Rotations are plain ``(3, 3)`` float arrays; :func:`check_rotation` validates
them. Extended poses (rotation, velocity, position) live in :class:`ExtendedPose`
and embed as 5x5 matrices with the layout ``[[R, v, p], [0, I2]]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from relpose.constants import ROTATION_TOL, SKEW_TOL, SMALL_ANGLE, SYMMETRY_TOL, UNIT_TOL
from relpose.errors import NonSkewInput, NonUnitInput

E1 = np.array([1.0, 0.0, 0.0])
E2 = np.array([0.0, 1.0, 0.0])
E3 = np.array([0.0, 0.0, 1.0])


def hat(w) -> np.ndarray:
    """Skew-symmetric matrix with ``hat(w) @ x == np.cross(w, x)``."""
    w1, w2, w3 = np.asarray(w, dtype=float)
    return np.array([[0.0, -w3, w2], [w3, 0.0, -w1], [-w2, w1, 0.0]])


def vee(m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    scale = max(1.0, float(np.abs(m).max()))
    if np.abs(m + m.T).max() > SKEW_TOL * scale:
        raise NonSkewInput("matrix is not antisymmetric")
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def exp_so3(w) -> np.ndarray:
    """Rodrigues formula, with a Taylor expansion for tiny angles."""
    w = np.asarray(w, dtype=float)
    theta = float(np.sqrt(w @ w))
    W = hat(w)
    if theta < SMALL_ANGLE:
        return np.eye(3) + W + 0.5 * (W @ W)
    a = np.sin(theta) / theta
    b = (1.0 - np.cos(theta)) / (theta * theta)
    return np.eye(3) + a * W + b * (W @ W)


def log_so3(R) -> np.ndarray:
    """Rotation vector of ``R`` (angle in ``[0, pi]``)."""
    R = np.asarray(R, dtype=float)
    angle = rotation_angle(R)
    if angle < SMALL_ANGLE:
        return 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if np.pi - angle < 1e-6:
        # Axis from the symmetric part; sign is arbitrary at exactly pi.
        B = 0.5 * (R + np.eye(3))
        k = int(np.argmax(np.diag(B)))
        axis = B[:, k] / np.sqrt(max(B[k, k], 1e-300))
        return angle * axis / np.linalg.norm(axis)
    s = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return angle * s / (2.0 * np.sin(angle))


def rotation_angle(R) -> float:
    """Geodesic angle of ``R``, robust near 0 and pi."""
    R = np.asarray(R, dtype=float)
    c = np.clip(0.5 * (np.trace(R) - 1.0), -1.0, 1.0)
    s = 0.5 * np.linalg.norm([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return float(np.arctan2(s, c))


def rot_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def is_rotation(R, tol: float = ROTATION_TOL) -> bool:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        return False
    ortho = np.linalg.norm(R.T @ R - np.eye(3))
    return bool(ortho <= tol and abs(np.linalg.det(R) - 1.0) <= tol)


def check_rotation(R, tol: float = ROTATION_TOL) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    if not is_rotation(R, tol):
        raise ValueError("not a rotation matrix within tolerance")
    return R


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniformly distributed rotation (QR of a Gaussian matrix)."""
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def projector(y) -> np.ndarray:
    """``I - y y^T`` for a unit vector ``y``."""
    y = np.asarray(y, dtype=float)
    if abs(np.linalg.norm(y) - 1.0) > UNIT_TOL:
        raise NonUnitInput("projector requires a unit vector")
    return np.eye(y.size) - np.outer(y, y)


def vec(M) -> np.ndarray:
    """Column-major stacking."""
    return np.asarray(M, dtype=float).reshape(-1, order="F")


def unvec(v, rows: int = 3) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v.reshape(rows, v.size // rows, order="F")


# Names used for the 3x3 case throughout the package.
vec3x3 = vec


def unvec9(v) -> np.ndarray:
    return unvec(v, 3)


def kron(A, B) -> np.ndarray:
    return np.kron(np.atleast_2d(A), np.atleast_2d(B))


def symmetrize(M) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + M.T)


def is_symmetric(M, tol: float = SYMMETRY_TOL) -> bool:
    M = np.asarray(M, dtype=float)
    scale = np.linalg.norm(M)
    return bool(np.linalg.norm(M - M.T) <= tol * max(scale, 1.0))


@dataclass(frozen=True)
class ExtendedPose:
    """Element of SE_2(3): orientation, velocity (m/s) and position (m)."""

    R: np.ndarray
    v: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "R", np.array(self.R, dtype=float))
        object.__setattr__(self, "v", np.array(self.v, dtype=float))
        object.__setattr__(self, "p", np.array(self.p, dtype=float))

    @classmethod
    def identity(cls) -> ExtendedPose:
        return cls(np.eye(3), np.zeros(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, X) -> ExtendedPose:
        X = np.asarray(X, dtype=float)
        return cls(X[:3, :3], X[:3, 3], X[:3, 4])

    def as_matrix(self) -> np.ndarray:
        X = np.eye(5)
        X[:3, :3] = self.R
        X[:3, 3] = self.v
        X[:3, 4] = self.p
        return X

    def inverse(self) -> ExtendedPose:
        Rt = self.R.T
        return ExtendedPose(Rt, -Rt @ self.v, -Rt @ self.p)

    def __matmul__(self, other: ExtendedPose) -> ExtendedPose:
        return ExtendedPose(
            self.R @ other.R, self.R @ other.v + self.v, self.R @ other.p + self.p
        )
