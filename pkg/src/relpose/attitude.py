"""Complementary filter on SO(3) fed by the ambient-space attitude estimate.

The Riccati observer returns ``Gamma``, an unconstrained 3x3 estimate of
``R^T``. The filter below turns it into a rotation that moves smoothly, unlike
the SVD projection which jumps when ``Gamma`` crosses a singular matrix.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from relpose.constants import SINGULAR_GAMMA_TOL, UNSTABLE_EQ_TOL
from relpose.errors import SingularGamma
from relpose.lie import exp_so3, rotation_angle


@dataclass(frozen=True)
class AttitudeEstimate:
    R_hat: np.ndarray = field(default_factory=lambda: np.eye(3))
    k: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        k = tuple(float(x) for x in self.k)
        if len(k) != 3 or min(k) <= 0:
            raise ValueError("gains must be three positive numbers")
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "R_hat", np.array(self.R_hat, dtype=float))


class Equilibrium(str, enum.Enum):
    NEAR_STABLE = "near_stable"
    NEAR_UNSTABLE = "near_unstable"
    TRANSIENT = "transient"


@dataclass(frozen=True)
class EquilibriumClassification:
    label: Equilibrium
    trace: float


def filter_innovation(R_hat, Gamma, k=(1.0, 1.0, 1.0)) -> np.ndarray:
    """``sum_i k_i (R_hat e_i) x (Gamma^T e_i)``."""
    a = np.asarray(R_hat, dtype=float)
    g = np.asarray(Gamma, dtype=float)
    # Column i of R_hat is R_hat e_i; row i of Gamma is Gamma^T e_i.
    cross = np.array(
        [
            a[1] * g[:, 2] - a[2] * g[:, 1],
            a[2] * g[:, 0] - a[0] * g[:, 2],
            a[0] * g[:, 1] - a[1] * g[:, 0],
        ]
    )
    return cross @ np.asarray(k, dtype=float)


def filter_step(est: AttitudeEstimate, wT, omega, Gamma, dt: float) -> AttitudeEstimate:
    """Integrate ``R_hat' = -hat(w_T) R_hat + R_hat hat(omega) + hat(sigma) R_hat``.

    Split exponentials keep the estimate on SO(3) exactly.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    sigma = filter_innovation(est.R_hat, Gamma, est.k)
    left = exp_so3((sigma - np.asarray(wT, dtype=float)) * dt)
    R_new = left @ est.R_hat @ exp_so3(np.asarray(omega, dtype=float) * dt)
    return AttitudeEstimate(R_new, est.k)


def filter_step_batch(R_hats, wT, omega, Gamma, dt: float, k=(1.0, 1.0, 1.0)) -> np.ndarray:
    """:func:`filter_step` for a stack of estimates ``(n, 3, 3)`` sharing inputs."""
    R_hats = np.asarray(R_hats, dtype=float)
    Gt = np.asarray(Gamma, dtype=float).T
    k = np.asarray(k, dtype=float)
    cols = np.swapaxes(R_hats, 1, 2)  # rows are R_hat e_i
    sigma = np.einsum("nij,i->nj", np.cross(cols, Gt.T[None]), k)
    phi = (sigma - np.asarray(wT, dtype=float)) * dt
    left = _exp_batch(phi)
    return left @ R_hats @ exp_so3(np.asarray(omega, dtype=float) * dt)


def _exp_batch(phi):
    theta = np.linalg.norm(phi, axis=1)
    W = np.zeros((len(phi), 3, 3))
    W[:, 0, 1], W[:, 0, 2], W[:, 1, 2] = -phi[:, 2], phi[:, 1], -phi[:, 0]
    W = W - np.swapaxes(W, 1, 2)
    small = theta < 1e-8
    safe = np.where(small, 1.0, theta)
    a = np.where(small, 1.0, np.sin(safe) / safe)
    b = np.where(small, 0.5, (1.0 - np.cos(safe)) / safe**2)
    return np.eye(3) + a[:, None, None] * W + b[:, None, None] * (W @ W)


def project_to_so3(Gamma) -> np.ndarray:
    """Nearest rotation in Frobenius norm (SVD with determinant fix)."""
    Gamma = np.asarray(Gamma, dtype=float)
    U, s, Vt = np.linalg.svd(Gamma)
    if s[-1] <= SINGULAR_GAMMA_TOL:
        raise SingularGamma("cannot project a (near) singular matrix onto SO(3)")
    d = np.sign(np.linalg.det(U @ Vt))
    return U @ np.diag([1.0, 1.0, d]) @ Vt


def attitude_error_angle(R, R_hat) -> float:
    """Angle (rad) of ``R^T R_hat``."""
    return rotation_angle(np.asarray(R).T @ np.asarray(R_hat))


def classify_equilibrium(R, R_hat, threshold: float = UNSTABLE_EQ_TOL) -> EquilibriumClassification:
    tr = float(np.trace(np.asarray(R).T @ np.asarray(R_hat)))
    if abs(tr + 1.0) < threshold:
        label = Equilibrium.NEAR_UNSTABLE
    elif abs(tr - 3.0) < threshold:
        label = Equilibrium.NEAR_STABLE
    else:
        label = Equilibrium.TRANSIENT
    return EquilibriumClassification(label, tr)


def max_step_rotation(wT, omega, sigma, dt: float) -> float:
    """Upper bound on the per-step angular change of the filter estimate."""
    return float((np.linalg.norm(wT) + np.linalg.norm(omega) + np.linalg.norm(sigma)) * dt)

