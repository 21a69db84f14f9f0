"""Relative extended pose between body and target, and its dynamics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from relpose.lie import ExtendedPose, exp_so3, hat


@dataclass(frozen=True)
class RelativeState:
    """Relative orientation ``R = Q_T^T Q_B`` and the body-frame offsets.

    Sign convention: ``xi = -Q_B^T (p_T - p_B)`` and ``nu = -Q_B^T (v_T - v_B)``,
    so ``|xi|`` is the body-target distance.
    """

    R: np.ndarray
    xi: np.ndarray
    nu: np.ndarray

    def as_matrix(self) -> np.ndarray:
        """5x5 embedding ``[[R^T, -nu, -xi], [0, I2]]``, equal to ``X_B^-1 X_T``."""
        X = np.eye(5)
        X[:3, :3] = self.R.T
        X[:3, 3] = -self.nu
        X[:3, 4] = -self.xi
        return X

    @classmethod
    def from_matrix(cls, X) -> RelativeState:
        X = np.asarray(X, dtype=float)
        return cls(X[:3, :3].T.copy(), -X[:3, 4], -X[:3, 3])


@dataclass(frozen=True)
class RelativeRates:
    R_dot: np.ndarray
    xi_dot: np.ndarray
    nu_dot: np.ndarray


def compose_relative(XB: ExtendedPose, XT: ExtendedPose) -> RelativeState:
    QBt = XB.R.T
    return RelativeState(XT.R.T @ XB.R, -QBt @ (XT.p - XB.p), -QBt @ (XT.v - XB.v))


def relative_dynamics(s: RelativeState, uB, uT) -> RelativeRates:
    """Time derivative of ``(R, xi, nu)`` given both IMU readings."""
    W = hat(uB.w)
    return RelativeRates(
        R_dot=-hat(uT.w) @ s.R + s.R @ W,
        xi_dot=-W @ s.xi + s.nu,
        nu_dot=-W @ s.nu + uB.a - s.R.T @ uT.a,
    )


def integrate_relative(s: RelativeState, uB, uT, dt: float, uB_next=None, uT_next=None) -> RelativeState:
    """One step of the relative dynamics.

    Rotation by split exponentials, translation by RK4 with linearly
    interpolated inputs (held when the ``*_next`` readings are missing).
    """
    uB_next = uB if uB_next is None else uB_next
    uT_next = uT if uT_next is None else uT_next
    wB = 0.5 * (uB.w + uB_next.w)
    wT = 0.5 * (uT.w + uT_next.w)

    def rot(h):
        return exp_so3(-h * wT) @ s.R @ exp_so3(h * wB)

    def f(h, xi, nu):
        frac = h / dt
        aB = (1 - frac) * uB.a + frac * uB_next.a
        aT = (1 - frac) * uT.a + frac * uT_next.a
        W = hat((1 - frac) * uB.w + frac * uB_next.w)
        return -W @ xi + nu, -W @ nu + aB - rot(h).T @ aT

    k1 = f(0.0, s.xi, s.nu)
    k2 = f(0.5 * dt, s.xi + 0.5 * dt * k1[0], s.nu + 0.5 * dt * k1[1])
    k3 = f(0.5 * dt, s.xi + 0.5 * dt * k2[0], s.nu + 0.5 * dt * k2[1])
    k4 = f(dt, s.xi + dt * k3[0], s.nu + dt * k3[1])
    xi = s.xi + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    nu = s.nu + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    return RelativeState(rot(dt), xi, nu)


def propagate_Z(Z, wT, dt: float) -> np.ndarray:
    """``Z' = Z hat(w_T)`` advanced exactly over one step; start from ``I``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    return np.asarray(Z) @ exp_so3(np.asarray(wT, dtype=float) * dt)


def transformed_inputs(Z, aT) -> np.ndarray:
    """Target acceleration expressed through the auxiliary rotation, ``Z a_T``."""
    return np.asarray(Z) @ np.asarray(aT, dtype=float)


def transformed_rotation(Z, R) -> np.ndarray:
    return np.asarray(Z) @ np.asarray(R)


# Constant generators of the SE_2(3) embedding used in cross-checks.

def U_matrix(w, a) -> np.ndarray:
    U = np.zeros((5, 5))
    U[:3, :3] = hat(w)
    U[:3, 3] = a
    return U


def G_matrix(g: float) -> np.ndarray:
    G = np.zeros((5, 5))
    G[2, 3] = g
    return G


def N_matrix() -> np.ndarray:
    N = np.zeros((5, 5))
    N[3, 4] = -1.0
    return N


def relative_matrix_rate(X, uB, uT) -> np.ndarray:
    """``X U_T - U_B X + [N, X]`` for the 5x5 relative matrix."""
    N = N_matrix()
    return X @ U_matrix(uT.w, uT.a) - U_matrix(uB.w, uB.a) @ X + N @ X - X @ N
