"""Riccati observer for the relative state embedded in R^15.

The estimate is ``(xi_hat, nu_hat, gamma_z)`` where ``gamma_z`` approximates
``vec(R_z^T)`` with ``R_z = Z R`` and ``Z`` the auxiliary rotation that follows
the target gyro. The gain is ``P C^T D`` with ``P`` the solution of the
continuous Riccati equation, integrated jointly with the estimate by RK4 on the
sampling grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from relpose.errors import NonPositiveP, NonUnitBearing
from relpose.lie import exp_so3, hat, is_rotation, projector, unvec9, vec
from relpose.relative import RelativeState, propagate_Z
from relpose.world import ImuSample, MeasurementSample, OutputMode

STATE_DIM = 15


@dataclass(frozen=True)
class ObserverConfig:
    P0: np.ndarray = field(default_factory=lambda: 3.0 * np.eye(STATE_DIM))
    V: np.ndarray = field(default_factory=lambda: 1e-3 * np.eye(STATE_DIM))
    D: np.ndarray = field(default_factory=lambda: 20.0 * np.eye(3))
    output_mode: OutputMode = OutputMode.POSITION
    dt: float = 1e-3
    # Innovation is applied on every ``meas_decimation``-th step only.
    meas_decimation: int = 1

    def __post_init__(self):
        object.__setattr__(self, "output_mode", OutputMode(self.output_mode))
        for name, n in (("P0", STATE_DIM), ("V", STATE_DIM), ("D", 3)):
            M = np.asarray(getattr(self, name), dtype=float)
            if M.shape != (n, n):
                raise ValueError(f"{name} must be {n}x{n}")
            if np.linalg.norm(M - M.T) > 1e-9 * max(1.0, np.linalg.norm(M)):
                raise ValueError(f"{name} must be symmetric")
            if np.linalg.eigvalsh(M).min() <= 0:
                raise ValueError(f"{name} must be positive definite")
            object.__setattr__(self, name, M)
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if int(self.meas_decimation) < 1:
            raise ValueError("meas_decimation must be >= 1")


@dataclass(frozen=True)
class ObserverState:
    xi_hat: np.ndarray
    nu_hat: np.ndarray
    gamma_z: np.ndarray
    P: np.ndarray
    Z: np.ndarray = field(default_factory=lambda: np.eye(3))
    t: float = 0.0
    step: int = 0

    @classmethod
    def initial(cls, xi_hat, nu_hat, gamma_z=None, P0=None) -> ObserverState:
        gamma_z = vec(np.eye(3)) if gamma_z is None else np.asarray(gamma_z, dtype=float)
        P0 = 3.0 * np.eye(STATE_DIM) if P0 is None else np.asarray(P0, dtype=float)
        return cls(
            np.asarray(xi_hat, dtype=float), np.asarray(nu_hat, dtype=float), gamma_z, P0.copy()
        )

    @property
    def x_hat(self) -> np.ndarray:
        return np.concatenate([self.xi_hat, self.nu_hat, self.gamma_z])

    @property
    def Gamma_z(self) -> np.ndarray:
        return unvec9(self.gamma_z)


def build_A(omega, aTz) -> np.ndarray:
    """``Abar (x) I3 - I5 (x) hat(omega)`` with ``Abar = [[0,1,0],[0,0,-aTz^T],[0,0,0]]``."""
    Abar = np.zeros((5, 5))
    Abar[0, 1] = 1.0
    Abar[1, 2:] = -np.asarray(aTz, dtype=float)
    return np.kron(Abar, np.eye(3)) - np.kron(np.eye(5), hat(omega))


def build_C(mode, y_bearing=None) -> np.ndarray:
    mode = OutputMode(mode)
    C = np.zeros((3, STATE_DIM))
    if mode is OutputMode.POSITION:
        C[:, :3] = np.eye(3)
    else:
        if y_bearing is None:
            raise NonUnitBearing("bearing mode needs the measured bearing")
        C[:, :3] = projector(y_bearing)
    return C


def residual(xi_hat, y_meas: MeasurementSample) -> np.ndarray:
    """Output error: ``xi - xi_hat``, or ``-pi_y xi_hat`` for a bearing (``pi_y xi = 0``)."""
    if y_meas.kind is OutputMode.POSITION:
        return y_meas.value - xi_hat
    return -projector(y_meas.value) @ xi_hat


def innovation(state: ObserverState, C, D, y_meas: MeasurementSample) -> np.ndarray:
    """Correction ``P C^T D y`` stacked as ``(sigma_xi, sigma_nu, sigma_gamma)``."""
    return state.P @ C.T @ D @ residual(state.xi_hat, y_meas)


def riccati_rhs(P, A, C, D, V) -> np.ndarray:
    PCt = P @ C.T
    return A @ P + P @ A.T - PCt @ D @ PCt.T + V


def riccati_step(P, A, C, D, V, dt: float) -> np.ndarray:
    """One RK4 step of ``P' = A P + P A^T - P C^T D C P + V`` with frozen matrices."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    A, C, D, V = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (A, C, D, V))
    k1 = riccati_rhs(P, A, C, D, V)
    k2 = riccati_rhs(P + 0.5 * dt * k1, A, C, D, V)
    k3 = riccati_rhs(P + 0.5 * dt * k2, A, C, D, V)
    k4 = riccati_rhs(P + dt * k3, A, C, D, V)
    P_new = P + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    P_new = 0.5 * (P_new + P_new.T)
    try:
        np.linalg.cholesky(P_new)
    except np.linalg.LinAlgError as exc:
        raise NonPositiveP("Riccati solution lost positive definiteness") from exc
    return P_new


def _A_times(W, aTz, X):
    """``A @ X`` for ``A = Abar (x) I3 - I5 (x) W`` without forming ``A``."""
    k = X.shape[1]
    out = -np.matmul(W, X.reshape(5, 3, k)).reshape(STATE_DIM, k)
    out[0:3] += X[3:6]
    out[3:6] -= (aTz @ X[6:15].reshape(3, 3 * k)).reshape(3, k)
    return out


@dataclass(frozen=True)
class StepInputs:
    """Body and target readings plus the (optional) camera output at one instant."""

    uB: ImuSample
    uT: ImuSample
    y: MeasurementSample | None = None


def _blend(a, b, frac):
    return (1.0 - frac) * a + frac * b


def _interpolate(start: StepInputs, end: StepInputs, frac: float) -> StepInputs:
    y = start.y
    if y is not None and end.y is not None:
        v = _blend(y.value, end.y.value, frac)
        if y.kind is OutputMode.BEARING:
            v = v / np.linalg.norm(v)
        y = MeasurementSample(y.t, y.kind, v)
    return StepInputs(
        ImuSample(_blend(start.uB.a, end.uB.a, frac), _blend(start.uB.w, end.uB.w, frac)),
        ImuSample(_blend(start.uT.a, end.uT.a, frac), _blend(start.uT.w, end.uT.w, frac)),
        y,
    )


def observer_step(
    state: ObserverState,
    uB: ImuSample,
    uT: ImuSample,
    y: MeasurementSample | None,
    cfg: ObserverConfig,
    end: StepInputs | None = None,
    mid: StepInputs | None = None,
) -> ObserverState:
    """Advance the observer from ``t`` to ``t + cfg.dt``.

    ``uB``, ``uT`` and ``y`` are the samples at ``t``. RK4 needs the inputs at
    ``t + dt/2`` and ``t + dt`` too: pass them as ``mid`` and ``end`` when
    available, otherwise they are linearly interpolated (bearings renormalized)
    or, lacking ``end``, held. ``y=None`` runs the prediction alone.
    """
    dt = cfg.dt
    D, V = cfg.D, cfg.V
    bearing = cfg.output_mode is OutputMode.BEARING
    if y is not None and y.kind is not cfg.output_mode:
        raise ValueError("measurement kind does not match observer output mode")
    if y is not None and bearing and abs(np.linalg.norm(y.value) - 1.0) > 1e-9:
        raise NonUnitBearing("bearing measurement must be a unit vector")

    start = StepInputs(uB, uT, y)
    if end is None:
        end = start
    if mid is None:
        mid = _interpolate(start, end, 0.5)
    if y is None:
        # Innovation is switched off over the whole step.
        mid, end = StepInputs(mid.uB, mid.uT), StepInputs(end.uB, end.uT)

    Z0 = state.Z
    Z_half = propagate_Z(Z0, mid.uT.w, 0.5 * dt)
    Z_end = propagate_Z(Z_half, mid.uT.w, 0.5 * dt)

    def stage(inp: StepInputs, Z):
        pi = None
        if inp.y is not None:
            ym = inp.y.value
            pi = np.eye(3) - np.outer(ym, ym) if bearing else ym
        return hat(inp.uB.w), inp.uB.a, Z @ inp.uT.a, pi

    stages = [stage(start, Z0), stage(mid, Z_half), stage(end, Z_end)]

    def rhs(inp, x, P):
        # ``meas`` is the projector in bearing mode and the position otherwise.
        W, aB, aTz, meas = inp
        xi, nu, gam = x[0:3], x[3:6], x[6:15]
        Gz = gam.reshape(3, 3, order="F")
        dx = np.empty(STATE_DIM)
        dx[0:3] = -W @ xi + nu
        dx[3:6] = -W @ nu + aB - Gz @ aTz
        dx[6:15] = (-W @ Gz).reshape(-1, order="F")
        AP = _A_times(W, aTz, P)
        dP = AP + AP.T + V
        if meas is not None:
            if bearing:
                PCt = P[:, 0:3] @ meas
                ry = -meas @ xi
            else:
                PCt = P[:, 0:3]
                ry = meas - xi
            K = PCt @ D
            dx += K @ ry
            dP -= K @ PCt.T
        return dx, dP

    x0, P0 = state.x_hat, state.P
    k1x, k1P = rhs(stages[0], x0, P0)
    k2x, k2P = rhs(stages[1], x0 + 0.5 * dt * k1x, P0 + 0.5 * dt * k1P)
    k3x, k3P = rhs(stages[1], x0 + 0.5 * dt * k2x, P0 + 0.5 * dt * k2P)
    k4x, k4P = rhs(stages[2], x0 + dt * k3x, P0 + dt * k3P)
    x1 = x0 + dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
    P1 = P0 + dt / 6.0 * (k1P + 2 * k2P + 2 * k3P + k4P)
    P1 = 0.5 * (P1 + P1.T)
    try:
        np.linalg.cholesky(P1)
    except np.linalg.LinAlgError as exc:
        raise NonPositiveP(
            f"Riccati solution lost positive definiteness at step {state.step}", step=state.step
        ) from exc
    return ObserverState(
        x1[0:3], x1[3:6], x1[6:15], P1, Z_end, state.t + dt, state.step + 1
    )


def gamma_to_Gamma(state: ObserverState) -> np.ndarray:
    """Attitude estimate ``Gamma_z Z`` of ``R^T`` (not constrained to SO(3))."""
    return state.Gamma_z @ state.Z


def error_vector(state: ObserverState, truth: RelativeState) -> np.ndarray:
    """``(xi - xi_hat, nu - nu_hat, vec(R_z^T) - gamma_z)`` using the observer's ``Z``."""
    Rz = state.Z @ truth.R
    return np.concatenate(
        [truth.xi - state.xi_hat, truth.nu - state.nu_hat, vec(Rz.T) - state.gamma_z]
    )


def check_state(state: ObserverState) -> bool:
    return bool(
        np.all(np.isfinite(state.x_hat))
        and np.allclose(state.P, state.P.T, atol=1e-9 * max(1.0, np.abs(state.P).max()))
        and is_rotation(state.Z)
    )
