"""Uniform observability diagnostics for the R^15 error system.

Everything here works on a recorded :class:`Trace` sampled on a uniform grid:
transition matrices (closed form and numerical), windowed observability
Gramians, persistence-of-excitation tests for position and bearing outputs,
and the Schur-complement eigenvalue certificate.

All window integrals use composite Simpson on the grid samples.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson, simpson

from relpose.constants import LAMBDA_PI_COND_MAX, PE_RELATIVE_THRESHOLD
from relpose.errors import InsufficientTrace, LeadingBlockSingular, SingularLambdaPi
from relpose.lie import hat
from relpose.world import OutputMode

N_STATE = 15


@dataclass(frozen=True)
class Trace:
    """Uniformly sampled signals driving the error system.

    ``aTz`` is the target acceleration through the auxiliary rotation,
    ``omega`` the body gyro, ``Q_B`` the body orientation, ``y`` the body-frame
    bearing and ``y0 = Q_B y`` the same bearing in the inertial frame. Only
    ``t`` and ``aTz`` are mandatory.
    """

    t: np.ndarray
    aTz: np.ndarray
    omega: np.ndarray | None = None
    Q_B: np.ndarray | None = None
    y: np.ndarray | None = None
    y0: np.ndarray | None = None

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "aTz", np.asarray(self.aTz, dtype=float).reshape(len(t), 3))
        if self.omega is None:
            object.__setattr__(self, "omega", np.zeros((len(t), 3)))
        if self.Q_B is None:
            object.__setattr__(self, "Q_B", np.broadcast_to(np.eye(3), (len(t), 3, 3)))
        if self.y0 is None and self.y is not None:
            object.__setattr__(self, "y0", np.einsum("nij,nj->ni", self.Q_B, self.y))
        if self.y is None and self.y0 is not None:
            object.__setattr__(self, "y", np.einsum("nji,nj->ni", self.Q_B, self.y0))

    @property
    def h(self) -> float:
        return float(self.t[1] - self.t[0])

    def __len__(self):
        return len(self.t)

    def index(self, t: float) -> int:
        i = int(round((t - self.t[0]) / self.h))
        if i < 0 or i >= len(self.t) or abs(self.t[i] - t) > 1e-6 * max(1.0, abs(t)) + 0.5 * self.h:
            raise InsufficientTrace(f"t = {t} is outside the recorded trace")
        return i

    def window(self, t: float, delta: float) -> tuple[int, int]:
        """Grid indices ``(i0, i1)`` with ``t[i0] = t`` and ``t[i1] = t + delta``."""
        if delta <= 0:
            raise ValueError("delta must be positive")
        i0 = self.index(t)
        i1 = i0 + int(round(delta / self.h))
        if i1 >= len(self.t):
            raise InsufficientTrace(f"window [{t}, {t + delta}] exceeds the trace")
        if i1 - i0 < 2:
            raise InsufficientTrace("window needs at least two grid intervals")
        return i0, i1

    def subsample(self, factor: int) -> Trace:
        sl = slice(None, None, factor)
        return Trace(
            self.t[sl],
            self.aTz[sl],
            self.omega[sl],
            np.asarray(self.Q_B)[sl],
            None if self.y is None else self.y[sl],
            None if self.y0 is None else self.y0[sl],
        )

    def A(self, i: int) -> np.ndarray:
        return error_system_matrix(self.omega[i], self.aTz[i])


def error_system_matrix(omega, aTz) -> np.ndarray:
    Abar = np.zeros((5, 5))
    Abar[0, 1] = 1.0
    Abar[1, 2:] = -np.asarray(aTz, dtype=float)
    return np.kron(Abar, np.eye(3)) - np.kron(np.eye(5), hat(omega))


class Verdict(str, enum.Enum):
    UNIFORMLY_OBSERVABLE = "uniformly_observable"
    DEGENERATE = "degenerate"


@dataclass(frozen=True)
class TransitionMatrix:
    Phi: np.ndarray
    t: float
    s: float


@dataclass(frozen=True)
class PEVerdict:
    passed: bool
    mu: float  # lambda_min of the windowed matrix
    lambda_max: float
    matrix: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class GramianWindow:
    W: np.ndarray = field(repr=False)
    t: float
    delta: float
    lambda_min: float
    lambda_max: float
    verdict: Verdict

    @property
    def mu(self) -> float:
        return self.lambda_min


@dataclass(frozen=True)
class BearingPEMatrices:
    s: np.ndarray
    Lambda_T: np.ndarray  # (n, 3, 9)
    Lambda_pi: np.ndarray  # (6, 6)
    B: np.ndarray  # (6, 9)
    rho: np.ndarray  # (6, 9)
    M: np.ndarray  # (n, 3, 9)


@dataclass(frozen=True)
class BearingPEVerdict:
    pi: PEVerdict
    schur: PEVerdict
    # lambda_min of (1/delta) int Lambda_T^T pi Lambda_T; reported, never gated on.
    alignment_mu: float


@dataclass(frozen=True)
class SchurCertificate:
    W_E: np.ndarray = field(repr=False)
    W_F: np.ndarray = field(repr=False)
    W_G: np.ndarray = field(repr=False)
    schur: np.ndarray = field(repr=False)
    mu: float
    mu_max: float
    mu_star: float
    lambda_min: float
    holds: bool


def _spectrum(W):
    ev = np.linalg.eigvalsh(0.5 * (W + W.T))
    return float(ev[0]), float(ev[-1])


def _judge(M, rel: float) -> PEVerdict:
    lo, hi = _spectrum(M)
    return PEVerdict(bool(hi > 0 and lo >= rel * hi), lo, hi, M)


def simpson_weights(n: int, h: float) -> np.ndarray:
    """Composite Simpson weights for ``n`` uniform samples with spacing ``h``.

    An odd interval count closes with the same three-point parabola on the
    last interval as :func:`scipy.integrate.simpson`.
    """
    if n < 3:
        raise InsufficientTrace("Simpson needs at least three samples")
    m = n - 1
    even = m - (m % 2)
    w = np.zeros(n)
    w[0 : even + 1 : 2] = 2.0
    w[1:even:2] = 4.0
    w[0] = w[even] = 1.0
    w *= h / 3.0
    if m % 2:
        w[-1] += 5.0 * h / 12.0
        w[-2] += 8.0 * h / 12.0
        w[-3] -= h / 12.0
    return w


# --- transition matrices -------------------------------------------------------


def _double_integral(trace: Trace, i0: int, i1: int):
    """``b(s) = -int_t^s int_t^tau aTz`` for every grid ``s`` in the window, and ``int aTz``."""
    tau = trace.t[i0 : i1 + 1] - trace.t[i0]
    a = trace.aTz[i0 : i1 + 1]
    first = cumulative_simpson(a, x=tau, axis=0, initial=0.0)
    moment = cumulative_simpson(tau[:, None] * a, x=tau, axis=0, initial=0.0)
    # int_t^s (s - sigma) a(sigma) d sigma, written with window-relative time.
    b = -(tau[:, None] * first - moment)
    return tau, b, first


def phi_bar_closed_form(trace: Trace, t: float, s: float) -> TransitionMatrix:
    """5x5 transition matrix of ``Abar`` on ``[t, s]`` from its closed form."""
    if s < t:
        raise ValueError("need s >= t")
    i0 = trace.index(t)
    i1 = trace.index(s)
    Phi = np.eye(5)
    if i1 == i0:
        return TransitionMatrix(Phi, t, s)
    if i1 - i0 < 2:
        raise InsufficientTrace("window needs at least two grid intervals")
    tau = trace.t[i0 : i1 + 1] - trace.t[i0]
    a = trace.aTz[i0 : i1 + 1]
    span = tau[-1]
    Phi[0, 1] = span
    Phi[0, 2:] = -simpson((span - tau)[:, None] * a, x=tau, axis=0)
    Phi[1, 2:] = -simpson(a, x=tau, axis=0)
    return TransitionMatrix(Phi, t, s)


def _phi_path(trace: Trace, i0: int, i1: int):
    """RK4 solution of ``dPhi/ds = A(s) Phi`` from ``I``.

    Steps of two grid intervals let the stage at the half step use a recorded
    sample. Returns the grid indices visited and the matrices there.
    """
    Phi = np.eye(N_STATE)
    idx, out = [i0], [Phi]
    i = i0
    h2 = 2.0 * trace.h
    while i + 2 <= i1:
        A0, Am, A1 = trace.A(i), trace.A(i + 1), trace.A(i + 2)
        k1 = A0 @ Phi
        k2 = Am @ (Phi + 0.5 * h2 * k1)
        k3 = Am @ (Phi + 0.5 * h2 * k2)
        k4 = A1 @ (Phi + h2 * k3)
        Phi = Phi + h2 / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        i += 2
        idx.append(i)
        out.append(Phi)
    if i < i1:
        # Odd interval count: one single-interval step with an averaged midpoint.
        A0, A1 = trace.A(i), trace.A(i + 1)
        Am = 0.5 * (A0 + A1)
        h = trace.h
        k1 = A0 @ Phi
        k2 = Am @ (Phi + 0.5 * h * k1)
        k3 = Am @ (Phi + 0.5 * h * k2)
        k4 = A1 @ (Phi + h * k3)
        Phi = Phi + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        idx.append(i + 1)
        out.append(Phi)
    return np.array(idx), np.array(out)


def phi_numeric(trace: Trace, t: float, s: float) -> TransitionMatrix:
    """15x15 transition matrix of the full error system by RK4."""
    if s < t:
        raise ValueError("need s >= t")
    i0, i1 = trace.index(t), trace.index(s)
    if i1 == i0:
        return TransitionMatrix(np.eye(N_STATE), t, s)
    _, path = _phi_path(trace, i0, i1)
    return TransitionMatrix(path[-1], t, s)


def coordinate_change(Q_B) -> np.ndarray:
    """``T = I5 (x) Q_B``."""
    return np.kron(np.eye(5), np.asarray(Q_B, dtype=float))


# --- Gramians ------------------------------------------------------------------


def _output_matrix(trace: Trace, i: int, mode: OutputMode) -> np.ndarray:
    C = np.zeros((3, N_STATE))
    if mode is OutputMode.POSITION:
        C[:, :3] = np.eye(3)
    else:
        y = trace.y[i]
        C[:, :3] = np.eye(3) - np.outer(y, y)
    return C


def _make_window(W, t, delta, rel) -> GramianWindow:
    W = 0.5 * (W + W.T)
    lo, hi = _spectrum(W)
    verdict = Verdict.UNIFORMLY_OBSERVABLE if hi > 0 and lo >= rel * hi else Verdict.DEGENERATE
    return GramianWindow(W, t, delta, lo, hi, verdict)


def reduced_gramian(trace: Trace, t: float, delta: float) -> np.ndarray:
    """5x5 Gramian of ``(Abar, [1 0 0 0 0])`` (position output)."""
    i0, i1 = trace.window(t, delta)
    tau, b, _ = _double_integral(trace, i0, i1)
    c = np.column_stack([np.ones_like(tau), tau, b])
    span = tau[-1]
    return simpson(c[:, :, None] * c[:, None, :], x=tau, axis=0) / span


def gramian_blocks(trace: Trace, t: float, delta: float):
    """``(Lambda_delta, B, Lambda_b)`` with ``W_bar = [[Ld, B], [B^T, Lb]] / delta``."""
    i0, i1 = trace.window(t, delta)
    tau, b, _ = _double_integral(trace, i0, i1)
    span = tau[-1]
    Ld = np.array([[span, span**2 / 2], [span**2 / 2, span**3 / 3]])
    B = np.vstack([simpson(b, x=tau, axis=0), simpson(tau[:, None] * b, x=tau, axis=0)])
    Lb = simpson(b[:, :, None] * b[:, None, :], x=tau, axis=0)
    return Ld, B, Lb


def gramian(
    trace: Trace,
    t: float,
    delta: float,
    mode: OutputMode | str = OutputMode.POSITION,
    method: str = "closed",
    rel: float = PE_RELATIVE_THRESHOLD,
    C=None,
) -> GramianWindow:
    """``(1/delta) int_t^{t+delta} Phi^T C^T C Phi ds`` for the 15-state system.

    ``method="numeric"`` integrates the transition matrix of ``A(t)`` directly.
    ``method="closed"`` uses the coordinates ``T = I5 (x) Q_B`` in which the
    transition matrix has the closed form ``Phi_bar (x) I3``; the result is
    mapped back with ``T(t)`` so both methods return the same matrix.
    ``C`` overrides the output matrix, either one ``(3, 15)`` matrix or one per
    trace sample; it implies ``method="numeric"``.
    """
    mode = OutputMode(mode)
    if C is not None:
        C = np.asarray(C, dtype=float)
        if C.ndim == 2:
            C = np.broadcast_to(C, (len(trace), *C.shape))
        method = "numeric"
    if C is None and mode is OutputMode.BEARING and trace.y is None:
        raise InsufficientTrace("bearing Gramian needs a bearing trace")
    i0, i1 = trace.window(t, delta)
    if method == "numeric":
        idx, path = _phi_path(trace, i0, i1)
        integrand = np.empty((len(idx), N_STATE, N_STATE))
        for j, (i, Phi) in enumerate(zip(idx, path)):
            CP = (_output_matrix(trace, i, mode) if C is None else C[i]) @ Phi
            integrand[j] = CP.T @ CP
        x = trace.t[idx] - trace.t[i0]
        W = simpson(integrand, x=x, axis=0) / x[-1]
        return _make_window(W, t, delta, rel)
    if method != "closed":
        raise ValueError(f"unknown method {method!r}")
    W_T = transformed_gramian(trace, t, delta, mode)
    T = coordinate_change(trace.Q_B[i0])
    return _make_window(T.T @ W_T @ T, t, delta, rel)


def transformed_gramian(trace: Trace, t: float, delta: float, mode) -> np.ndarray:
    """Gramian of ``(Abar (x) I3, C_T)`` with ``C_T = [1 0 0 0 0] (x) pi_{y0}`` (or ``I3``)."""
    mode = OutputMode(mode)
    i0, i1 = trace.window(t, delta)
    tau, b, _ = _double_integral(trace, i0, i1)
    c = np.column_stack([np.ones_like(tau), tau, b])
    cc = c[:, :, None] * c[:, None, :]
    if mode is OutputMode.POSITION:
        Wbar = simpson(cc, x=tau, axis=0) / tau[-1]
        return np.kron(Wbar, np.eye(3))
    _, _, pi, w = _bearing_parts(trace, i0, i1)
    return _kron_sum(w, cc, pi, 5) / tau[-1]


# --- persistence of excitation -------------------------------------------------


def pe_accel_check(trace: Trace, t: float, delta: float, rel: float = PE_RELATIVE_THRESHOLD) -> PEVerdict:
    """``(1/delta) int aTz aTz^T`` must be uniformly positive definite."""
    i0, i1 = trace.window(t, delta)
    a = trace.aTz[i0 : i1 + 1]
    w = simpson_weights(len(a), trace.h)
    M = (w[:, None] * a).T @ a / (trace.t[i1] - trace.t[i0])
    return _judge(M, rel)


def _bearing_parts(trace: Trace, i0: int, i1: int):
    if trace.y0 is None:
        raise InsufficientTrace("bearing matrices need a bearing trace")
    tau, b, _ = _double_integral(trace, i0, i1)
    y0 = trace.y0[i0 : i1 + 1]
    pi = np.eye(3) - y0[:, :, None] * y0[:, None, :]
    return tau, b, pi, simpson_weights(len(tau), trace.h)


def _kron_sum(w, left, pi, p):
    """``sum_n w_n left_n (x) pi_n`` for ``left`` of shape ``(n, p, p)``."""
    G = (w[:, None] * left.reshape(len(w), p * p)).T @ pi.reshape(len(w), 9)
    return G.reshape(p, p, 3, 3).transpose(0, 2, 1, 3).reshape(3 * p, 3 * p)


def _lambda_T(b):
    # Lambda_T(s, t) = b(s)^T (x) I3, a 3x9 block per sample.
    return np.einsum("nk,ij->nikj", b, np.eye(3)).reshape(len(b), 3, 9)


def _bearing_from_parts(tau, b, pi, w) -> BearingPEMatrices:
    n = len(tau)
    d = np.column_stack([np.ones_like(tau), tau])
    Lpi = _kron_sum(w, d[:, :, None] * d[:, None, :], pi, 2)
    Lpi = 0.5 * (Lpi + Lpi.T)
    piLT = np.einsum("nij,nk->nikj", pi, b).reshape(n, 3, 9)
    B = ((w[:, None] * d).T @ piLT.reshape(n, 27)).reshape(6, 9)
    rho = _solve_lambda_pi(Lpi, B)
    LT = _lambda_T(b)
    # [I3, (s - t) I3] rho, sample by sample.
    Drho = rho[None, :3, :] + tau[:, None, None] * rho[None, 3:, :]
    M = pi @ (LT - Drho)
    return BearingPEMatrices(tau, LT, Lpi, B, rho, M)


def bearing_pe_matrices(trace: Trace, t: float, delta: float) -> BearingPEMatrices:
    """``Lambda_T``, ``Lambda_pi``, ``B``, ``rho = Lambda_pi^-1 B`` and ``M`` on one window.

    ``s`` in the result is window-relative time ``s - t``.
    """
    i0, i1 = trace.window(t, delta)
    return _bearing_from_parts(*_bearing_parts(trace, i0, i1))


def _solve_lambda_pi(Lpi, B):
    ev = np.linalg.eigvalsh(Lpi)
    if ev[-1] <= 0 or ev[0] <= ev[-1] / LAMBDA_PI_COND_MAX:
        raise SingularLambdaPi(f"Lambda_pi is singular (eigenvalues {ev[0]:.3e} .. {ev[-1]:.3e})")
    try:
        L = np.linalg.cholesky(Lpi)
    except np.linalg.LinAlgError as exc:
        raise SingularLambdaPi("Cholesky of Lambda_pi failed") from exc
    return np.linalg.solve(L.T, np.linalg.solve(L, B))


def pe_bearing_check(
    trace: Trace, t: float, delta: float, rel: float = PE_RELATIVE_THRESHOLD
) -> BearingPEVerdict:
    """Projector excitation and the Schur-complement condition on one window."""
    i0, i1 = trace.window(t, delta)
    tau, b, pi, w = _bearing_parts(trace, i0, i1)
    span = tau[-1]
    pi_verdict = _judge((w @ pi.reshape(len(w), 9)).reshape(3, 3) / span, rel)
    align = _kron_sum(w, b[:, :, None] * b[:, None, :], pi, 3) / span
    alignment_mu = _spectrum(align)[0]
    try:
        mats = _bearing_from_parts(tau, b, pi, w)
    except SingularLambdaPi:
        zero = np.zeros((9, 9))
        return BearingPEVerdict(pi_verdict, PEVerdict(False, 0.0, 0.0, zero), alignment_mu)
    M = mats.M.reshape(-1, 9)
    MtM = (np.repeat(w, 3)[:, None] * M).T @ M / span
    return BearingPEVerdict(pi_verdict, _judge(MtM, rel), alignment_mu)


# --- Schur complement certificate ---------------------------------------------


def schur_certificate(W, split: tuple[int, int], mu: float | None = None) -> SchurCertificate:
    """Eigenvalue lower bound from the leading block and its Schur complement.

    With ``mu`` bounding both ``lambda_min(W_E)`` and ``lambda_min(W / W_E)``
    from below and ``mu_max = lambda_max(W)``,
    ``lambda_min(W) >= mu**(n+m) / mu_max**(n+m-1)``.
    """
    W = 0.5 * (np.asarray(W, dtype=float) + np.asarray(W, dtype=float).T)
    n, m = split
    if W.shape != (n + m, n + m):
        raise ValueError("split does not match the matrix size")
    W_E, W_F, W_G = W[:n, :n], W[:n, n:], W[n:, n:]
    e_min = np.linalg.eigvalsh(W_E)[0]
    if e_min <= 0:
        raise LeadingBlockSingular("leading block is not positive definite")
    S = W_G - W_F.T @ np.linalg.solve(W_E, W_F)
    S = 0.5 * (S + S.T)
    if mu is None:
        mu = min(e_min, np.linalg.eigvalsh(S)[0])
    lo, hi = _spectrum(W)
    N = n + m
    # Evaluated in logs: mu**N underflows for N = 15 and small mu.
    if mu > 0:
        mu_star = float(np.exp(N * np.log(mu) - (N - 1) * np.log(hi)))
    else:
        mu_star = 0.0 if mu == 0 else -np.inf
    tol = 1e-12 * hi
    return SchurCertificate(W_E, W_F, W_G, S, float(mu), hi, mu_star, lo, bool(lo >= mu_star - tol))
