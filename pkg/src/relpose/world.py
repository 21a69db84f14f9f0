"""Ground-truth rigid body kinematics, synthetic IMU readings and camera outputs."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from relpose.constants import GRAVITY, MIN_RANGE
from relpose.errors import ConfigError, DegenerateRange
from relpose.lie import E3, ExtendedPose, exp_so3, rot_z


class OutputMode(str, enum.Enum):
    POSITION = "position"
    BEARING = "bearing"


@dataclass(frozen=True)
class ImuSample:
    """Specific acceleration ``a`` (m/s^2) and angular velocity ``w`` (rad/s), body frame."""

    a: np.ndarray
    w: np.ndarray
    t: float = 0.0


@dataclass(frozen=True)
class RigidBodyState:
    p: np.ndarray
    v: np.ndarray
    Q: np.ndarray

    def as_pose(self) -> ExtendedPose:
        return ExtendedPose(self.Q, self.v, self.p)


@dataclass(frozen=True)
class MeasurementSample:
    t: float
    kind: OutputMode
    value: np.ndarray


def integrate_rigid_body(
    s: RigidBodyState, u: ImuSample, g: float, dt: float, u_next: ImuSample | None = None
) -> RigidBodyState:
    """Advance ``p' = v, v' = Q a + g e3, Q' = Q hat(w)`` by one step.

    Rotation uses the exact exponential, translation the midpoint rule. When
    ``u_next`` (the reading at ``t + dt``) is given, inputs are averaged over the
    step; otherwise ``u`` is held.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if u_next is None:
        a, w = u.a, u.w
    else:
        a, w = 0.5 * (u.a + u_next.a), 0.5 * (u.w + u_next.w)
    Q_mid = s.Q @ exp_so3(0.5 * dt * w)
    acc = Q_mid @ a + g * E3
    v_new = s.v + dt * acc
    p_new = s.p + dt * s.v + 0.5 * dt * dt * acc
    return RigidBodyState(p_new, v_new, s.Q @ exp_so3(dt * w))


@dataclass(frozen=True)
class ShipScenario:
    """Hovering body above a ship on a circular orbit with heave.

    ``phases`` lists ``(t_start, omega_orb, omega_z)``; the heave and orbit
    clocks restart at every phase start. Vertical acceleration amplitude is
    ``z_amp * omega_z**2`` while the initial vertical speed is
    ``z_vel_amp * omega_z``; the two are independent knobs.

    ``world_rotation`` left-translates the whole inertial picture (both
    orientations and the target's offset from the body) without touching any
    IMU reading.
    """

    omega_orb: float = 0.4
    omega_z: float = 2.0
    radius: float = 5.0
    z_amp: float = 2.0
    z_vel_amp: float = 0.5
    body_altitude: float = 20.0
    g: float = GRAVITY
    phases: tuple = ()
    Q_B0: np.ndarray = field(default_factory=lambda: np.eye(3))
    Q_T0: np.ndarray = field(default_factory=lambda: np.eye(3))
    world_rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        phases = tuple(tuple(float(x) for x in ph) for ph in self.phases)
        if not phases:
            phases = ((0.0, float(self.omega_orb), float(self.omega_z)),)
        starts = [ph[0] for ph in phases]
        if starts[0] != 0.0:
            raise ConfigError("first phase must start at t = 0")
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ConfigError("phase boundaries must be strictly increasing")
        object.__setattr__(self, "phases", phases)

    def with_phases(self, *phases) -> ShipScenario:
        return replace(self, phases=tuple(phases))

    def phase_index(self, t: float) -> int:
        idx = 0
        for i, ph in enumerate(self.phases):
            if t >= ph[0]:
                idx = i
        return idx

    def _orbit_angle(self, t: float) -> float:
        # Integral of omega_orb over [0, t] for the piecewise-constant schedule.
        theta = 0.0
        for i, (start, w_orb, _) in enumerate(self.phases):
            if t <= start:
                break
            end = self.phases[i + 1][0] if i + 1 < len(self.phases) else np.inf
            theta += w_orb * (min(t, end) - start)
        return theta

    def target_orientation(self, t: float) -> np.ndarray:
        """Nominal Q_T(t), i.e. without ``world_rotation``."""
        return self.Q_T0 @ rot_z(self._orbit_angle(t))

    def target_inertial_accel(self, t: float) -> np.ndarray:
        """Kinematic acceleration of the target, nominal frame."""
        start, w_orb, w_z = self.phases[self.phase_index(t)]
        tau = t - start
        return np.array(
            [
                -self.radius * w_orb**2 * np.cos(w_orb * tau),
                -self.radius * w_orb**2 * np.sin(w_orb * tau),
                -self.z_amp * w_z**2 * np.sin(w_z * tau),
            ]
        )

    def initial_states(self) -> tuple[RigidBodyState, RigidBodyState]:
        """``(body, target)`` at t = 0."""
        _, w_orb, w_z = self.phases[0]
        G = self.world_rotation
        p_B = np.array([0.0, 0.0, self.body_altitude])
        p_T = np.array([self.radius, 0.0, 0.0])
        v_T = np.array([0.0, self.radius * w_orb, self.z_vel_amp * w_z])
        body = RigidBodyState(p_B, np.zeros(3), G @ self.Q_B0)
        target = RigidBodyState(p_B + G @ (p_T - p_B), G @ v_T, G @ self.Q_T0)
        return body, target

    def _phase_start_states(self):
        """Nominal ``(theta, p_T, v_T)`` of the target at every phase start."""
        _, w_orb, w_z = self.phases[0]
        theta = 0.0
        p = np.array([self.radius, 0.0, 0.0])
        v = np.array([0.0, self.radius * w_orb, self.z_vel_amp * w_z])
        out = [(theta, p, v)]
        for (start, w, wz), (end, _, _) in zip(self.phases, self.phases[1:]):
            tau = end - start
            p, v = _phase_translation(p, v, tau, w, wz, self.radius, self.z_amp)
            theta += w * tau
            out.append((theta, p, v))
        return out

    def sample(self, ts) -> ScenarioSamples:
        """Exact states and IMU readings of both bodies on an array of times."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        if np.any(ts < 0):
            raise ValueError("t must be non-negative")
        n = len(ts)
        starts = np.array([ph[0] for ph in self.phases])
        idx = np.searchsorted(starts, ts, side="right") - 1
        tau = ts - starts[idx]
        w = np.array([ph[1] for ph in self.phases])[idx]
        wz = np.array([ph[2] for ph in self.phases])[idx]
        init = self._phase_start_states()
        th0 = np.array([s[0] for s in init])[idx]
        p0 = np.array([s[1] for s in init])[idx]
        v0 = np.array([s[2] for s in init])[idx]
        r, A = self.radius, self.z_amp

        p_T, v_T = _phase_translation(p0, v0, tau[:, None], w[:, None], wz[:, None], r, A)
        theta = th0 + w * tau
        c, s = np.cos(theta), np.sin(theta)
        Rz = np.zeros((n, 3, 3))
        Rz[:, 0, 0], Rz[:, 0, 1], Rz[:, 1, 0], Rz[:, 1, 1], Rz[:, 2, 2] = c, -s, s, c, 1.0
        Q_T = self.Q_T0 @ Rz
        acc = np.column_stack(
            [
                -r * w**2 * np.cos(w * tau),
                -r * w**2 * np.sin(w * tau),
                -A * wz**2 * np.sin(wz * tau),
            ]
        )
        a_T = np.einsum("nji,nj->ni", Q_T, acc - self.g * E3)
        w_T = np.column_stack([np.zeros(n), np.zeros(n), w])

        G = self.world_rotation
        p_B0 = np.array([0.0, 0.0, self.body_altitude])
        # Specific forces are fixed, so a tilted world adds a common drift.
        drift = self.g * (E3 - G @ E3)
        tt = ts[:, None]
        p_B = p_B0 + 0.5 * tt**2 * drift
        v_B = tt * drift
        return ScenarioSamples(
            t=ts,
            p_B=p_B,
            v_B=v_B,
            Q_B=np.broadcast_to(G @ self.Q_B0, (n, 3, 3)).copy(),
            p_T=p_B0 + (p_T - p_B0) @ G.T + 0.5 * tt**2 * drift,
            v_T=v_T @ G.T + v_B,
            Q_T=G @ Q_T,
            a_B=np.broadcast_to(-self.g * (self.Q_B0.T @ E3), (n, 3)).copy(),
            w_B=np.zeros((n, 3)),
            a_T=a_T,
            w_T=w_T,
        )

    def truth(self, t: float) -> tuple[RigidBodyState, RigidBodyState]:
        """Exact ``(body, target)`` states at time ``t``."""
        smp = self.sample([t])
        return smp.body(0), smp.target(0)


def _phase_translation(p, v, tau, w, wz, r, A):
    """Closed-form double integral of the phase-local acceleration over ``tau``."""
    sw, cw = np.sin(w * tau), np.cos(w * tau)
    sz, cz = np.sin(wz * tau), np.cos(wz * tau)
    zero = np.zeros_like(sw * tau)
    dp = np.stack([r * (cw - 1.0), r * (sw - w * tau), A * (sz - wz * tau)], axis=-1) + zero[..., None]
    dv = np.stack([-r * w * sw, r * w * (cw - 1.0), A * wz * (cz - 1.0)], axis=-1) + zero[..., None]
    if np.ndim(tau) == 2:
        dp, dv = dp[:, 0, :], dv[:, 0, :]
    return p + v * tau + dp, v + dv


@dataclass(frozen=True)
class ScenarioSamples:
    """Row ``i`` holds both bodies' states and IMU readings at ``t[i]``."""

    t: np.ndarray
    p_B: np.ndarray
    v_B: np.ndarray
    Q_B: np.ndarray
    p_T: np.ndarray
    v_T: np.ndarray
    Q_T: np.ndarray
    a_B: np.ndarray
    w_B: np.ndarray
    a_T: np.ndarray
    w_T: np.ndarray

    def __len__(self):
        return len(self.t)

    def body(self, i: int) -> RigidBodyState:
        return RigidBodyState(self.p_B[i], self.v_B[i], self.Q_B[i])

    def target(self, i: int) -> RigidBodyState:
        return RigidBodyState(self.p_T[i], self.v_T[i], self.Q_T[i])

    def imu_body(self, i: int) -> ImuSample:
        return ImuSample(self.a_B[i], self.w_B[i], float(self.t[i]))

    def imu_target(self, i: int) -> ImuSample:
        return ImuSample(self.a_T[i], self.w_T[i], float(self.t[i]))

    def relative_position(self) -> np.ndarray:
        return -np.einsum("nji,nj->ni", self.Q_B, self.p_T - self.p_B)


def ship_target_inputs(cfg: ShipScenario, t: float) -> ImuSample:
    if t < 0:
        raise ValueError("t must be non-negative")
    w_orb = cfg.phases[cfg.phase_index(t)][1]
    Q_T = cfg.target_orientation(t)
    a = Q_T.T @ (cfg.target_inertial_accel(t) - cfg.g * E3)
    return ImuSample(a, np.array([0.0, 0.0, w_orb]), t)


def hover_body_inputs(cfg: ShipScenario, t: float) -> ImuSample:
    return ImuSample(-cfg.g * (cfg.Q_B0.T @ E3), np.zeros(3), t)


def relative_position(body: RigidBodyState, target: RigidBodyState) -> np.ndarray:
    return -body.Q.T @ (target.p - body.p)


def synthesize_measurement(
    body: RigidBodyState,
    target: RigidBodyState,
    kind: OutputMode | str,
    noise_std: float = 0.0,
    rng: np.random.Generator | int | None = None,
    t: float = 0.0,
) -> MeasurementSample:
    """Relative position or bearing as seen from the body frame.

    Noise is isotropic Gaussian, in metres for positions and added to the unit
    vector (then renormalized) for bearings.
    """
    kind = OutputMode(kind)
    xi = relative_position(body, target)
    if noise_std > 0 and not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    if kind is OutputMode.BEARING:
        if np.linalg.norm(target.p - body.p) <= MIN_RANGE:
            raise DegenerateRange("bodies coincide, bearing undefined")
        y = xi / np.linalg.norm(xi)
        if noise_std > 0:
            y = y + noise_std * rng.standard_normal(3)
            y = y / np.linalg.norm(y)
        return MeasurementSample(t, kind, y)
    if noise_std > 0:
        xi = xi + noise_std * rng.standard_normal(3)
    return MeasurementSample(t, kind, xi)
