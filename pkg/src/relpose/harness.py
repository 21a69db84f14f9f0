"""Ship-landing scenario runner, observability sweep and CSV/JSON export."""

from __future__ import annotations

import configparser
import csv
import io
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from relpose.attitude import AttitudeEstimate, filter_step
from relpose.constants import MIN_RANGE, PE_RELATIVE_THRESHOLD
from relpose.errors import ConfigError, DegenerateRange
from relpose.lie import exp_so3
from relpose.observability import Trace, gramian, pe_accel_check, pe_bearing_check
from relpose.riccati import STATE_DIM, ObserverConfig, ObserverState, StepInputs, observer_step
from relpose.world import MeasurementSample, OutputMode, ShipScenario

COLUMNS = (
    "t",
    "xi_err_x",
    "xi_err_y",
    "xi_err_z",
    "nu_err_x",
    "nu_err_y",
    "nu_err_z",
    "gamma_err_norm",
    "att_err_rad",
    "gramian_lmin",
    "phase",
)

SWEEP_COLUMNS = (
    "t_start",
    "t_end",
    "phase_start",
    "phase_end",
    "inside_phase",
    "gramian_lmin",
    "gramian_lmax",
    "uniformly_observable",
    "pe_a_pass",
    "pe_a_mu",
    "pe_pi_pass",
    "pe_pi_mu",
    "pe_schur_pass",
    "pe_schur_mu",
    "alignment_mu",
)

SLOPE_TOL = 0.01
CONFIG_DIR = Path(__file__).parent / "configs"


@dataclass(frozen=True)
class RunConfig:
    scenario: ShipScenario = field(default_factory=ShipScenario)
    observer: ObserverConfig = field(default_factory=ObserverConfig)
    duration: float = 60.0
    seed: int = 0
    out_dir: str | None = None
    sweep_enabled: bool = True
    sweep_delta: float = np.pi
    sweep_stride: float = 0.5
    xi_hat0: tuple = (1.0, -0.5, 0.8)
    nu_hat0: tuple = (-0.5, 0.8, -0.3)
    R_hat0: np.ndarray = field(default_factory=lambda: np.eye(3))
    filter_gains: tuple = (1.0, 1.0, 1.0)
    meas_noise: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.duration) or self.duration < 0:
            raise ConfigError("duration must be non-negative")
        if self.sweep_delta <= 0 or self.sweep_stride <= 0:
            raise ConfigError("sweep delta and stride must be positive")
        if self.meas_noise < 0:
            raise ConfigError("measurement noise must be non-negative")
        for name in ("xi_hat0", "nu_hat0", "filter_gains"):
            v = tuple(float(x) for x in getattr(self, name))
            if len(v) != 3:
                raise ConfigError(f"{name} needs three values")
            object.__setattr__(self, name, v)
        if min(self.filter_gains) <= 0:
            raise ConfigError("filter gains must be positive")

    @property
    def dt(self) -> float:
        return self.observer.dt

    @property
    def mode(self) -> OutputMode:
        return self.observer.output_mode

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))

    def phase_bounds(self) -> list[tuple[float, float]]:
        starts = [ph[0] for ph in self.scenario.phases]
        ends = starts[1:] + [np.inf]
        return [(s, min(e, self.duration)) for s, e in zip(starts, ends)]


@dataclass
class WindowReport:
    t_start: float
    t_end: float
    phase_start: int
    phase_end: int
    inside_phase: int  # -1 when the window straddles a boundary
    gramian_lmin: float
    gramian_lmax: float
    uniformly_observable: bool
    pe_a_pass: bool
    pe_a_mu: float
    pe_pi_pass: bool
    pe_pi_mu: float
    pe_schur_pass: bool
    pe_schur_mu: float
    alignment_mu: float

    def row(self) -> tuple:
        return tuple(getattr(self, c) for c in SWEEP_COLUMNS)


@dataclass
class RunResult:
    config: RunConfig
    records: np.ndarray  # rows in COLUMNS order
    estimates: np.ndarray  # xi_hat, nu_hat, vec(Gamma) per row
    R_hat: np.ndarray
    summary: dict
    sweep: list[WindowReport]
    trace: Trace | None
    final_state: ObserverState | None = None

    @property
    def error_norm(self) -> np.ndarray:
        """``|x_tilde|`` per row (recomputed from the stored blocks)."""
        return np.sqrt(np.sum(self.records[:, 1:7] ** 2, axis=1) + self.records[:, 7] ** 2)


# --- configuration files -------------------------------------------------------


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(",", " ").split()]


def _phases(text: str) -> tuple:
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        parts = item.split(":")
        if len(parts) != 3:
            raise ConfigError(f"phase entry {item!r} must read start:omega_orb:omega_z")
        out.append(tuple(float(p) for p in parts))
    return tuple(out)


def load_config(path=None, **overrides) -> RunConfig:
    """Read an INI-style run file; keyword overrides win over file values.

    Recognised overrides: ``mode``, ``duration``, ``dt``, ``sweep_delta``,
    ``out_dir``, ``seed``. ``None`` values are ignored.
    """
    cp = configparser.ConfigParser()
    if path is not None:
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except configparser.Error as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from exc
    try:
        return _build_config(cp, {k: v for k, v in overrides.items() if v is not None})
    except ConfigError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def _build_config(cp: configparser.ConfigParser, ov: dict) -> RunConfig:
    unknown = set(ov) - {"mode", "duration", "dt", "sweep_delta", "out_dir", "seed"}
    if unknown:
        raise ConfigError(f"unknown overrides {sorted(unknown)}")
    sc = cp["scenario"] if cp.has_section("scenario") else {}
    ob = cp["observer"] if cp.has_section("observer") else {}
    fl = cp["filter"] if cp.has_section("filter") else {}
    rn = cp["run"] if cp.has_section("run") else {}
    sw = cp["sweep"] if cp.has_section("sweep") else {}

    base = ShipScenario()
    kw = {}
    for f in ("omega_orb", "omega_z", "radius", "z_amp", "z_vel_amp", "body_altitude", "g"):
        if f in sc:
            kw[f] = float(sc[f])
    # An empty schedule falls back to one phase built from omega_orb / omega_z.
    kw["phases"] = _phases(sc["phases"]) if "phases" in sc else ()
    scenario = replace(base, **kw)

    mode = ov.get("mode", ob.get("mode", "position"))
    try:
        mode = OutputMode(mode)
    except ValueError as exc:
        raise ConfigError(f"unknown output mode {mode!r}") from exc
    dt = float(ov.get("dt", ob.get("dt", 1e-3)))
    if dt <= 0:
        raise ConfigError("dt must be positive")
    p0 = float(ob.get("p0", 3.0))
    d = float(ob.get("d", 20.0))
    v = float(ob.get("v", 1e-3))
    if min(p0, d, v) <= 0:
        raise ConfigError("p0, d and v must be positive")
    observer = ObserverConfig(
        P0=p0 * np.eye(STATE_DIM),
        V=v * np.eye(STATE_DIM),
        D=d * np.eye(3),
        output_mode=mode,
        dt=dt,
        meas_decimation=int(ob.get("meas_decimation", 1)),
    )

    kw = dict(scenario=scenario, observer=observer)
    if "xi_hat0" in ob:
        kw["xi_hat0"] = tuple(_floats(ob["xi_hat0"]))
    if "nu_hat0" in ob:
        kw["nu_hat0"] = tuple(_floats(ob["nu_hat0"]))
    if "meas_noise" in ob:
        kw["meas_noise"] = float(ob["meas_noise"])
    if "gains" in fl:
        kw["filter_gains"] = tuple(_floats(fl["gains"]))
    if "r_hat0" in fl:
        kw["R_hat0"] = exp_so3(_floats(fl["r_hat0"]))
    kw["duration"] = float(ov.get("duration", rn.get("duration", 60.0)))
    kw["seed"] = int(ov.get("seed", rn.get("seed", 0)))
    out = ov.get("out_dir", rn.get("out", None))
    kw["out_dir"] = None if out in (None, "") else str(out)
    if "enabled" in sw:
        kw["sweep_enabled"] = sw.getboolean("enabled")
    kw["sweep_delta"] = float(ov.get("sweep_delta", sw.get("delta", np.pi)))
    kw["sweep_stride"] = float(sw.get("stride", 0.5))
    return RunConfig(**kw)


def default_config(mode: OutputMode | str = OutputMode.POSITION) -> RunConfig:
    """Shipped ship-landing configuration for ``mode``."""
    mode = OutputMode(mode)
    return load_config(CONFIG_DIR / f"ship_landing_{mode.value}.cfg")


# --- traces --------------------------------------------------------------------


def scenario_trace(scenario: ShipScenario, duration: float, dt: float, samples=None) -> Trace:
    """Noise-free observability trace on the grid ``0, dt, ..., duration``.

    ``Z`` follows the target gyro with one exact exponential per step, using the
    reading at the step midpoint as the observer does.
    """
    n = int(round(duration / dt))
    if samples is None:
        samples = scenario.sample(np.arange(2 * n + 1) * (0.5 * dt))
    grid = slice(0, 2 * n + 1, 2)
    Z = np.empty((n + 1, 3, 3))
    Z[0] = np.eye(3)
    w_mid = samples.w_T[1::2]
    for k in range(n):
        Z[k + 1] = Z[k] @ exp_so3(w_mid[k] * dt)
    aTz = np.einsum("nij,nj->ni", Z, samples.a_T[grid])
    xi = samples.relative_position()[grid]
    rng = np.linalg.norm(xi, axis=1)
    y = xi / np.where(rng > MIN_RANGE, rng, 1.0)[:, None]
    return Trace(samples.t[grid], aTz, samples.w_B[grid], samples.Q_B[grid], y=y)


# --- running ---------------------------------------------------------------------


def _measurements(cfg: RunConfig, samples) -> np.ndarray:
    xi = samples.relative_position()
    rng = np.random.default_rng(cfg.seed)
    noise = cfg.meas_noise * rng.standard_normal(xi.shape) if cfg.meas_noise > 0 else 0.0
    if cfg.mode is OutputMode.POSITION:
        return xi + noise
    r = np.linalg.norm(xi, axis=1)
    if np.any(r <= MIN_RANGE):
        raise DegenerateRange("bodies coincide, bearing undefined")
    y = xi / r[:, None] + noise
    return y / np.linalg.norm(y, axis=1)[:, None]


def _angles(R, R_hat):
    E = np.swapaxes(R, 1, 2) @ R_hat
    c = np.clip(0.5 * (np.trace(E, axis1=1, axis2=2) - 1.0), -1.0, 1.0)
    skew = np.stack([E[:, 2, 1] - E[:, 1, 2], E[:, 0, 2] - E[:, 2, 0], E[:, 1, 0] - E[:, 0, 1]], axis=1)
    return np.arctan2(0.5 * np.linalg.norm(skew, axis=1), c)


def run_scenario(cfg: RunConfig) -> RunResult:
    """Simulate truth, the Riccati observer and the attitude filter.

    Rows are written at ``t = 0, dt, ..., duration``; a zero-step run yields no
    rows. :class:`~relpose.errors.NonPositiveP` propagates with the step index.
    """
    n = cfg.n_steps
    dt = cfg.dt
    mode = cfg.mode
    if n == 0:
        empty = np.zeros((0, len(COLUMNS)))
        return RunResult(cfg, empty, np.zeros((0, 15)), np.zeros((0, 3, 3)), _summary(cfg, empty), [], None)

    # Truth, inputs and outputs at every grid point and step midpoint.
    samples = cfg.scenario.sample(np.arange(2 * n + 1) * (0.5 * dt))
    y_all = _measurements(cfg, samples)

    def inputs(j, with_y):
        t = float(samples.t[j])
        y = MeasurementSample(t, mode, y_all[j]) if with_y else None
        return StepInputs(samples.imu_body(j), samples.imu_target(j), y)

    state = ObserverState.initial(cfg.xi_hat0, cfg.nu_hat0, P0=cfg.observer.P0)
    est = AttitudeEstimate(cfg.R_hat0, cfg.filter_gains)

    xi_hat = np.empty((n + 1, 3))
    nu_hat = np.empty((n + 1, 3))
    gamma = np.empty((n + 1, 9))
    Z = np.empty((n + 1, 3, 3))
    R_hat = np.empty((n + 1, 3, 3))

    def store(k, st, e):
        xi_hat[k], nu_hat[k], gamma[k], Z[k], R_hat[k] = st.xi_hat, st.nu_hat, st.gamma_z, st.Z, e.R_hat

    store(0, state, est)
    decim = cfg.observer.meas_decimation
    start = inputs(0, True)
    for k in range(n):
        with_y = k % decim == 0
        mid = inputs(2 * k + 1, with_y)
        end = inputs(2 * k + 2, True)
        Gamma = state.Gamma_z @ state.Z
        y0 = start.y if with_y else None
        state = observer_step(state, start.uB, start.uT, y0, cfg.observer, end=end, mid=mid)
        est = filter_step(est, mid.uT.w, mid.uB.w, Gamma, dt)
        store(k + 1, state, est)
        start = end

    grid = slice(0, 2 * n + 1, 2)
    t = samples.t[grid]
    Q_B, Q_T = samples.Q_B[grid], samples.Q_T[grid]
    R = np.swapaxes(Q_T, 1, 2) @ Q_B
    xi = samples.relative_position()[grid]
    nu = -np.einsum("nji,nj->ni", Q_B, samples.v_T[grid] - samples.v_B[grid])
    Rz = Z @ R
    gamma_true = Rz.reshape(n + 1, 9)  # vec(Rz^T) stacks the rows of Rz
    gamma_err = np.linalg.norm(gamma_true - gamma, axis=1)

    trace = scenario_trace(cfg.scenario, cfg.duration, dt, samples) if cfg.sweep_enabled else None
    sweep = sweep_observability(cfg, trace) if cfg.sweep_enabled else []
    lmin_col = _trailing_lmin(t, sweep)

    phase = np.searchsorted([ph[0] for ph in cfg.scenario.phases], t, side="right") - 1
    records = np.column_stack(
        [t, xi - xi_hat, nu - nu_hat, gamma_err, _angles(R, R_hat), lmin_col, phase.astype(float)]
    )
    Gam = np.einsum("nij,njk->nik", gamma.reshape(n + 1, 3, 3).swapaxes(1, 2), Z)
    estimates = np.column_stack([xi_hat, nu_hat, Gam.swapaxes(1, 2).reshape(n + 1, 9)])
    return RunResult(cfg, records, estimates, R_hat, _summary(cfg, records), sweep, trace, state)


def _trailing_lmin(t, sweep):
    """Latest completed window's ``lambda_min`` for every row (NaN before the first)."""
    col = np.full(len(t), np.nan)
    if not sweep:
        return col
    ends = np.array([w.t_end for w in sweep])
    vals = np.array([w.gramian_lmin for w in sweep])
    order = np.argsort(ends, kind="stable")
    ends, vals = ends[order], vals[order]
    idx = np.searchsorted(ends, t + 1e-9, side="right") - 1
    ok = idx >= 0
    col[ok] = vals[idx[ok]]
    return col


# --- summaries -------------------------------------------------------------------


def log_slope(t, values) -> float:
    """Least-squares slope of ``log(values)`` against ``t``."""
    t = np.asarray(t, dtype=float)
    v = np.asarray(values, dtype=float)
    if len(t) < 2:
        return float("nan")
    return float(np.polyfit(t, np.log(np.maximum(v, 1e-300)), 1)[0])


def classify_slope(slope: float, tol: float = SLOPE_TOL) -> str:
    if not np.isfinite(slope):
        return "undetermined"
    if slope < -tol:
        return "converging"
    if slope > tol:
        return "diverging"
    return "plateau"


def _summary(cfg: RunConfig, records: np.ndarray) -> dict:
    phases = []
    n_rows = len(records)
    t = records[:, 0] if n_rows else np.zeros(0)
    err = np.sqrt(np.sum(records[:, 1:7] ** 2, axis=1) + records[:, 7] ** 2) if n_rows else t
    xi_n = np.linalg.norm(records[:, 1:4], axis=1) if n_rows else t
    nu_n = np.linalg.norm(records[:, 4:7], axis=1) if n_rows else t
    gam = records[:, 7] if n_rows else t
    for i, (t0, t1) in enumerate(cfg.phase_bounds()):
        mask = (t >= t0 - 1e-9) & (t <= t1 + 1e-9)
        entry = {"id": i, "t_start": t0, "t_end": t1, "rows": int(mask.sum())}
        if mask.sum() >= 2:
            tt = t[mask]
            slope = log_slope(tt, err[mask])
            entry.update(
                err_start=float(err[mask][0]),
                err_end=float(err[mask][-1]),
                gamma_err_start=float(gam[mask][0]),
                gamma_err_end=float(gam[mask][-1]),
                slope=slope,
                slope_xi=log_slope(tt, xi_n[mask]),
                slope_nu=log_slope(tt, nu_n[mask]),
                slope_gamma=log_slope(tt, gam[mask]),
                classification=classify_slope(slope),
                classification_gamma=classify_slope(log_slope(tt, gam[mask])),
            )
        phases.append(entry)
    return {
        "mode": cfg.mode.value,
        "dt": cfg.dt,
        "duration": cfg.duration,
        "steps": cfg.n_steps if n_rows else 0,
        "seed": cfg.seed,
        "phase_boundaries": [ph[0] for ph in cfg.scenario.phases],
        "initial_error_norm": float(err[0]) if n_rows else None,
        "final_error_norm": float(err[-1]) if n_rows else None,
        "final_att_err_rad": float(records[-1, 8]) if n_rows else None,
        "phases": phases,
    }


# --- observability sweep --------------------------------------------------------


def sweep_observability(cfg: RunConfig, trace: Trace | None = None, rel: float = PE_RELATIVE_THRESHOLD):
    """Sliding-window verdicts ``[t, t + delta]`` for ``t = 0, stride, ...``."""
    if cfg.n_steps == 0:
        return []
    if trace is None:
        trace = scenario_trace(cfg.scenario, cfg.duration, cfg.dt)
    delta, stride = cfg.sweep_delta, cfg.sweep_stride
    h = trace.h
    span = trace.t[-1]
    starts_ph = [ph[0] for ph in cfg.scenario.phases]
    reports = []
    k = 0
    while True:
        t0 = k * stride
        # Snap to the grid so windows line up with recorded samples.
        t0 = round(t0 / h) * h
        t1 = t0 + round(delta / h) * h
        if t1 > span + 1e-9:
            break
        reports.append(_window_report(cfg, trace, t0, t1 - t0, starts_ph, rel))
        k += 1
    return reports


def _window_report(cfg, trace, t0, delta, starts_ph, rel) -> WindowReport:
    t1 = t0 + delta
    p0 = int(np.searchsorted(starts_ph, t0 + 1e-9, side="right") - 1)
    p1 = int(np.searchsorted(starts_ph, t1 - 1e-9, side="right") - 1)
    W = gramian(trace, t0, delta, cfg.mode, rel=rel)
    pa = pe_accel_check(trace, t0, delta, rel)
    pb = pe_bearing_check(trace, t0, delta, rel)
    return WindowReport(
        t_start=float(t0),
        t_end=float(t1),
        phase_start=p0,
        phase_end=p1,
        inside_phase=p0 if p0 == p1 else -1,
        gramian_lmin=W.lambda_min,
        gramian_lmax=W.lambda_max,
        uniformly_observable=W.verdict.value == "uniformly_observable",
        pe_a_pass=pa.passed,
        pe_a_mu=pa.mu,
        pe_pi_pass=pb.pi.passed,
        pe_pi_mu=pb.pi.mu,
        pe_schur_pass=pb.schur.passed,
        pe_schur_mu=pb.schur.mu,
        alignment_mu=pb.alignment_mu,
    )


# --- export ------------------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.9f" % x


def records_csv(records: np.ndarray) -> str:
    buf = io.StringIO()
    buf.write(",".join(COLUMNS) + "\n")
    for row in records:
        vals = ["%.9f" % v for v in row[:-1]]
        vals.append(str(int(row[-1])))
        buf.write(",".join(vals) + "\n")
    return buf.getvalue()


def sweep_csv(sweep: list[WindowReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for rep in sweep:
        w.writerow([_fmt(x) for x in rep.row()])
    return buf.getvalue()


def export(result: RunResult, out_dir=None) -> dict:
    """Write ``records.csv``, ``sweep.csv`` and ``summary.json``; return their paths."""
    out = Path(out_dir if out_dir is not None else (result.config.out_dir or "."))
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "records": out / "records.csv",
        "sweep": out / "sweep.csv",
        "summary": out / "summary.json",
    }
    paths["records"].write_text(records_csv(result.records))
    paths["sweep"].write_text(sweep_csv(result.sweep))
    paths["summary"].write_text(json.dumps(result.summary, indent=2, sort_keys=True) + "\n")
    return paths

