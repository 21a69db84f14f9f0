import json
import subprocess
import sys
from dataclasses import replace

import numpy as np
import pytest

from relpose import cli
from relpose.errors import ConfigError, NonPositiveP
from relpose.harness import (
    COLUMNS,
    SWEEP_COLUMNS,
    RunConfig,
    classify_slope,
    default_config,
    export,
    load_config,
    log_slope,
    records_csv,
    run_scenario,
    sweep_csv,
    sweep_observability,
)
from relpose.world import OutputMode, ShipScenario

from conftest import BEARING_SHADE, POSITION_SHADE


def write_cfg(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def short(mode="position", duration=0.5, **kw):
    return replace(default_config(mode), duration=duration, sweep_enabled=False, **kw)


class TestConfig:
    def test_shipped_defaults(self):
        for mode, shade in (("position", POSITION_SHADE), ("bearing", BEARING_SHADE)):
            cfg = default_config(mode)
            assert cfg.mode is OutputMode(mode)
            assert cfg.dt == 1e-3 and cfg.duration == 60.0
            np.testing.assert_array_equal(cfg.observer.P0, 3.0 * np.eye(15))
            np.testing.assert_array_equal(cfg.observer.D, 20.0 * np.eye(3))
            np.testing.assert_array_equal(cfg.observer.V, 1e-3 * np.eye(15))
            assert cfg.xi_hat0 == (1.0, -0.5, 0.8) and cfg.nu_hat0 == (-0.5, 0.8, -0.3)
            assert [p[0] for p in cfg.scenario.phases] == [0.0, *shade]
            assert cfg.scenario.phases[1][1:] == (0.0, 0.0)

    def test_overrides_win(self, tmp_path):
        cfg = load_config(
            None,
            mode="bearing",
            duration=2.0,
            dt=2e-3,
            sweep_delta=1.5,
            out_dir=str(tmp_path),
            seed=9,
        )
        assert cfg.mode is OutputMode.BEARING
        assert (cfg.duration, cfg.dt, cfg.sweep_delta, cfg.seed) == (2.0, 2e-3, 1.5, 9)
        assert cfg.out_dir == str(tmp_path)

    def test_file_values(self, tmp_path):
        p = write_cfg(
            tmp_path,
            "[scenario]\nphases = 0:0.3:1, 2:0:0\n[observer]\nmode = bearing\ndt = 0.002\n"
            "[run]\nduration = 4\nseed = 3\n[sweep]\nenabled = no\n",
        )
        cfg = load_config(p)
        assert cfg.scenario.phases == ((0.0, 0.3, 1.0), (2.0, 0.0, 0.0))
        assert cfg.mode is OutputMode.BEARING and cfg.dt == 0.002 and cfg.seed == 3
        assert not cfg.sweep_enabled
        assert load_config(p, duration=1.0).duration == 1.0

    def test_single_phase_from_rates(self, tmp_path):
        cfg = load_config(write_cfg(tmp_path, "[scenario]\nomega_orb = 0.2\nomega_z = 1.0\n"))
        assert cfg.scenario.phases == ((0.0, 0.2, 1.0),)

    @pytest.mark.parametrize(
        "text",
        [
            "[observer]\nmode = sonar\n",
            "[observer]\ndt = 0\n",
            "[observer]\nd = -1\n",
            "[observer]\nxi_hat0 = 1 2\n",
            "[run]\nduration = -5\n",
            "[run]\nduration = soon\n",
            "[scenario]\nphases = 0:0.4\n",
            "[scenario]\nphases = 1:0.4:2\n",
            "[filter]\ngains = 1 0 1\n",
            "[sweep]\ndelta = 0\n",
            "not an ini file",
        ],
    )
    def test_invalid(self, tmp_path, text):
        with pytest.raises(ConfigError):
            load_config(write_cfg(tmp_path, text))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.cfg")

    def test_unknown_override(self):
        with pytest.raises(ConfigError):
            load_config(None, colour="red")

    def test_direct_validation(self):
        with pytest.raises(ConfigError):
            RunConfig(duration=-1.0)
        with pytest.raises(ConfigError):
            RunConfig(sweep_stride=0.0)


class TestRun:
    def test_zero_duration(self, tmp_path):
        res = run_scenario(replace(default_config("position"), duration=0.0))
        assert res.records.shape == (0, len(COLUMNS))
        assert res.summary["steps"] == 0
        assert res.sweep == []
        paths = export(res, tmp_path)
        assert paths["records"].read_text() == ",".join(COLUMNS) + "\n"
        assert paths["sweep"].read_text() == ",".join(SWEEP_COLUMNS) + "\n"

    def test_record_layout(self):
        res = run_scenario(short())
        assert res.records.shape == (501, len(COLUMNS))
        np.testing.assert_allclose(res.records[:, 0], np.arange(501) * 1e-3, atol=1e-12)
        assert np.all(np.diff(res.records[:, 0]) > 0)
        np.testing.assert_allclose(res.records[0, 1:4], [-5.0 - 1.0, 0.5, 20.0 - 0.8])
        np.testing.assert_allclose(res.records[0, 4:7], [0.5, -2.8, -0.7])
        assert res.records[0, 7] == 0.0 and res.records[0, 8] == 0.0
        assert np.all(np.isnan(res.records[:, 9]))
        assert np.all(res.records[:, 10] == 0)
        assert res.estimates.shape == (501, 15) and res.R_hat.shape == (501, 3, 3)

    def test_phase_column(self):
        cfg = replace(short(duration=5.0), scenario=ShipScenario().with_phases((0, 0.4, 2), (2.0, 0, 0), (4.0, 0.4, 2)))
        rec = run_scenario(cfg).records
        for t, ph in ((1.999, 0), (2.0, 1), (3.5, 1), (4.0, 2), (5.0, 2)):
            assert rec[int(round(t / 1e-3)), 10] == ph

    def test_measurement_decimation(self):
        base = short(duration=0.2)
        dec = replace(base, observer=replace(base.observer, meas_decimation=10))
        a, b = run_scenario(base), run_scenario(dec)
        assert np.all(np.isfinite(b.records[:, :9]))
        assert not np.allclose(a.records[-1, 1:7], b.records[-1, 1:7])

    def test_noise_is_seeded(self):
        cfg = replace(short(duration=0.2), meas_noise=0.05)
        a, b = run_scenario(cfg), run_scenario(cfg)
        c = run_scenario(replace(cfg, seed=1))
        np.testing.assert_array_equal(a.records, b.records)
        assert not np.array_equal(a.records, c.records)

    def test_numerical_failure_propagates(self):
        base = short(duration=5.0)
        cfg = replace(base, observer=replace(base.observer, dt=0.5, D=1e4 * np.eye(3)))
        with pytest.raises(NonPositiveP) as info:
            run_scenario(cfg)
        assert info.value.step is not None


class TestSummary:
    def test_slope_helpers(self):
        t = np.linspace(0, 10, 101)
        assert log_slope(t, 3.0 * np.exp(-0.2 * t)) == pytest.approx(-0.2)
        assert classify_slope(-0.2) == "converging"
        assert classify_slope(0.005) == "plateau"
        assert classify_slope(0.05) == "diverging"
        assert classify_slope(float("nan")) == "undetermined"

    def test_phase_boundaries(self, position_run, bearing_run):
        assert position_run.summary["phase_boundaries"] == [0.0, *POSITION_SHADE]
        assert bearing_run.summary["phase_boundaries"] == [0.0, *BEARING_SHADE]
        ends = [p["t_end"] for p in position_run.summary["phases"]]
        assert ends == [POSITION_SHADE[0], POSITION_SHADE[1], 60.0]

    def test_position_profile(self, position_run):
        p1, p2, p3 = position_run.summary["phases"]
        assert p1["classification"] == "converging"
        assert p2["slope_gamma"] >= -0.01
        assert p3["classification"] == "converging"
        assert p3["classification_gamma"] == "converging"

    def test_bearing_stall_and_recovery(self, bearing_run):
        _, p2, p3 = bearing_run.summary["phases"]
        assert p2["classification"] in ("plateau", "diverging")
        assert p3["classification"] == "converging"

    def test_json_round_trip(self, position_run, tmp_path):
        paths = export(position_run, tmp_path)
        data = json.loads(paths["summary"].read_text())
        assert data["phase_boundaries"] == [0.0, *POSITION_SHADE]
        assert data["mode"] == "position" and data["steps"] == 60000


class TestSweep:
    def test_position_verdicts(self, position_run):
        inside = {}
        for w in position_run.sweep:
            inside.setdefault(w.inside_phase, []).append(w)
        assert inside[0] and all(w.pe_a_pass for w in inside[0])
        assert all(w.gramian_lmin > 0 for w in inside[0])
        assert inside[1] and not any(w.pe_a_pass for w in inside[1])
        assert all(w.pe_a_pass for w in inside[2])

    def test_bearing_verdicts(self, bearing_run):
        shaded = [w for w in bearing_run.sweep if w.inside_phase == 1]
        assert shaded and not any(w.pe_schur_pass for w in shaded)
        first = [w for w in bearing_run.sweep if w.inside_phase == 0]
        assert first and all(w.pe_pi_pass for w in first)

    def test_windows_on_grid(self, position_run):
        cfg = position_run.config
        starts = np.array([w.t_start for w in position_run.sweep])
        np.testing.assert_allclose(np.diff(starts), cfg.sweep_stride, atol=1e-9)
        assert all(abs(w.t_end - w.t_start - cfg.sweep_delta) <= cfg.dt for w in position_run.sweep)
        assert position_run.sweep[-1].t_end <= cfg.duration + 1e-9

    def test_lmin_column_trails_sweep(self, position_run):
        rec = position_run.records
        first_end = position_run.sweep[0].t_end
        k = int(round(first_end / position_run.config.dt))
        assert np.all(np.isnan(rec[: k - 1, 9]))
        assert rec[k, 9] == position_run.sweep[0].gramian_lmin

    def test_sweep_standalone_matches(self):
        cfg = replace(default_config("bearing"), duration=12.0, sweep_delta=5.0, sweep_stride=3.0)
        reps = sweep_observability(cfg)
        assert [w.t_start for w in reps] == [0.0, 3.0, 6.0]


class TestExport:
    def test_header_and_precision(self, tmp_path):
        res = run_scenario(short(duration=0.01))
        text = export(res, tmp_path)["records"].read_text().splitlines()
        assert text[0] == ",".join(COLUMNS)
        assert len(text) == 12
        fields = text[1].split(",")
        assert len(fields) == len(COLUMNS)
        assert fields[1] == "-6.000000000" and fields[-1] == "0"

    def test_empty_record_set(self):
        assert records_csv(np.zeros((0, len(COLUMNS)))) == ",".join(COLUMNS) + "\n"
        assert sweep_csv([]) == ",".join(SWEEP_COLUMNS) + "\n"

    def test_byte_identical(self, tmp_path):
        cfg = replace(default_config("bearing"), duration=6.0, sweep_delta=2.0, sweep_stride=1.0)
        a = export(run_scenario(cfg), tmp_path / "a")
        b = export(run_scenario(cfg), tmp_path / "b")
        for key in ("records", "sweep", "summary"):
            assert a[key].read_bytes() == b[key].read_bytes()


class TestCli:
    def test_success(self, tmp_path, capsys):
        code = cli.main(["--mode", "bearing", "--duration", "0.5", "--sweep-delta", "0.2", "--out", str(tmp_path)])
        assert code == cli.EXIT_OK
        out = capsys.readouterr().out
        assert "mode=bearing" in out
        for name in ("records.csv", "sweep.csv", "summary.json"):
            assert (tmp_path / name).exists()
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["steps"] == 500 and summary["mode"] == "bearing"

    def test_config_error(self, tmp_path, capsys):
        assert cli.main(["--config", str(tmp_path / "nope.cfg")]) == cli.EXIT_CONFIG
        assert cli.main(["--duration", "-1", "--out", str(tmp_path)]) == cli.EXIT_CONFIG
        assert "config error" in capsys.readouterr().err

    def test_numerical_failure(self, tmp_path):
        p = write_cfg(tmp_path, "[observer]\nd = 10000\n[run]\nduration = 5\n[sweep]\nenabled = false\n")
        assert cli.main(["--config", str(p), "--dt", "0.5", "--out", str(tmp_path)]) == cli.EXIT_NUMERIC

    def test_console_script(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "relpose.cli", "--duration", "0.05", "--out", str(tmp_path)],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, proc.stderr
        assert (tmp_path / "records.csv").exists()
