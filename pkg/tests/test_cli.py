import json
import subprocess
import sys

import numpy as np
import pytest

from nsclc_phasefield.calibration import synthetic_measurements
from nsclc_phasefield.cli import main
from nsclc_phasefield.observables import TimeSeries
from nsclc_phasefield import scenario as sc

SMALL = """\
preset: {preset}
grid: {{n_elements: 60}}
time: {{t_end: {t_end}, dt: 0.25}}
"""


@pytest.fixture
def config(tmp_path):
    def make(preset="patient1", t_end=4.0, extra=""):
        path = tmp_path / f"{preset}_{t_end}.yaml"
        path.write_text(SMALL.format(preset=preset, t_end=t_end) + extra)
        return path
    return make


def test_run_writes_csv(config, tmp_path, capsys):
    out = tmp_path / "run.csv"
    assert main(["run", "--config", str(config()), "--out", str(out)]) == 0
    assert len(TimeSeries.from_csv(out)) == 17
    assert "peak_volume_mm3" in capsys.readouterr().out


def test_run_is_byte_identical(config, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["run", "--config", str(config()), "--out", str(a)])
    main(["run", "--config", str(config()), "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_dose_scale_flag(config, tmp_path):
    sched = 'schedule: {kind: starts, starts: [0.5]}\n'
    full, none = tmp_path / "f.csv", tmp_path / "n.csv"
    main(["run", "--config", str(config(extra=sched)), "--out", str(full)])
    main(["run", "--config", str(config(extra=sched)), "--out", str(none), "--dose-scale", "0"])
    assert TimeSeries.from_csv(full).drug[-1] > 0
    assert TimeSeries.from_csv(none).drug[-1] == 0


@pytest.mark.parametrize("argv", [
    ["run", "--preset", "patient9"],
    ["run", "--preset", "patient1", "--config", "x.yaml"],
    ["run", "--config", "does/not/exist.yaml"],
    ["run", "--preset", "patient1", "--dose-scale", "-1"],
    ["sweep-dose", "--preset", "patient1", "--scales", "1,a"],
    ["compare-schedules", "--preset", "patient1"],
    ["calibrate", "--preset", "patient1"],
])
def test_config_errors_exit_2(argv, capsys):
    assert main(argv) == 2
    assert "config error" in capsys.readouterr().err


def test_unknown_key_exit_2(config, capsys):
    assert main(["run", "--config", str(config(extra="colour: red\n"))]) == 2


def test_numerical_failure_exit_3(config, tmp_path, monkeypatch):
    def fail(cfg, output=None):
        return sc.ScenarioOutcome(sc.EXIT_NUMERICAL, None, {}, "diverged", None)

    monkeypatch.setattr(sc, "run_scenario", fail)
    assert main(["run", "--config", str(config())]) == 3


def test_sweep_dose_cli(config, tmp_path):
    out = tmp_path / "sweep"
    assert main(["sweep-dose", "--config", str(config()), "--scales", "1,0",
                 "--out", str(out)]) == 0
    lines = (out / "dose_sweep.csv").read_text().splitlines()
    assert [ln.split(",")[0] for ln in lines[1:]] == ["1.0", "0.0"]


def test_compare_schedules_cli(config, tmp_path):
    out = tmp_path / "cmp"
    assert main(["compare-schedules", "--config", str(config("patient2")), "--out", str(out)]) == 0
    lines = (out / "schedule_comparison.csv").read_text().splitlines()
    assert [ln.split(",")[0] for ln in lines[1:]] == ["Q3W", "Q3W/Q6W", "Q3W/Q6W ext."]


def test_calibrate_cli(config, tmp_path, capsys):
    cfg = sc.load_config(config(t_end=8.0))
    times = np.array([2.0, 4.0, 6.0, 8.0])
    meas = synthetic_measurements(cfg.params, cfg.therapy(), cfg.grid(), cfg.r0, times, cfg.step)
    data = tmp_path / "m.csv"
    data.write_text("t_days,volume_mm3\n" + "".join(
        f"{float(t)!r},{float(v) * 1e9!r}\n" for t, v in zip(meas.t, meas.volume)))
    trace = tmp_path / "trace.csv"
    argv = ["calibrate", "--config", str(config(t_end=8.0)), "--measurements", str(data),
            "--free", "lambda_pro:0.2:0.6", "--budget", "12", "--out", str(trace)]
    assert main(argv) == 0
    result = json.loads(capsys.readouterr().out)
    assert result["runs"] <= 12
    assert result["misfit"] < 1e-6
    assert trace.read_text().splitlines()[0] == "run,lambda_pro,misfit"


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "nsclc_phasefield", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    for cmd in ("run", "sweep-dose", "compare-schedules", "calibrate"):
        assert cmd in proc.stdout
