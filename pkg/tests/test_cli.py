import json
import subprocess
import sys

import numpy as np
import pytest

from gatetx.cli import main
from gatetx.gating import load_schedule


def _files(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())}


def _config(tmp_path, body):
    path = tmp_path / "run.ini"
    path.write_text(body)
    return path


def test_simulate_writes_traces_metrics_and_sidecars(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--out", str(out)]) == 0
    names = set(_files(out))
    for pid in ("p1", "p2", "p3"):
        for kind in ("trace", "intensity", "pulses", "intervals"):
            assert f"{kind}_{pid}.csv" in names
            assert f"{kind}_{pid}.csv.meta.json" in names
    assert (out / "trace_p3.csv").read_text().startswith("t_s,concentration\n")
    meta = json.loads((out / "trace_p1.csv.meta.json").read_text())
    assert meta["model"]["solver"] == "analytic"
    assert meta["run_config"]["train"]["T_g"] == 0.1
    assert meta["simulation"]["points"]["p3"]["x_m"] == pytest.approx(6e-3)
    assert "determinism" in meta
    assert len(load_schedule(out / "schedule.csv").off_windows()) == 5


def test_repeat_runs_are_byte_identical(tmp_path):
    for run in ("a", "b"):
        assert main(["simulate", "--out", str(tmp_path / run), "--points", "p1,p3"]) == 0
    a, b = _files(tmp_path / "a"), _files(tmp_path / "b")
    assert a.keys() == b.keys()
    for name in a:
        if name.endswith(".meta.json"):
            ma, mb = json.loads(a[name]), json.loads(b[name])
            assert ma["run_config"].pop("out") != mb["run_config"].pop("out")
            assert ma == mb
        else:
            assert a[name] == b[name], name


def test_sweep_does_not_depend_on_jobs(tmp_path):
    cfg = _config(tmp_path, "[sweep]\nvariable = T_g\nvalues = 0.08, 0.14, 0.2\n"
                            "[train]\nn_pulses = 2\ntail = 15\n")
    for jobs in ("1", "3"):
        assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / jobs),
                     "--jobs", jobs]) == 0
    for name in ("sweep_T_g.csv", "fits_T_g.csv"):
        assert (tmp_path / "1" / name).read_bytes() == (tmp_path / "3" / name).read_bytes()
    rows = (tmp_path / "1" / "sweep_T_g.csv").read_text().splitlines()
    assert rows[0] == "sweep_variable,value,point_id,mean_w_p_s,mean_T_pm_s,frac_distinguishable"
    assert len(rows) == 1 + 3 * 3


def test_invalid_chip_file_exits_with_config_error(tmp_path, capsys):
    chip = tmp_path / "chip.ini"
    chip.write_text("[geometry]\nmain_width = -5\n")
    cfg = _config(tmp_path, f"[run]\nchip = {chip.name}\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "gatetx: chip:" in capsys.readouterr().err


def test_unknown_config_key(tmp_path, capsys):
    cfg = _config(tmp_path, "[train]\nT_gate = 0.1\n")
    assert main(["export-schedule", "--config", str(cfg)]) == 2
    assert "T_gate" in capsys.readouterr().err


def _two_pulse_export(path):
    t = np.arange(0.0, 30.0, 1.0 / 60.0)
    y = 5.0 + 80.0 * (np.exp(-0.5 * (t - 10.0) ** 2) + np.exp(-0.5 * (t - 20.0) ** 2))
    rows = "".join(f"{float(a)!r},{float(b)!r}\n" for a, b in zip(t, y))
    path.write_text("t_s,intensity\n" + rows)
    return path


def test_analyze_measures_exported_video(tmp_path):
    trace = _two_pulse_export(tmp_path / "video.csv")
    out = tmp_path / "an"
    assert main(["analyze", str(trace), "--out", str(out)]) == 0
    rows = (out / "intervals_video.csv").read_text().splitlines()
    assert rows[0] == "k,T_pm_s,isi_ratio,distinguishable"
    assert abs(float(rows[1].split(",")[1]) - 10.0) <= 1.0 / 60.0
    pulses = (out / "pulses_video.csv").read_text().splitlines()
    assert len(pulses) == 3


def test_analyze_keeps_going_after_a_bad_file(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("t_s,intensity\n0.0,1.0\n0.1,x\n")
    good = _two_pulse_export(tmp_path / "good.csv")
    out = tmp_path / "an"
    assert main(["analyze", str(bad), str(good), "--out", str(out)]) == 2
    assert "bad.csv:3:" in capsys.readouterr().err
    assert (out / "pulses_good.csv").exists()


def test_simulated_intensity_reanalyses_to_the_same_pulses(tmp_path):
    sim = tmp_path / "sim"
    assert main(["simulate", "--out", str(sim), "--points", "p2"]) == 0
    assert main(["analyze", str(sim / "intensity_p2.csv"), "--out", str(tmp_path / "an")]) == 0
    assert ((tmp_path / "an" / "pulses_intensity_p2.csv").read_text()
            == (sim / "pulses_p2.csv").read_text())


def test_export_schedule(tmp_path):
    cfg = _config(tmp_path, "[train]\nT_g = 0.15\nT_pi = 4\nn_pulses = 3\n"
                            "[pressures]\ngate_off = 20\n")
    assert main(["export-schedule", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    sched = load_schedule(tmp_path / "o" / "schedule.csv")
    assert [round(a, 9) for a, _ in sched.off_windows()] == [5.0, 9.0, 13.0]
    assert sched.steps[1].gate == 20.0


def test_calibrate_then_simulate(tmp_path, capsys):
    out = tmp_path / "cal"
    assert main(["calibrate", "--out", str(out)]) == 0
    assert "tau_m" in capsys.readouterr().out
    cal = out / "calibration.json"
    assert main(["simulate", "--calibration", str(cal), "--out", str(tmp_path / "s"),
                 "--points", "p1"]) == 0
    meta = json.loads((tmp_path / "s" / "pulses_p1.csv.meta.json").read_text())
    assert meta["model"]["tau_m"] == json.loads(cal.read_text())["tau_m"]


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "gatetx", "export-schedule", "--out",
                           str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "schedule.csv.meta.json").exists()
