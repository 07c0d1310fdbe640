"""Acceptance criteria. Each test prints one ``ACCEPTANCE <n> PASS|FAIL`` line."""

import json
import math
import time
from dataclasses import replace

import numpy as np
import pytest

from gatetx.analysis import detect_pulses
from gatetx.calibration import load_calibration
from gatetx.chip import ChipConfig
from gatetx.cli import main
from gatetx.config import MEASURED_WIDTHS, SWEEP_DEFAULTS
from gatetx.experiments import TrainSettings, run_sweep, run_train, sweep_fits, sweep_values
from gatetx.gating import PressureLevels
from gatetx.hydraulics import solve_flows
from gatetx.transport import TransportParams, analytic_trace, numerical_solution

from conftest import gaussian_trace
from networks import dense_solve, random_network

POINTS = ("p1", "p2", "p3")

# parameter ranges for the solver cross-check (covering the default chip at 10-500 mbar)
ORACLE_RANGES = {
    "u": (1e-3, 1e-2),        # m/s
    "D_eff": (1e-7, 1e-5),    # m^2/s
    "tau_m": (0.0, 5.0),      # s
    "T_g": (0.08, 0.2),       # s
    "x": (0.0, 6e-3),         # m
}


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {number} {'PASS' if ok else 'FAIL'}: {detail}")
        return ok
    return emit


@pytest.fixture(scope="module")
def cli_calibration(tmp_path_factory):
    out = tmp_path_factory.mktemp("calibration")
    start = time.perf_counter()
    status = main(["calibrate", "--out", str(out)])
    elapsed = time.perf_counter() - start
    path = out / "calibration.json"
    train = json.loads((out / "calibration.json.meta.json").read_text())["calibration_train"]
    return status, load_calibration(path), train, elapsed


@pytest.fixture(scope="module")
def spacing_sweep(cli_calibration):
    _, cal, _, _ = cli_calibration
    d = SWEEP_DEFAULTS["T_pi"]
    rows = run_sweep("T_pi", sweep_values(d["start"], d["stop"], d["step"]), ChipConfig(),
                     TrainSettings(T_g=0.1), cal.model_params(), POINTS)
    return rows


def test_1_calibration_reproduces_measured_widths(cli_calibration, report):
    status, cal, train, elapsed = cli_calibration
    # re-simulate with the train the calibration used (recorded in its sidecar)
    settings = TrainSettings(**{**train, "levels": PressureLevels(**train["levels"])})
    errors = []
    for T_g, target in MEASURED_WIDTHS:
        runs, _ = run_train(ChipConfig(), replace(settings, T_g=T_g), cal.model_params(), ["p1"])
        errors.append((runs["p1"].metrics.mean_w_p - target) / target)
    ok = status == 0 and all(abs(e) <= 0.05 for e in errors) and elapsed < 120
    detail = ", ".join(f"{tg * 1e3:.0f} ms {100 * e:+.2f}%" for (tg, _), e in zip(MEASURED_WIDTHS,
                                                                                   errors))
    assert report(1, ok, f"w_p errors {detail} (limit 5%), calibrate took {elapsed:.1f} s")


def test_2_width_grows_linearly_with_gating_time(cli_calibration, report):
    _, cal, _, _ = cli_calibration
    d = SWEEP_DEFAULTS["T_g"]
    start = time.perf_counter()
    rows = run_sweep("T_g", sweep_values(d["start"], d["stop"], d["step"]), ChipConfig(),
                     TrainSettings(), cal.model_params(), POINTS)
    elapsed = time.perf_counter() - start
    fits = {f[1]: f for f in sweep_fits(rows)}
    ok = all(fits[p][5] >= 0.99 and fits[p][3] > 0 and fits[p][6] == 13 for p in POINTS)
    ok = ok and elapsed < 300
    detail = ", ".join(f"{p} r2={fits[p][5]:.4f} slope={fits[p][3]:.2f}" for p in POINTS)
    assert report(2, ok, f"{detail} ({elapsed:.1f} s)")


def test_3_measured_spacing_follows_commanded_spacing(spacing_sweep, report):
    fit = {f[1]: f for f in sweep_fits(spacing_sweep)}["p1"]
    slope, intercept = fit[3], fit[4]
    ok = 0.95 <= slope <= 1.05 and abs(intercept) <= 0.3
    assert report(3, ok, f"p1 T_pm = {slope:.4f} T_pi {intercept:+.4f} s over {fit[6]} points")


def test_4_interference_falls_with_spacing(spacing_sweep, cli_calibration, report):
    _, cal, _, _ = cli_calibration
    frac = [r[5] for r in spacing_sweep if r[2] == "p3"]
    monotone = all(b >= a for a, b in zip(frac, frac[1:]))
    isi = {}
    for T_pi in (7.0, 17.0):
        runs, _ = run_train(ChipConfig(), TrainSettings(T_g=0.1, T_pi=T_pi), cal.model_params(),
                            ["p3"])
        isi[T_pi] = runs["p3"].metrics.mean_isi_ratio
    ok = monotone and isi[7.0] > isi[17.0]
    assert report(4, ok, f"p3 distinguishable fraction monotone={monotone} "
                         f"({frac[0]:.2f} -> {frac[-1]:.2f}); isi 7 s {isi[7.0]:.4f} "
                         f"> 17 s {isi[17.0]:.4f}")


def test_5_numerical_solver_matches_analytic(report):
    rng = np.random.default_rng(20240501)
    worst_err = worst_mass = 0.0
    for _ in range(20):
        draw = {k: float(rng.uniform(*v)) for k, v in ORACLE_RANGES.items()}
        # log-uniform for the transport coefficients, which span decades
        draw["u"] = float(np.exp(rng.uniform(*np.log(ORACLE_RANGES["u"]))))
        draw["D_eff"] = float(np.exp(rng.uniform(*np.log(ORACLE_RANGES["D_eff"]))))
        p = TransportParams(draw["u"], draw["D_eff"], draw["tau_m"])
        src = [(1.0, 1.0 + draw["T_g"], 1.0)]
        horizon = 2.0 + draw["T_g"] + 2.0 * draw["x"] / draw["u"] + 5.0 * draw["tau_m"]
        ref = analytic_trace(src, p, draw["x"], 1 / 60, horizon).samples
        num = numerical_solution(src, p, draw["x"], 1 / 60, horizon)
        worst_err = max(worst_err, np.max(np.abs(num.trace.samples - ref)) / ref.max())
        worst_mass = max(worst_mass, num.audit.relative_error)
    ok = worst_err <= 0.01 and worst_mass <= 1e-3
    assert report(5, ok, f"20 draws: worst L_inf {100 * worst_err:.3f}% of peak, "
                         f"worst mass error {worst_mass:.2e}")


def test_6_hydraulics_match_dense_solves(report):
    rng = np.random.default_rng(6)
    worst_kcl = worst_ohm = worst_p = worst_lin = 0.0
    for _ in range(100):
        net = random_network(rng, int(rng.integers(4, 51)))
        pressures = {"n0": float(rng.uniform(1, 500)), "n1": float(rng.uniform(0, 500))}
        sol = solve_flows(net, pressures)
        ref = dense_solve(net, pressures)
        scale = max(abs(v) for v in ref.values())
        qmax = max(abs(q) for q in sol.segment_flows.values())
        worst_p = max(worst_p, max(abs(sol.node_pressures[k] - v) for k, v in ref.items()) / scale)
        fixed = set(pressures) | set(net.outlets)
        worst_kcl = max(worst_kcl, max((abs(v) for k, v in sol.node_balance(net).items()
                                        if k not in fixed), default=0.0) / qmax)
        worst_ohm = max(worst_ohm, max(
            abs(sol.node_pressures[s.from_node] - sol.node_pressures[s.to_node]
                - sol.resistances[s.id] * sol.segment_flows[s.id]) for s in net.segments) / scale)
        alpha = float(rng.uniform(0.1, 10.0))
        scaled = solve_flows(net, {k: alpha * v for k, v in pressures.items()})
        worst_lin = max(worst_lin, max(abs(scaled.node_pressures[k] - alpha * v)
                                       for k, v in sol.node_pressures.items()) / (alpha * scale))
    ok = max(worst_kcl, worst_ohm, worst_p, worst_lin) <= 1e-12
    assert report(6, ok, f"100 networks: pressure {worst_p:.1e}, Kirchhoff {worst_kcl:.1e}, "
                         f"dP=RQ {worst_ohm:.1e}, scaling {worst_lin:.1e} (limit 1e-12)")


def test_7_fwhm_of_sampled_gaussians(report):
    rng = np.random.default_rng(7)
    fwhm = 2.0 * math.sqrt(2.0 * math.log(2.0))
    worst = 0.0
    failures = 0
    for _ in range(1000):
        sigma = float(rng.uniform(0.1, 10.0))
        dt = sigma / 50.0
        horizon = 16.0 * sigma
        trace = gaussian_trace([rng.uniform(0.3, 0.7) * horizon], sigma, dt, horizon)
        pulses = detect_pulses(trace)
        if len(pulses) != 1:
            failures += 1
            continue
        err = abs(pulses[0].w_p - fwhm * sigma) / dt
        worst = max(worst, err)
        failures += err > 2.0
    assert report(7, failures == 0, f"1000 Gaussians: {failures} failures, "
                                    f"worst error {worst:.3f} dt (limit 2 dt)")


def _snapshot(directory):
    return {p.relative_to(directory).as_posix(): p.read_bytes()
            for p in sorted(directory.rglob("*")) if p.is_file()}


def test_8_outputs_are_deterministic(tmp_path, report):
    t = np.arange(0.0, 20.0, 1 / 60)
    y = 3.0 + 50.0 * np.exp(-0.5 * ((t - 6.0) / 0.8) ** 2) + 40.0 * np.exp(-0.5 * (t - 14.0) ** 2)
    trace = tmp_path / "video.csv"
    trace.write_text("t_s,intensity\n" + "".join(f"{float(a)!r},{float(b)!r}\n"
                                                  for a, b in zip(t, y)))
    cfg = tmp_path / "run.ini"
    cfg.write_text("[run]\nout = out\n[sweep]\nvariable = T_pi\nvalues = 4, 8, 12\n"
                   "[train]\nn_pulses = 3\n")
    commands = [["simulate"], ["sweep"], ["calibrate"], ["analyze", str(trace)],
                ["export-schedule"]]
    mismatched = []
    for cmd in commands:
        snapshots = []
        for jobs in ("1", "1", "3"):
            out = tmp_path / "out"
            for f in out.glob("*") if out.exists() else ():
                f.unlink()
            assert main([*cmd, "--config", str(cfg), "--jobs", jobs]) == 0
            snapshots.append(_snapshot(out))
        if not (snapshots[0] == snapshots[1] == snapshots[2]):
            mismatched.append(cmd[0])
    assert report(8, not mismatched, f"{len(commands)} commands x (2 runs + --jobs 3): "
                                     f"{'identical' if not mismatched else mismatched}")
