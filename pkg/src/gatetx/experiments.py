"""Simulate-then-measure runs and parameter sweeps.

A *cell* is one pulse train simulated at a set of sampling points and pushed
through the same measurement pipeline used on recordings. Sweeps are lists of
independent cells; they may be evaluated by a process pool and are always
reported sorted by (value, point).
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .analysis import (DEFAULT_ISI_THRESHOLD, DEFAULT_PROMINENCE, TrainMetrics, analyze,
                       linear_fit, optical_readout)
from .chip import ChipConfig, build_default_chip
from .errors import DegenerateFit, DegenerateTrain, InvalidSchedule
from .gating import PressureLevels, PulseTrainSpec, build_train
from .transport import ConcentrationTrace, ModelParams, simulate

SUMMARY_HEADER = ("sweep_variable", "value", "point_id", "mean_w_p_s", "mean_T_pm_s",
                  "frac_distinguishable")
FIT_HEADER = ("sweep_variable", "point_id", "metric", "slope", "intercept", "r2", "n_points")

SWEEP_VARIABLES = ("T_g", "T_pi")


@dataclass(frozen=True)
class DetectorConfig:
    min_prominence: float = DEFAULT_PROMINENCE
    min_separation: float | None = None  # None: the gating time of the train
    isi_threshold: float = DEFAULT_ISI_THRESHOLD


@dataclass(frozen=True)
class TrainSettings:
    T_g: float = 0.1
    T_pi: float = 8.0
    n_pulses: int = 5
    equilibration: float = 5.0
    tail: float = 30.0
    levels: PressureLevels = field(default_factory=PressureLevels)

    def spec(self) -> PulseTrainSpec:
        return PulseTrainSpec(self.T_g, self.T_pi, self.n_pulses, self.levels,
                              self.equilibration, self.tail)


@dataclass(frozen=True, eq=False)
class PointRun:
    trace: ConcentrationTrace  # concentration
    observed: ConcentrationTrace  # after the intensity readout
    metrics: TrainMetrics


def run_train(chip_config: ChipConfig, train: TrainSettings, model: ModelParams,
              points, detector: DetectorConfig = DetectorConfig()):
    """Simulate one train and measure it at each point; returns (runs, metadata)."""
    chip = build_default_chip(chip_config)
    schedule = build_train(train.spec())
    result = simulate(schedule, chip, model, points)
    sep = train.T_g if detector.min_separation is None else detector.min_separation
    runs = {}
    for pid, trace in result.traces.items():
        observed = optical_readout(trace, model.readout_gain)
        metrics = analyze(observed, detector.min_prominence, sep, detector.isi_threshold)
        runs[pid] = PointRun(trace, observed, metrics)
    return runs, result.metadata


def frac_distinguishable(metrics: TrainMetrics, n_pulses: int) -> float:
    """Share of the n - 1 commanded intervals seen as two distinguishable peaks.

    Merged or missed pulses count as indistinguishable, so the denominator
    is fixed by the schedule rather than by what the detector found.
    """
    if n_pulses < 2:
        return math.nan
    return sum(metrics.distinguishable) / (n_pulses - 1)


def sweep_values(start: float, stop: float, step: float) -> list[float]:
    """Inclusive arithmetic grid, rounded to 1e-9 to keep values printable."""
    if not (start > 0 and stop >= start and step > 0):
        raise InvalidSchedule(f"bad sweep range {start}..{stop} step {step}")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + k * step, 9) for k in range(n)]


@dataclass(frozen=True)
class SweepCell:
    variable: str
    value: float
    chip_config: ChipConfig
    train: TrainSettings
    model: ModelParams
    points: tuple[str, ...]
    detector: DetectorConfig


def run_cell(cell: SweepCell) -> list[tuple]:
    train = replace(cell.train, **{cell.variable: cell.value})
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateTrain)
        runs, _ = run_train(cell.chip_config, train, cell.model, cell.points, cell.detector)
    rows = []
    for pid in cell.points:
        m = runs[pid].metrics
        rows.append((cell.variable, cell.value, pid, m.mean_w_p, m.mean_T_pm,
                     frac_distinguishable(m, train.n_pulses)))
    return rows


def run_sweep(variable: str, values, chip_config: ChipConfig, train: TrainSettings,
              model: ModelParams, points, detector: DetectorConfig = DetectorConfig(),
              jobs: int = 1) -> list[tuple]:
    """Summary rows (see ``SUMMARY_HEADER``) sorted by value then point."""
    if variable not in SWEEP_VARIABLES:
        raise InvalidSchedule(f"sweep variable must be one of {SWEEP_VARIABLES}, got {variable!r}")
    if any(not v > 0 for v in values):
        raise InvalidSchedule("sweep values must be positive")
    cells = [SweepCell(variable, float(v), chip_config, train, model, tuple(points), detector)
             for v in values]
    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(run_cell, cells))
    else:
        chunks = [run_cell(c) for c in cells]
    order = {p: k for k, p in enumerate(points)}
    rows = [r for chunk in chunks for r in chunk]
    return sorted(rows, key=lambda r: (r[1], order[r[2]]))


def sweep_fits(rows) -> list[tuple]:
    """OLS per point: w_p vs T_g, or T_pm vs T_pi. Cells without a value are skipped."""
    fits = []
    by_point: dict[str, list] = {}
    for row in rows:
        by_point.setdefault(row[2], []).append(row)
    for pid, rs in by_point.items():
        variable = rs[0][0]
        col, metric = (3, "mean_w_p_s") if variable == "T_g" else (4, "mean_T_pm_s")
        pts = [(r[1], r[col]) for r in rs if np.isfinite(r[col])]
        try:
            fit = linear_fit([p[0] for p in pts], [p[1] for p in pts])
        except DegenerateFit:
            fits.append((variable, pid, metric, math.nan, math.nan, math.nan, len(pts)))
            continue
        fits.append((variable, pid, metric, fit.slope, fit.intercept, fit.r2, fit.n_points))
    return fits
