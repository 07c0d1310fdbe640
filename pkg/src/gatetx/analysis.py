"""Pulse metrology on concentration-intensity traces.

The pipeline mirrors what is done on the microscope recordings: per-trace
min-max normalisation (NCIP), peak picking with a prominence and a minimum
spacing, full width at half prominence with linear interpolation, peak to
peak intervals and an inter-symbol-interference ratio per pulse pair.
"""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateFit, DegenerateTrain, InvalidTrace, ParseError
from .transport import ConcentrationTrace

log = logging.getLogger(__name__)

TRACE_HEADER = ("t_s", "intensity")
PULSE_HEADER = ("pulse_idx", "peak_t_s", "peak_v", "w_p_s", "resolved")
INTERVAL_HEADER = ("k", "T_pm_s", "isi_ratio", "distinguishable")

DEFAULT_PROMINENCE = 0.2
DEFAULT_ISI_THRESHOLD = 0.5
DT_JITTER = 0.01


@dataclass(frozen=True)
class PulseMetrics:
    peak_time: float
    peak_value: float
    w_p: float
    left_half_t: float
    right_half_t: float
    resolved: bool
    prominence: float
    index: int


@dataclass(frozen=True)
class TrainMetrics:
    pulses: tuple[PulseMetrics, ...]
    mean_w_p: float
    T_pm: tuple[float, ...]
    isi_ratio: tuple[float, ...]
    distinguishable: tuple[bool, ...]

    @property
    def mean_T_pm(self) -> float:
        return float(np.mean(self.T_pm)) if self.T_pm else math.nan

    @property
    def mean_isi_ratio(self) -> float:
        return float(np.mean(self.isi_ratio)) if self.isi_ratio else math.nan


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    r2: float
    n_points: int
    residuals: tuple[float, ...]


def normalize_ncip(trace: ConcentrationTrace) -> ConcentrationTrace:
    """Min-max normalise to [0, 1]; a flat trace maps to all zeros."""
    y = trace.samples
    lo, hi = float(np.min(y)), float(np.max(y))
    if hi <= lo:
        return trace.with_samples(np.zeros_like(y))
    return trace.with_samples(np.clip((y - lo) / (hi - lo), 0.0, 1.0))


def optical_readout(trace: ConcentrationTrace, gain: float | None) -> ConcentrationTrace:
    """Absorbance contrast 1 - exp(-gain c) of a dye layer; identity for gain=None."""
    if gain is None:
        return trace
    return trace.with_samples(-np.expm1(-gain * trace.samples))


# --------------------------------------------------------------------------
# peaks
# --------------------------------------------------------------------------

def _local_maxima(y: np.ndarray) -> list[int]:
    """Strict local maxima; flat tops report their middle sample (left-rounded)."""
    peaks = []
    n = y.size
    i = 1
    while i < n - 1:
        if y[i - 1] < y[i]:
            ahead = i + 1
            while ahead < n - 1 and y[ahead] == y[i]:
                ahead += 1
            if y[ahead] < y[i]:
                peaks.append((i + ahead - 1) // 2)
                i = ahead
        i += 1
    return peaks


def _bases(y: np.ndarray, i: int) -> tuple[int, int]:
    """Index of the lowest sample on each side before the signal exceeds y[i]."""
    lo = i
    j = i
    while j > 0 and y[j - 1] <= y[i]:
        j -= 1
        if y[j] < y[lo]:
            lo = j
    hi = i
    j = i
    while j < y.size - 1 and y[j + 1] <= y[i]:
        j += 1
        if y[j] < y[hi]:
            hi = j
    return lo, hi


def _select_by_separation(y, peaks, min_samples: float) -> list[int]:
    """Greedy by height; on equal height the earlier peak wins."""
    order = sorted(peaks, key=lambda p: (-y[p], p))
    kept: list[int] = []
    for p in order:
        if all(abs(p - q) >= min_samples for q in kept):
            kept.append(p)
    return sorted(kept)


def detect_pulses(trace: ConcentrationTrace, min_prominence: float = DEFAULT_PROMINENCE,
                  min_separation: float = 0.0) -> list[PulseMetrics]:
    """Peaks with prominence >= min_prominence at least min_separation seconds apart.

    Widths are taken at half of each peak's prominence, i.e. relative to
    the higher of its two surrounding minima, with linear interpolation
    between samples.
    """
    y = trace.samples
    n = y.size
    dt = trace.dt
    candidates = _local_maxima(y)
    if min_separation > 0:
        candidates = _select_by_separation(y, candidates, min_separation / dt - 1e-9)
    out = []
    for i in candidates:
        lo, hi = _bases(y, i)
        ref = max(y[lo], y[hi])
        prominence = y[i] - ref
        if prominence < min_prominence or prominence <= 0:
            continue
        level = y[i] - 0.5 * prominence

        j = i
        while j > lo and y[j] > level:
            j -= 1
        left = float(j)
        if y[j] < level:
            left += (level - y[j]) / (y[j + 1] - y[j])
        j = i
        while j < hi and y[j] > level:
            j += 1
        right = float(j)
        if y[j] < level:
            right -= (level - y[j]) / (y[j - 1] - y[j])

        # A base on the trace edge may be a cut-off pulse rather than a true
        # minimum: the side is unresolved if the signal never falls below the
        # half level taken against the interior base.
        edge_lo, edge_hi = lo == 0, hi == n - 1
        if edge_lo and edge_hi:
            true_ref = min(y[lo], y[hi])
        elif edge_lo:
            true_ref = y[hi]
        elif edge_hi:
            true_ref = y[lo]
        else:
            true_ref = ref
        true_level = y[i] - 0.5 * (y[i] - true_ref)
        truncated = (edge_lo and y[lo] >= true_level) or (edge_hi and y[hi] >= true_level)
        out.append(PulseMetrics(
            peak_time=float(trace.t0 + i * dt),
            peak_value=float(y[i]),
            w_p=float((right - left) * dt),
            left_half_t=float(trace.t0 + left * dt),
            right_half_t=float(trace.t0 + right * dt),
            resolved=bool(not truncated),
            prominence=float(prominence),
            index=i,
        ))
    return out


def train_metrics(pulses, trace: ConcentrationTrace,
                  isi_threshold: float = DEFAULT_ISI_THRESHOLD) -> TrainMetrics:
    """Peak-to-peak intervals, valley-to-peak ISI ratios and distinguishability."""
    pulses = tuple(sorted(pulses, key=lambda p: p.peak_time))
    if not pulses:
        warnings.warn("no pulses detected", DegenerateTrain, stacklevel=2)
        return TrainMetrics((), math.nan, (), (), ())
    widths = [p.w_p for p in pulses if p.resolved]
    mean_w_p = float(np.mean(widths)) if widths else math.nan
    y = trace.samples
    t_pm, ratios, ok = [], [], []
    for a, b in zip(pulses, pulses[1:]):
        t_pm.append(b.peak_time - a.peak_time)
        valley = float(np.min(y[a.index:b.index + 1]))
        mean_peak = 0.5 * (a.peak_value + b.peak_value)
        ratio = min(1.0, max(0.0, valley / mean_peak)) if mean_peak > 0 else 0.0
        ratios.append(ratio)
        ok.append(ratio < isi_threshold)
    return TrainMetrics(pulses, mean_w_p, tuple(t_pm), tuple(ratios), tuple(ok))


def analyze(trace: ConcentrationTrace, min_prominence: float = DEFAULT_PROMINENCE,
            min_separation: float = 0.0,
            isi_threshold: float = DEFAULT_ISI_THRESHOLD) -> TrainMetrics:
    """normalize_ncip -> detect_pulses -> train_metrics."""
    ncip = normalize_ncip(trace)
    pulses = detect_pulses(ncip, min_prominence, min_separation)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateTrain)
        return train_metrics(pulses, ncip, isi_threshold)


def linear_fit(xs, ys) -> LinearFit:
    """Ordinary least squares y = slope x + intercept."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.size != y.size:
        raise ValueError("xs and ys differ in length")
    if x.size < 2 or np.all(x == x[0]):
        raise DegenerateFit("need at least two distinct x values")
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    resid = y - (slope * x + intercept)
    sst = float(np.sum((y - ym) ** 2))
    ssr = float(np.sum(resid**2))
    r2 = 1.0 if sst == 0.0 else min(1.0, max(0.0, 1.0 - ssr / sst))
    return LinearFit(slope, intercept, r2, int(x.size), tuple(float(r) for r in resid))


# --------------------------------------------------------------------------
# files
# --------------------------------------------------------------------------

def ingest_trace(path, format: str = "csv", point_id: str | None = None) -> ConcentrationTrace:
    """Read a ``t_s,intensity`` export; resample to a uniform grid if the clock jitters > 1 %."""
    if format != "csv":
        raise ValueError(f"unsupported trace format {format!r}")
    path = Path(path)
    try:
        handle = path.open(newline="")
    except OSError as exc:
        raise ParseError(f"cannot open: {exc.strerror}", path=str(path)) from exc
    ts, vs = [], []
    with handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or tuple(c.strip() for c in header) != TRACE_HEADER:
            raise ParseError(f"expected header {','.join(TRACE_HEADER)}", line=1, path=str(path))
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise ParseError(f"expected 2 fields, got {len(row)}", line=lineno, path=str(path))
            try:
                t, v = float(row[0]), float(row[1])
            except ValueError:
                raise ParseError(f"non-numeric value in {row!r}", line=lineno,
                                 path=str(path)) from None
            if not (math.isfinite(t) and math.isfinite(v)):
                raise ParseError("non-finite value", line=lineno, path=str(path))
            ts.append(t)
            vs.append(v)
    t = np.asarray(ts)
    v = np.asarray(vs)
    if t.size < 2:
        raise InvalidTrace(f"{path}: need at least two samples")
    steps = np.diff(t)
    if np.any(steps <= 0):
        raise InvalidTrace(f"{path}: time stamps are not strictly increasing")
    negative = int(np.sum(v < 0))
    if negative:
        warnings.warn(f"{path}: clamped {negative} negative intensities to 0", stacklevel=2)
        log.warning("clamped %d negative samples in %s", negative, path)
        v = np.clip(v, 0.0, None)
    nominal = float(np.median(steps))
    if np.max(np.abs(steps - nominal)) <= DT_JITTER * nominal:
        dt = float((t[-1] - t[0]) / (t.size - 1))
        samples = v
    else:
        dt = nominal
        n = int(math.floor((t[-1] - t[0]) / dt + 1e-9)) + 1
        grid = t[0] + dt * np.arange(n)
        samples = np.interp(grid, t, v)
    return ConcentrationTrace(point_id or path.stem, None, dt, samples, float(t[0]))


def write_trace_csv(path, trace: ConcentrationTrace, value_column: str = "concentration") -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("t_s", value_column))
        for t, c in zip(trace.times, trace.samples):
            w.writerow((repr(float(t)), repr(float(c))))


def write_pulse_csv(path, pulses) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PULSE_HEADER)
        for k, p in enumerate(pulses):
            w.writerow((k, repr(float(p.peak_time)), repr(float(p.peak_value)), repr(float(p.w_p)),
                         int(p.resolved)))


def write_interval_csv(path, metrics: TrainMetrics) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(INTERVAL_HEADER)
        for k, (tpm, isi, ok) in enumerate(zip(metrics.T_pm, metrics.isi_ratio,
                                               metrics.distinguishable)):
            w.writerow((k, repr(float(tpm)), repr(float(isi)), int(ok)))
