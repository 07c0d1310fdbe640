"""Fit the mixer time constant and readout gain to measured pulse widths.

The objective is the RMS relative error between simulated mean FWHM at the
first sampling point and the target widths, one simulated train per target
gating time. Parameters are searched in log space with a bounded
Nelder-Mead simplex that starts from a fixed simplex, so repeated runs give
bit-identical results.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from functools import partial
from pathlib import Path

import numpy as np

from .chip import ChipConfig
from .errors import DegenerateTargets, NotConverged, ParseError
from .experiments import DetectorConfig, TrainSettings, run_train
from .transport import ModelParams

_bad_file = partial(ParseError, module="calibration")

CONVERGENCE_LIMIT = 0.10  # objective above this after the budget -> NotConverged
MAX_ITER = 500

# name -> (lower, upper, start); searched on a log scale
DEFAULT_BOUNDS = {
    "tau_m": (0.01, 30.0, 2.0),
    "readout_gain": (1.0, 1.0e4, 50.0),
}
FITTABLE = ("tau_m", "dispersion_scale", "amplitude_scale", "readout_gain")


@dataclass(frozen=True)
class SimplexResult:
    x: np.ndarray
    fun: float
    iterations: int
    evaluations: int
    converged: bool


def _reflect(x, lo, hi):
    """Fold coordinates back into [lo, hi] by mirror reflection at the walls."""
    x = np.array(x, dtype=float)
    width = hi - lo
    y = np.mod(x - lo, 2.0 * width)
    return lo + np.where(y > width, 2.0 * width - y, y)


def nelder_mead(f, x0, step, lower, upper, max_iter: int = MAX_ITER,
                xtol: float = 1e-4, ftol: float = 1e-7) -> SimplexResult:
    """Bounded Nelder-Mead (standard coefficients 1, 2, 0.5, 0.5).

    The initial simplex is x0 plus ``step`` along each axis. Any trial point
    outside the box is reflected back in before evaluation.
    """
    lo, hi = np.asarray(lower, float), np.asarray(upper, float)
    n = len(x0)
    pts = [_reflect(x0, lo, hi)]
    for i in range(n):
        p = np.array(pts[0])
        p[i] += step[i]
        pts.append(_reflect(p, lo, hi))
    sim = np.array(pts)
    fs = np.array([f(p) for p in sim])
    evals = n + 1
    it = 0
    converged = False
    while it < max_iter:
        order = np.argsort(fs, kind="stable")
        sim, fs = sim[order], fs[order]
        if (np.max(np.abs(sim[1:] - sim[0])) <= xtol
                and np.max(np.abs(fs[1:] - fs[0])) <= ftol):
            converged = True
            break
        it += 1
        centroid = sim[:-1].mean(axis=0)
        xr = _reflect(centroid + (centroid - sim[-1]), lo, hi)
        fr = f(xr)
        evals += 1
        if fr < fs[0]:
            xe = _reflect(centroid + 2.0 * (centroid - sim[-1]), lo, hi)
            fe = f(xe)
            evals += 1
            sim[-1], fs[-1] = (xe, fe) if fe < fr else (xr, fr)
            continue
        if fr < fs[-2]:
            sim[-1], fs[-1] = xr, fr
            continue
        if fr < fs[-1]:
            xc = _reflect(centroid + 0.5 * (xr - centroid), lo, hi)
        else:
            xc = _reflect(centroid + 0.5 * (sim[-1] - centroid), lo, hi)
        fc = f(xc)
        evals += 1
        if fc < min(fr, fs[-1]):
            sim[-1], fs[-1] = xc, fc
            continue
        for i in range(1, n + 1):
            sim[i] = _reflect(sim[0] + 0.5 * (sim[i] - sim[0]), lo, hi)
            fs[i] = f(sim[i])
        evals += n
    best = int(np.argmin(fs))
    return SimplexResult(sim[best], float(fs[best]), it, evals, converged)


@dataclass(frozen=True)
class CalibrationResult:
    tau_m: float
    dispersion_scale: float
    amplitude_scale: float
    readout_gain: float | None
    objective: float
    converged: bool
    fitted: tuple[str, ...] = ()
    bounds: dict = field(default_factory=dict)
    targets: tuple[tuple[float, float], ...] = ()
    simulated_w_p: tuple[float, ...] = ()
    iterations: int = 0
    evaluations: int = 0

    def model_params(self, base: ModelParams | None = None) -> ModelParams:
        base = base or ModelParams()
        return replace(base, tau_m=self.tau_m, dispersion_scale=self.dispersion_scale,
                       amplitude_scale=self.amplitude_scale, readout_gain=self.readout_gain)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fitted"] = list(self.fitted)
        d["targets"] = [list(t) for t in self.targets]
        d["simulated_w_p"] = list(self.simulated_w_p)
        d["bounds"] = {k: list(v) for k, v in self.bounds.items()}
        return d


def simulated_widths(model: ModelParams, targets, chip_config: ChipConfig,
                     train: TrainSettings, detector: DetectorConfig, point: str) -> list[float]:
    widths = []
    for T_g, _ in targets:
        runs, _ = run_train(chip_config, replace(train, T_g=T_g), model, [point], detector)
        widths.append(runs[point].metrics.mean_w_p)
    return widths


def rms_relative_error(widths, targets) -> float:
    errs = [(w - t) / t if math.isfinite(w) else 1.0 for w, (_, t) in zip(widths, targets)]
    return math.sqrt(math.fsum(e * e for e in errs) / len(errs))


def calibrate(targets, chip_config: ChipConfig | None = None,
              train: TrainSettings | None = None, detector: DetectorConfig | None = None,
              bounds: dict | None = None, base: ModelParams | None = None,
              point: str = "p1", max_iter: int = MAX_ITER) -> CalibrationResult:
    """Fit the parameters named in ``bounds`` to (T_g, w_p) targets.

    Raises NotConverged (carrying the result) when the objective stays above
    ``CONVERGENCE_LIMIT``.
    """
    targets = tuple((float(a), float(b)) for a, b in targets)
    if len({t for t, _ in targets}) < 2:
        raise DegenerateTargets("need at least two targets with distinct gating times")
    if any(not (t > 0 and w > 0) for t, w in targets):
        raise DegenerateTargets("target gating times and widths must be positive")
    chip_config = chip_config or ChipConfig()
    train = train or TrainSettings(n_pulses=1)
    detector = detector or DetectorConfig()
    bounds = dict(DEFAULT_BOUNDS if bounds is None else bounds)
    base = base or ModelParams()
    names = tuple(bounds)
    unknown = set(names) - set(FITTABLE)
    if unknown:
        raise DegenerateTargets(f"cannot fit {sorted(unknown)}; choose from {FITTABLE}")
    lo = np.log([bounds[k][0] for k in names])
    hi = np.log([bounds[k][1] for k in names])
    x0 = np.log([bounds[k][2] for k in names])

    def model_at(z) -> ModelParams:
        return replace(base, **{k: float(v) for k, v in zip(names, np.exp(z))})

    cache: dict[bytes, float] = {}

    def objective(z) -> float:
        key = np.asarray(z).tobytes()
        if key not in cache:
            w = simulated_widths(model_at(z), targets, chip_config, train, detector, point)
            cache[key] = rms_relative_error(w, targets)
        return cache[key]

    res = nelder_mead(objective, x0, np.full(len(names), 0.5), lo, hi, max_iter)
    model = model_at(res.x)
    widths = simulated_widths(model, targets, chip_config, train, detector, point)
    result = CalibrationResult(
        tau_m=float(model.tau_m if model.tau_m is not None else 0.0),
        dispersion_scale=model.dispersion_scale,
        amplitude_scale=model.amplitude_scale,
        readout_gain=model.readout_gain,
        objective=res.fun,
        converged=res.fun <= CONVERGENCE_LIMIT,
        fitted=names,
        bounds={k: tuple(float(b) for b in bounds[k]) for k in names},
        targets=targets,
        simulated_w_p=tuple(widths),
        iterations=res.iterations,
        evaluations=res.evaluations,
    )
    if not result.converged:
        raise NotConverged(f"objective {res.fun:.4g} > {CONVERGENCE_LIMIT} after "
                           f"{res.iterations} iterations", result)
    return result


def dumps_calibration(result: CalibrationResult) -> str:
    return json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n"


def loads_calibration(text: str, source: str | None = None) -> CalibrationResult:
    try:
        d = json.loads(text)
        return CalibrationResult(
            tau_m=float(d["tau_m"]),
            dispersion_scale=float(d["dispersion_scale"]),
            amplitude_scale=float(d["amplitude_scale"]),
            readout_gain=None if d.get("readout_gain") is None else float(d["readout_gain"]),
            objective=float(d["objective"]),
            converged=bool(d["converged"]),
            fitted=tuple(d.get("fitted", ())),
            bounds={k: tuple(v) for k, v in d.get("bounds", {}).items()},
            targets=tuple(tuple(t) for t in d.get("targets", ())),
            simulated_w_p=tuple(d.get("simulated_w_p", ())),
            iterations=int(d.get("iterations", 0)),
            evaluations=int(d.get("evaluations", 0)),
        )
    except (ValueError, KeyError, TypeError) as exc:
        raise _bad_file(f"bad calibration file: {exc}", path=source) from None


def save_calibration(result: CalibrationResult, path) -> None:
    Path(path).write_text(dumps_calibration(result))


def load_calibration(path) -> CalibrationResult:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise _bad_file(f"cannot open: {exc.strerror}", path=str(path)) from None
    return loads_calibration(text, source=str(path))
