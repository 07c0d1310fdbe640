"""Run configuration (INI) shared by the command-line subcommands.

Example::

    [run]
    chip = chip.ini
    points = p1,p2,p3
    out = runs/demo
    calibration = calibration.json

    [train]
    T_g = 0.1
    T_pi = 8.0
    n_pulses = 5

    [pressures]
    dye = 100
    gate_on = 180
    gate_off = 60

    [sweep]
    variable = T_g
    start = 0.08
    stop = 0.2
    step = 0.01

    [detector]
    min_prominence = 0.2
    isi_threshold = 0.5

    [calibration]
    targets = 0.09:3.28, 0.12:4.07, 0.15:4.7

In ``[sweep]``, ``count = 10`` replaces ``step`` to get evenly spaced
values including both ends. Relative paths are resolved against the
directory of the config file.
"""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field, fields, replace
from functools import partial
from pathlib import Path

from .errors import ParseError
from .experiments import DetectorConfig, TrainSettings, sweep_values
from .gating import PressureLevels

_bad_file = partial(ParseError, module="config")

MEASURED_WIDTHS = ((0.09, 3.28), (0.12, 4.07), (0.15, 4.7))

# the other train parameter stays at its [train] value (T_pi = 8 s, T_g = 100 ms)
SWEEP_DEFAULTS = {
    "T_g": {"start": 0.08, "stop": 0.2, "step": 0.01},
    "T_pi": {"start": 3.6, "stop": 20.0, "step": 0.4},
}


def count_values(start: float, stop: float, count: int) -> tuple[float, ...]:
    """``count`` evenly spaced values including both ends (80-200 ms in 10 values, say)."""
    if count < 2:
        raise _bad_file(f"[sweep] count must be >= 2, got {count}")
    step = (stop - start) / (count - 1)
    return tuple(round(start + k * step, 9) for k in range(count))


@dataclass(frozen=True)
class SweepSpec:
    variable: str = "T_g"
    values: tuple[float, ...] = ()

    def resolved(self) -> tuple[float, ...]:
        if self.values:
            return self.values
        d = SWEEP_DEFAULTS[self.variable]
        return tuple(sweep_values(d["start"], d["stop"], d["step"]))


@dataclass(frozen=True)
class ModelOverrides:
    tau_m: float | None = None
    dispersion_scale: float | None = None
    readout_gain: float | None = None
    solver: str = "analytic"


@dataclass(frozen=True)
class RunConfig:
    chip: Path | None = None
    points: tuple[str, ...] = ("p1", "p2", "p3")
    out: Path = Path("out")
    calibration: Path | None = None
    train: TrainSettings = field(default_factory=TrainSettings)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    model: ModelOverrides = field(default_factory=ModelOverrides)
    targets: tuple[tuple[float, float], ...] = MEASURED_WIDTHS
    calibration_pulses: int = 1

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("chip", "out", "calibration"):
            d[key] = None if d[key] is None else str(d[key])
        return d


def _floats(text: str, where: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())
    except ValueError:
        raise _bad_file(f"{where}: expected comma-separated numbers, got {text!r}") from None


def _number(section, key, cast=float, source=None):
    raw = section[key]
    try:
        return cast(raw)
    except ValueError:
        raise _bad_file(f"[{section.name}] {key} = {raw!r} is not a number", path=source) from None


def _targets(text: str, source) -> tuple[tuple[float, float], ...]:
    out = []
    for item in text.split(","):
        if not item.strip():
            continue
        try:
            tg, wp = item.split(":")
            out.append((float(tg), float(wp)))
        except ValueError:
            raise _bad_file(f"[calibration] bad target {item.strip()!r}; use T_g:w_p",
                            path=source) from None
    return tuple(out)


_KNOWN = {
    "run": {"chip", "points", "out", "calibration"},
    "train": {f.name for f in fields(TrainSettings)} - {"levels"},
    "pressures": {"dye", "gate_on", "gate_off"},
    "sweep": {"variable", "values", "start", "stop", "step", "count"},
    "detector": {f.name for f in fields(DetectorConfig)},
    "model": {f.name for f in fields(ModelOverrides)},
    "calibration": {"targets", "n_pulses"},
}


def loads_run_config(text: str, base_dir: Path = Path("."), source: str | None = None) -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str  # keys like T_g are case-sensitive
    try:
        cp.read_string(text, source=source or "<config>")
    except configparser.Error as exc:
        raise _bad_file(f"run config: {exc}", path=source) from None
    for name in cp.sections():
        if name not in _KNOWN:
            raise _bad_file(f"unknown section [{name}]", path=source)
        extra = set(cp[name]) - _KNOWN[name]
        if extra:
            raise _bad_file(f"unknown keys in [{name}]: {sorted(extra)}", path=source)

    def path_of(value):
        p = Path(value)
        return p if p.is_absolute() else base_dir / p

    cfg = RunConfig()
    run = cp["run"] if cp.has_section("run") else {}
    if "chip" in run:
        cfg = replace(cfg, chip=path_of(run["chip"]))
    if "calibration" in run:
        cfg = replace(cfg, calibration=path_of(run["calibration"]))
    if "out" in run:
        cfg = replace(cfg, out=path_of(run["out"]))
    if "points" in run:
        cfg = replace(cfg, points=tuple(p.strip() for p in run["points"].split(",") if p.strip()))

    sweep = cfg.sweep
    train_changes: dict = {}
    if cp.has_section("sweep"):
        s = cp["sweep"]
        variable = s.get("variable", "T_g").strip()
        if variable not in SWEEP_DEFAULTS:
            raise _bad_file(f"[sweep] variable must be T_g or T_pi, got {variable!r}", path=source)
        if "values" in s:
            values = _floats(s["values"], "[sweep] values")
        else:
            d = SWEEP_DEFAULTS[variable]
            start, stop = (_number(s, k, source=source) if k in s else d[k]
                           for k in ("start", "stop"))
            if "count" in s:
                if "step" in s:
                    raise _bad_file("[sweep] give either step or count, not both", path=source)
                values = count_values(start, stop, _number(s, "count", int, source))
            else:
                step = _number(s, "step", source=source) if "step" in s else d["step"]
                values = tuple(sweep_values(start, stop, step))
        if not values or any(v <= 0 for v in values):
            raise _bad_file("[sweep] values must be positive", path=source)
        sweep = SweepSpec(variable, values)
    cfg = replace(cfg, sweep=sweep)

    if cp.has_section("train"):
        t = cp["train"]
        for key in t:
            cast = int if key == "n_pulses" else float
            train_changes[key] = _number(t, key, cast, source)
    if cp.has_section("pressures"):
        p = cp["pressures"]
        levels = PressureLevels(**{k: _number(p, k, source=source) for k in p})
        train_changes["levels"] = levels
    cfg = replace(cfg, train=replace(cfg.train, **train_changes))

    if cp.has_section("detector"):
        d = cp["detector"]
        cfg = replace(cfg, detector=replace(
            cfg.detector, **{k: _number(d, k, source=source) for k in d}))
    if cp.has_section("model"):
        m = cp["model"]
        changes = {k: _number(m, k, source=source) for k in m if k != "solver"}
        if "solver" in m:
            changes["solver"] = m["solver"].strip()
        cfg = replace(cfg, model=replace(cfg.model, **changes))
    if cp.has_section("calibration"):
        c = cp["calibration"]
        if "targets" in c:
            cfg = replace(cfg, targets=_targets(c["targets"], source))
        if "n_pulses" in c:
            cfg = replace(cfg, calibration_pulses=_number(c, "n_pulses", int, source))
    return cfg


def load_run_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise _bad_file(f"cannot read run config: {exc.strerror}", path=str(path)) from None
    return loads_run_config(text, path.parent, str(path))
