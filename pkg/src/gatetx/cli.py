"""Command-line front end: ``python -m gatetx <command> --config run.ini``.

Every file written gets a ``<name>.meta.json`` sidecar holding the complete
effective configuration. Nothing time- or host-dependent is recorded, so two
runs of the same configuration produce identical files.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import asdict, replace
from pathlib import Path

from . import __version__
from .analysis import (analyze, ingest_trace, write_interval_csv, write_pulse_csv,
                       write_trace_csv)
from .calibration import (CalibrationResult, calibrate, load_calibration, save_calibration)
from .chip import ChipConfig, load_chip_config
from .config import RunConfig, load_run_config
from .errors import GatetxError, NotConverged
from .experiments import FIT_HEADER, SUMMARY_HEADER, run_sweep, run_train, sweep_fits
from .gating import build_train, save_schedule
from .transport import ModelParams

log = logging.getLogger("gatetx")

DETERMINISM_NOTE = ("no random numbers are drawn; outputs depend only on the configuration "
                    "recorded here and are independent of --jobs")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if hasattr(obj, "value") and hasattr(obj, "name"):  # enums
        return obj.value
    return obj


class Context:
    """Effective configuration of one invocation."""

    def __init__(self, command: str, cfg: RunConfig, jobs: int):
        self.command = command
        self.cfg = cfg
        self.jobs = jobs
        self.chip_config = load_chip_config(cfg.chip) if cfg.chip else ChipConfig()
        self.calibration = load_calibration(cfg.calibration) if cfg.calibration else None
        self.out = Path(cfg.out)

    def model(self) -> ModelParams:
        base = ModelParams(solver=self.cfg.model.solver)
        if self.calibration is not None:
            base = self.calibration.model_params(base)
        overrides = {k: v for k, v in asdict(self.cfg.model).items()
                     if k != "solver" and v is not None}
        return replace(base, **overrides)

    def metadata(self, filename: str, extra: dict | None = None) -> dict:
        meta = {
            "command": self.command,
            "file": filename,
            "package_version": __version__,
            "run_config": self.cfg.to_dict(),
            "chip_config": asdict(self.chip_config),
            "model": self.model().to_dict(),
            "calibration": None if self.calibration is None else self.calibration.to_dict(),
            "determinism": DETERMINISM_NOTE,
        }
        if extra:
            meta.update(extra)
        return _jsonable(meta)

    def emit(self, filename: str, write, extra: dict | None = None) -> Path:
        """Write ``filename`` in the output directory plus its metadata sidecar."""
        self.out.mkdir(parents=True, exist_ok=True)
        path = self.out / filename
        write(path)
        sidecar = self.out / f"{filename}.meta.json"
        sidecar.write_text(json.dumps(self.metadata(filename, extra), indent=2, sort_keys=True)
                           + "\n")
        log.info("wrote %s", path)
        return path


def _write_rows(header, rows):
    def write(path):
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])
    return write


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_simulate(ctx: Context) -> int:
    train = ctx.cfg.train
    model = ctx.model()
    runs, sim_meta = run_train(ctx.chip_config, train, model, ctx.cfg.points, ctx.cfg.detector)
    extra = {"simulation": sim_meta}
    ctx.emit("schedule.csv", lambda p: save_schedule(build_train(train.spec()), p), extra)
    for pid, run in runs.items():
        ctx.emit(f"trace_{pid}.csv", lambda p, r=run: write_trace_csv(p, r.trace), extra)
        ctx.emit(f"intensity_{pid}.csv",
                 lambda p, r=run: write_trace_csv(p, r.observed, "intensity"), extra)
        ctx.emit(f"pulses_{pid}.csv", lambda p, r=run: write_pulse_csv(p, r.metrics.pulses),
                 extra)
        ctx.emit(f"intervals_{pid}.csv", lambda p, r=run: write_interval_csv(p, r.metrics),
                 extra)
    return 0


def cmd_sweep(ctx: Context) -> int:
    spec = ctx.cfg.sweep
    values = spec.resolved()
    rows = run_sweep(spec.variable, values, ctx.chip_config, ctx.cfg.train, ctx.model(),
                     ctx.cfg.points, ctx.cfg.detector, jobs=ctx.jobs)
    fits = sweep_fits(rows)
    extra = {"sweep_values": list(values)}
    ctx.emit(f"sweep_{spec.variable}.csv", _write_rows(SUMMARY_HEADER, rows), extra)
    ctx.emit(f"fits_{spec.variable}.csv", _write_rows(FIT_HEADER, fits), extra)
    for f in fits:
        print(f"{f[1]}: {f[2]} slope={f[3]:.6g} intercept={f[4]:.6g} r2={f[5]:.6f}")
    return 0


def cmd_calibrate(ctx: Context) -> int:
    train = replace(ctx.cfg.train, n_pulses=ctx.cfg.calibration_pulses)
    base = ModelParams(solver=ctx.cfg.model.solver)
    status = 0
    try:
        result = calibrate(ctx.cfg.targets, ctx.chip_config, train, ctx.cfg.detector, base=base)
    except NotConverged as exc:
        result = exc.result
        print(f"gatetx: calibration: {exc}", file=sys.stderr)
        status = exc.exit_code
    ctx.calibration = None  # the sidecar describes the inputs, the file the result
    ctx.emit("calibration.json", lambda p: save_calibration(result, p),
             {"calibration_train": asdict(train)})
    print(_calibration_summary(result))
    return status


def _calibration_summary(result: CalibrationResult) -> str:
    lines = [f"tau_m = {result.tau_m:.6g} s, readout_gain = {result.readout_gain!r}, "
             f"objective = {result.objective:.6g}, converged = {result.converged}"]
    for (tg, wp), w in zip(result.targets, result.simulated_w_p):
        lines.append(f"  T_g = {tg:g} s: target {wp:g} s, simulated {w:.4g} s "
                     f"({100 * (w - wp) / wp:+.2f} %)")
    return "\n".join(lines)


def cmd_analyze(ctx: Context, files) -> int:
    det = ctx.cfg.detector
    sep = ctx.cfg.train.T_g if det.min_separation is None else det.min_separation
    status = 0
    for name in files:
        try:
            trace = ingest_trace(name)
            metrics = analyze(trace, det.min_prominence, sep, det.isi_threshold)
        except GatetxError as exc:
            print(f"gatetx: {exc.module}: {exc}", file=sys.stderr)
            status = max(status, exc.exit_code)
            continue
        stem = Path(name).stem
        extra = {"input": str(name), "min_separation_s": sep, "dt_s": trace.dt}
        ctx.emit(f"pulses_{stem}.csv", lambda p: write_pulse_csv(p, metrics.pulses), extra)
        ctx.emit(f"intervals_{stem}.csv", lambda p: write_interval_csv(p, metrics), extra)
    return status


def cmd_export_schedule(ctx: Context) -> int:
    ctx.emit("schedule.csv", lambda p: save_schedule(build_train(ctx.cfg.train.spec()), p))
    return 0


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="run configuration (INI)")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--points", help="comma-separated sampling points, e.g. p1,p2,p3")
    common.add_argument("--calibration", type=Path, help="calibration file from `calibrate`")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="gatetx", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="simulate one pulse train")
    sub.add_parser("sweep", parents=[common], help="sweep T_g or T_pi")
    sub.add_parser("calibrate", parents=[common], help="fit tau_m and readout gain to targets")
    p = sub.add_parser("analyze", parents=[common], help="measure pulses in t_s,intensity files")
    p.add_argument("traces", nargs="+", help="trace CSV files")
    sub.add_parser("export-schedule", parents=[common], help="write the controller schedule CSV")
    return parser


def _effective_config(args) -> RunConfig:
    cfg = load_run_config(args.config) if args.config else RunConfig()
    if args.out is not None:
        cfg = replace(cfg, out=args.out)
    if args.points:
        cfg = replace(cfg, points=tuple(p.strip() for p in args.points.split(",") if p.strip()))
    if args.calibration is not None:
        cfg = replace(cfg, calibration=args.calibration)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    if args.jobs < 1:
        print("gatetx: cli: --jobs must be >= 1", file=sys.stderr)
        return 2
    try:
        ctx = Context(args.command, _effective_config(args), args.jobs)
        if args.command == "simulate":
            return cmd_simulate(ctx)
        if args.command == "sweep":
            return cmd_sweep(ctx)
        if args.command == "calibrate":
            return cmd_calibrate(ctx)
        if args.command == "analyze":
            return cmd_analyze(ctx, args.traces)
        return cmd_export_schedule(ctx)
    except GatetxError as exc:
        print(f"gatetx: {exc.module}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
