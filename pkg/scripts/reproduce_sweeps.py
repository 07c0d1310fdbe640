"""Calibrate on the measured widths, then run both sweeps and print the fits.

    python scripts/reproduce_sweeps.py --out runs/reproduce --jobs 4

Everything goes through the command-line front end, so the output directory
holds the same files (and metadata sidecars) as running the commands by hand.
"""

import argparse
from pathlib import Path

from gatetx.cli import main


def run(out: Path, jobs: int) -> int:
    calibration = out / "calibration" / "calibration.json"
    steps = [
        ["calibrate", "--out", str(calibration.parent)],
        ["simulate", "--calibration", str(calibration), "--out", str(out / "simulate")],
    ]
    for variable in ("T_g", "T_pi"):
        cfg = out / f"sweep_{variable}.ini"
        cfg.parent.mkdir(parents=True, exist_ok=True)
        cfg.write_text(f"[sweep]\nvariable = {variable}\n")
        steps.append(["sweep", "--config", str(cfg), "--calibration", str(calibration),
                      "--out", str(out / f"sweep_{variable}"), "--jobs", str(jobs)])
    status = 0
    for argv in steps:
        print(f"$ gatetx {' '.join(argv)}")
        status = max(status, main(argv))
    return status


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", type=Path, default=Path("runs/reproduce"))
    parser.add_argument("--jobs", type=int, default=1)
    args = parser.parse_args()
    raise SystemExit(run(args.out, args.jobs))
