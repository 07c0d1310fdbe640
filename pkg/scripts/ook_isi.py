"""On-off keyed bit streams through the calibrated channel: ISI against slot length.

For each slot length a random bit stream is encoded, simulated and read at
every sampling point. A bit counts as received when a pulse peak falls in
its slot, shifted by the peak delay of a lone pulse at that point.
"""

import argparse

import numpy as np

from gatetx.analysis import analyze, optical_readout
from gatetx.calibration import calibrate
from gatetx.chip import build_default_chip
from gatetx.config import MEASURED_WIDTHS
from gatetx.gating import PulseTrainSpec, SymbolSequence, encode_symbols
from gatetx.transport import simulate


def bit_errors(bits, peaks, slot, start, delay):
    received = np.zeros(len(bits), dtype=int)
    for t in peaks:
        k = int(np.floor((t - start - delay) / slot + 0.5))
        if 0 <= k < len(bits):
            received[k] = 1
    return int(np.sum(received != np.asarray(bits)))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--bits", type=int, default=32)
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--slots", default="4,6,8,12,16")
    parser.add_argument("--T-g", dest="T_g", type=float, default=0.1)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    bits = tuple(int(b) for b in rng.integers(0, 2, args.bits))
    chip = build_default_chip()
    model = calibrate(MEASURED_WIDTHS).model_params()
    spec = PulseTrainSpec(args.T_g, 1e9)
    print(f"{sum(bits)} ones in {len(bits)} bits, T_g = {args.T_g} s")
    lone = simulate(encode_symbols(SymbolSequence((1,), 1.0), spec), chip, model)
    delay = {pid: t.times[np.argmax(t.samples)] - spec.equilibration
             for pid, t in lone.traces.items()}
    print("slot_s  point  errors  mean_isi")
    for slot in (float(s) for s in args.slots.split(",")):
        sched = encode_symbols(SymbolSequence(bits, slot), spec)
        result = simulate(sched, chip, model)
        for pid, trace in result.traces.items():
            m = analyze(optical_readout(trace, model.readout_gain), min_separation=args.T_g)
            errors = bit_errors(bits, [p.peak_time for p in m.pulses], slot, spec.equilibration,
                                delay[pid])
            print(f"{slot:6.1f}  {pid:5s}  {errors:6d}  {m.mean_isi_ratio:8.3f}")


if __name__ == "__main__":
    main()
