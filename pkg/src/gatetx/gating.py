"""Gating pressure schedules.

A schedule is a list of ideal pressure steps. Injection (gating OFF)
windows of length ``T_g`` start every ``T_pi`` seconds after an
equilibration hold in the gating ON state; the train always ends closed.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path

import numpy as np

from .chip import ChipNetwork
from .errors import EmptySequence, InvalidSchedule, OverlappingPulses, ParseError
from .hydraulics import GateMode, gate_state

_bad_file = partial(ParseError, module="gating")

SCHEDULE_HEADER = ("t_s", "inlet_dye_mbar", "inlet_gate_mbar")


@dataclass(frozen=True)
class PressureLevels:
    """Inlet pressures (mbar) for the two gate states; the dye side is fixed."""

    dye: float = 100.0
    gate_on: float = 180.0
    gate_off: float = 60.0

    def assignment(self, mode: GateMode) -> tuple[float, float]:
        return (self.dye, self.gate_on if mode is GateMode.ON else self.gate_off)


@dataclass(frozen=True)
class PulseTrainSpec:
    T_g: float
    T_pi: float
    n_pulses: int = 5
    levels: PressureLevels = field(default_factory=PressureLevels)
    equilibration: float = 5.0
    tail: float = 30.0

    def __post_init__(self):
        if not self.T_g > 0:
            raise InvalidSchedule(f"T_g must be > 0, got {self.T_g}")
        if self.T_g >= self.T_pi:
            raise OverlappingPulses(f"T_g = {self.T_g} s must be shorter than T_pi = {self.T_pi} s")
        if self.n_pulses < 1:
            raise InvalidSchedule(f"n_pulses must be >= 1, got {self.n_pulses}")
        if not (self.equilibration > 0 and self.tail > 0):
            raise InvalidSchedule("equilibration and tail holds must be > 0")


@dataclass(frozen=True)
class SymbolSequence:
    bits: tuple[int, ...]
    slot: float

    def __post_init__(self):
        if any(b not in (0, 1) for b in self.bits):
            raise InvalidSchedule("bits must be 0 or 1")


@dataclass(frozen=True)
class Step:
    t: float
    dye: float
    gate: float
    mode: GateMode


@dataclass(frozen=True)
class GatingSchedule:
    steps: tuple[Step, ...]
    duration: float

    def __post_init__(self):
        if not self.steps or self.steps[0].t != 0.0 or self.steps[0].mode is not GateMode.ON:
            raise InvalidSchedule("schedule must start at t = 0 in the gating ON state")
        times = [s.t for s in self.steps]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise InvalidSchedule("step times must be strictly increasing")
        if self.steps[-1].mode is not GateMode.ON:
            raise InvalidSchedule("schedule must end in the gating ON state")
        if self.duration <= times[-1]:
            raise InvalidSchedule("duration must extend past the last step")

    def off_windows(self) -> list[tuple[float, float]]:
        ends = [s.t for s in self.steps[1:]] + [self.duration]
        return [(s.t, e) for s, e in zip(self.steps, ends) if s.mode is GateMode.OFF]

    def total_off_time(self) -> float:
        return math.fsum(e - s for s, e in self.off_windows())


def _schedule_from_windows(starts, T_g, levels: PressureLevels, duration) -> GatingSchedule:
    on = levels.assignment(GateMode.ON)
    off = levels.assignment(GateMode.OFF)
    raw = [Step(0.0, *on, GateMode.ON)]
    for start in starts:
        raw.append(Step(start, *off, GateMode.OFF))
        raw.append(Step(start + T_g, *on, GateMode.ON))
    return GatingSchedule(tuple(_merge(raw)), duration)


def _merge(steps):
    """Drop zero-length intervals and repeated states (touching windows merge)."""
    out = []
    for s in steps:
        # start + T_g can round past the next start when windows touch
        if out and s.t <= out[-1].t:
            out.pop()
        if out and s.mode is out[-1].mode:
            continue
        out.append(s)
    return out


def build_train(spec: PulseTrainSpec) -> GatingSchedule:
    """Periodic train: OFF windows [eq + k T_pi, eq + k T_pi + T_g], k < n."""
    starts = [spec.equilibration + k * spec.T_pi for k in range(spec.n_pulses)]
    duration = spec.equilibration + (spec.n_pulses - 1) * spec.T_pi + spec.T_g + spec.tail
    return _schedule_from_windows(starts, spec.T_g, spec.levels, duration)


def encode_symbols(seq: SymbolSequence, spec: PulseTrainSpec) -> GatingSchedule:
    """On-off keying: bit 1 in slot k opens the gate for T_g at eq + k * slot."""
    if not seq.bits:
        raise EmptySequence("symbol sequence is empty")
    if seq.slot < spec.T_g:
        raise OverlappingPulses(f"slot {seq.slot} s is shorter than T_g = {spec.T_g} s")
    starts = [spec.equilibration + k * seq.slot for k, b in enumerate(seq.bits) if b]
    duration = spec.equilibration + (len(seq.bits) - 1) * seq.slot + spec.T_g + spec.tail
    return _schedule_from_windows(starts, spec.T_g, spec.levels, duration)


@dataclass(frozen=True)
class InjectionProfile:
    """Piecewise-constant dye fraction phi(t) at the junction."""

    times: tuple[float, ...]  # step start times
    values: tuple[float, ...]
    duration: float

    def boxcars(self) -> list[tuple[float, float, float]]:
        """(start, end, height) for every interval with phi > 0."""
        ends = list(self.times[1:]) + [self.duration]
        return [(t, e, v) for t, e, v in zip(self.times, ends, self.values) if v > 0]

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(np.asarray(self.times), t, side="right") - 1
        vals = np.asarray(self.values)[np.clip(idx, 0, None)]
        return np.where((idx >= 0) & (t < self.duration), vals, 0.0)


def injection_profile(schedule: GatingSchedule, network: ChipNetwork,
                      threshold: float = 0.0) -> InjectionProfile:
    """Dye fraction of every step; each assignment must realise its intended gate state."""
    cache = {}
    values = []
    for step in schedule.steps:
        key = (step.dye, step.gate)
        if key not in cache:
            cache[key] = gate_state(network, network.pressures(*key), threshold)
        state = cache[key]
        if state.state is not step.mode:
            raise InvalidSchedule(
                f"pressures dye={step.dye} mbar, gate={step.gate} mbar give {state.state.value} "
                f"(phi = {state.dye_fraction:.3g}) but the schedule expects {step.mode.value}")
        values.append(state.dye_fraction)
    return InjectionProfile(tuple(s.t for s in schedule.steps), tuple(values), schedule.duration)


def replay_states(schedule: GatingSchedule, network: ChipNetwork,
                  threshold: float = 0.0) -> list[GateMode]:
    """Gate state of every step as classified by the hydraulics."""
    return [gate_state(network, network.pressures(s.dye, s.gate), threshold).state
            for s in schedule.steps]


# --------------------------------------------------------------------------
# controller command file
# --------------------------------------------------------------------------

def dumps_schedule(schedule: GatingSchedule) -> str:
    """CSV, one row per step plus a closing row at t = duration."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SCHEDULE_HEADER)
    for s in schedule.steps:
        writer.writerow([repr(s.t), repr(s.dye), repr(s.gate)])
    last = schedule.steps[-1]
    writer.writerow([repr(schedule.duration), repr(last.dye), repr(last.gate)])
    return buf.getvalue()


def loads_schedule(text: str, source: str | None = None) -> GatingSchedule:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(c.strip() for c in rows[0]) != SCHEDULE_HEADER:
        raise _bad_file(f"expected header {','.join(SCHEDULE_HEADER)}", line=1, path=source)
    parsed = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        try:
            t, dye, gate = (float(c) for c in row)
        except ValueError:
            raise _bad_file(f"malformed row {row!r}", line=lineno, path=source) from None
        parsed.append((t, dye, gate))
    if len(parsed) < 2:
        raise _bad_file("schedule needs at least one step and the closing row", path=source)
    *body, (duration, _, _) = parsed
    on_key = body[0][1:]
    steps = tuple(Step(t, d, g, GateMode.ON if (d, g) == on_key else GateMode.OFF)
                  for t, d, g in body)
    return GatingSchedule(steps, duration)


def save_schedule(schedule: GatingSchedule, path) -> None:
    Path(path).write_text(dumps_schedule(schedule))


def load_schedule(path) -> GatingSchedule:
    return loads_schedule(Path(path).read_text(), source=str(path))
