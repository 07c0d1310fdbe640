import math

import pytest
from hypothesis import given, settings, strategies as st

from gatetx.errors import EmptySequence, InvalidSchedule, OverlappingPulses, ParseError
from gatetx.gating import (GatingSchedule, PressureLevels, PulseTrainSpec, Step, SymbolSequence,
                           build_train, dumps_schedule, encode_symbols, injection_profile,
                           load_schedule, loads_schedule, replay_states, save_schedule)
from gatetx.hydraulics import GateMode, gate_state

EQ = 5.0


def _relative(windows):
    """Window edges relative to the end of the equilibration hold, flattened."""
    return [v - EQ for w in windows for v in w]


def test_three_pulse_windows():
    sched = build_train(PulseTrainSpec(0.1, 8.0, n_pulses=3))
    windows = _relative(sched.off_windows())
    assert windows == pytest.approx([0.0, 0.1, 8.0, 8.1, 16.0, 16.1], abs=1e-12)
    assert sched.duration == pytest.approx(EQ + 16.0 + 0.1 + 30.0)


def test_single_pulse_has_two_transitions():
    sched = build_train(PulseTrainSpec(0.1, 8.0, n_pulses=1))
    assert [s.mode for s in sched.steps] == [GateMode.ON, GateMode.OFF, GateMode.ON]


def test_train_alternates_and_ends_closed():
    sched = build_train(PulseTrainSpec(0.15, 4.0, n_pulses=6))
    modes = [s.mode for s in sched.steps]
    assert all(a is not b for a, b in zip(modes, modes[1:]))
    assert modes[-1] is GateMode.ON


def test_replayed_states_match_labels(chip):
    sched = build_train(PulseTrainSpec(0.1, 8.0, n_pulses=4))
    assert replay_states(sched, chip) == [s.mode for s in sched.steps]


def test_symbols_101():
    spec = PulseTrainSpec(0.1, 8.0)
    sched = encode_symbols(SymbolSequence((1, 0, 1), 8.0), spec)
    assert _relative(sched.off_windows())[::2] == pytest.approx([0.0, 16.0])


def test_all_zero_bits_stay_closed():
    sched = encode_symbols(SymbolSequence((0, 0, 0, 0), 8.0), PulseTrainSpec(0.1, 8.0))
    assert sched.off_windows() == []
    assert [s.mode for s in sched.steps] == [GateMode.ON]


def test_all_ones_reproduce_periodic_train():
    spec = PulseTrainSpec(0.1, 8.0, n_pulses=5)
    assert encode_symbols(SymbolSequence((1,) * 5, spec.T_pi), spec) == build_train(spec)


def test_adjacent_ones_with_slot_equal_to_T_g_merge():
    spec = PulseTrainSpec(0.5, 8.0)
    sched = encode_symbols(SymbolSequence((1, 1, 0, 1), 0.5), spec)
    assert _relative(sched.off_windows()) == pytest.approx([0.0, 1.0, 1.5, 2.0])


def test_empty_sequence():
    with pytest.raises(EmptySequence):
        encode_symbols(SymbolSequence((), 8.0), PulseTrainSpec(0.1, 8.0))


def test_slot_shorter_than_gate_window():
    with pytest.raises(OverlappingPulses):
        encode_symbols(SymbolSequence((1, 1), 0.05), PulseTrainSpec(0.1, 8.0))


@pytest.mark.parametrize("T_g,T_pi", [(8.0, 8.0), (9.0, 8.0)])
def test_overlapping_pulses(T_g, T_pi):
    with pytest.raises(OverlappingPulses):
        PulseTrainSpec(T_g, T_pi)


@pytest.mark.parametrize("kwargs", [dict(T_g=0.0), dict(n_pulses=0), dict(tail=0.0)])
def test_invalid_specs(kwargs):
    base = dict(T_g=0.1, T_pi=8.0)
    base.update(kwargs)
    with pytest.raises(InvalidSchedule):
        PulseTrainSpec(**base)


def test_schedule_invariants_are_enforced():
    on = Step(0.0, 100.0, 180.0, GateMode.ON)
    off = Step(1.0, 100.0, 60.0, GateMode.OFF)
    with pytest.raises(InvalidSchedule):
        GatingSchedule((off,), 2.0)
    with pytest.raises(InvalidSchedule):
        GatingSchedule((on, off), 2.0)
    with pytest.raises(InvalidSchedule):
        GatingSchedule((on, Step(0.0, 100.0, 60.0, GateMode.OFF)), 2.0)


@settings(max_examples=200)
@given(T_g=st.floats(0.01, 1.0), gap=st.floats(0.001, 20.0), n=st.integers(1, 40))
def test_total_off_time_is_n_times_T_g(T_g, gap, n):
    sched = build_train(PulseTrainSpec(T_g, T_g + gap, n_pulses=n))
    windows = sched.off_windows()
    assert len(windows) == n
    assert sched.total_off_time() == pytest.approx(n * T_g, rel=1e-12)
    # every window has length T_g up to the rounding of start + T_g
    for s, e in windows:
        assert abs((e - s) - T_g) <= 4 * math.ulp(e)


@settings(max_examples=100)
@given(bits=st.lists(st.integers(0, 1), min_size=1, max_size=30),
       T_g=st.floats(0.01, 1.0), extra=st.floats(0.0, 5.0))
def test_csv_round_trip_is_identity(bits, T_g, extra):
    spec = PulseTrainSpec(T_g, 10.0, levels=PressureLevels(97.5, 181.25, 12.0))
    sched = encode_symbols(SymbolSequence(tuple(bits), T_g + extra), spec)
    text = dumps_schedule(sched)
    back = loads_schedule(text)
    assert back == sched
    assert dumps_schedule(back) == text


def test_back_to_back_slots_merge_despite_rounding():
    # 5 + 3 * T_g rounds below 5 + 2 * T_g + T_g for this T_g
    T_g = 0.2115289564204764
    sched = encode_symbols(SymbolSequence((0, 0, 0, 1, 1), T_g), PulseTrainSpec(T_g, 10.0))
    (start, end), = sched.off_windows()
    assert start == pytest.approx(5 + 3 * T_g) and end == pytest.approx(5 + 5 * T_g)


def test_csv_layout(tmp_path):
    sched = build_train(PulseTrainSpec(0.1, 8.0, n_pulses=1))
    path = tmp_path / "schedule.csv"
    save_schedule(sched, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t_s,inlet_dye_mbar,inlet_gate_mbar"
    assert lines[1:] == ["0.0,100.0,180.0", "5.0,100.0,60.0", "5.1,100.0,180.0",
                         "35.1,100.0,180.0"]
    assert load_schedule(path) == sched


@pytest.mark.parametrize("text,line", [
    ("t,dye,gate\n0,1,2\n", 1),
    ("t_s,inlet_dye_mbar,inlet_gate_mbar\n0,100,180\n1,abc,60\n", 3),
    ("t_s,inlet_dye_mbar,inlet_gate_mbar\n0,100,180\n", None),
])
def test_malformed_schedule_files(text, line):
    with pytest.raises(ParseError) as err:
        loads_schedule(text, source="x.csv")
    assert err.value.module == "gating"
    assert err.value.line == line


def test_all_on_profile_is_zero(chip):
    sched = encode_symbols(SymbolSequence((0, 0), 8.0), PulseTrainSpec(0.1, 8.0))
    prof = injection_profile(sched, chip)
    assert prof.boxcars() == []
    assert not prof([0.0, 5.05, 20.0]).any()


def test_profile_is_a_train_of_equal_boxcars(chip):
    spec = PulseTrainSpec(0.12, 6.0, n_pulses=4)
    prof = injection_profile(build_train(spec), chip)
    boxes = prof.boxcars()
    phi_off = gate_state(chip, chip.pressures(*spec.levels.assignment(GateMode.OFF))).dye_fraction
    assert len(boxes) == 4
    for k, (s, e, h) in enumerate(boxes):
        assert s == pytest.approx(EQ + 6.0 * k)
        assert e - s == pytest.approx(0.12, abs=1e-12)
        assert h == phi_off
    assert prof(EQ + 0.06) == phi_off
    assert prof(EQ + 0.2) == 0.0


def test_profile_rejects_assignment_that_does_not_open_the_gate(chip):
    spec = PulseTrainSpec(0.1, 8.0, levels=PressureLevels(100.0, 180.0, 170.0))
    with pytest.raises(InvalidSchedule):
        injection_profile(build_train(spec), chip)
