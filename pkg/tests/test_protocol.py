import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cntmarble.device import DeviceKind, DeviceParams, default_params
from cntmarble.protocol import (PhaseSpec, ProtocolSpec, SweepSpec, Trace, concat_protocols,
                                loop_area, paper_protocol, read_trace_csv, run_protocol,
                                run_sweep, voltage_at, write_trace_csv)

CNT = DeviceKind.CNT_LM


def test_paper_protocol_shape():
    p = paper_protocol()
    assert len(p.phases) == 4
    assert [ph.amplitude for ph in p.phases] == [3.0, -3.0, 3.0, -3.0]
    for ph in p.phases:
        assert (ph.pulse_count, ph.ramp_time, ph.off_time) == (375, 0.5, 1.0)
        assert ph.cycle == 2.0
        assert ph.duration == 750.0
    assert p.duration == 3000.0
    assert p.phase_starts() == (0.0, 750.0, 1500.0, 2250.0)
    assert p.n_samples == 1500


def test_spec_validation():
    for bad in [dict(amplitude=3.0, pulse_count=0), dict(amplitude=3.0, pulse_count=2, ramp_time=0.0),
                dict(amplitude=3.0, pulse_count=2, off_time=-1.0),
                dict(amplitude=float("nan"), pulse_count=2)]:
        with pytest.raises(ValueError):
            PhaseSpec(**bad)
    for bad in [dict(v_max=0.0), dict(steps_per_leg=0), dict(dwell=0.0)]:
        with pytest.raises(ValueError):
            SweepSpec(**bad)


def test_voltage_examples():
    p = paper_protocol()
    assert voltage_at(p, 0.0) == 0.0
    assert voltage_at(p, 0.5) == 3.0
    assert voltage_at(p, 0.25) == pytest.approx(1.5)
    assert voltage_at(p, 1.5) == 0.0
    assert voltage_at(p, 750.5) == -3.0
    with pytest.raises(ValueError):
        voltage_at(p, 3000.0)
    with pytest.raises(ValueError):
        voltage_at(p, -0.1)


def test_waveform_exactness():
    p = paper_protocol()
    for k, start in enumerate(p.phase_starts()):
        amp = p.phases[k].amplitude
        for j in (0, 1, 187, 374):
            assert abs(voltage_at(p, start + 2.0 * j + 0.5) - amp) <= 1e-12
            off = start + 2.0 * j + np.linspace(1.0, 2.0, 21)[:-1]
            assert all(voltage_at(p, t) == 0.0 for t in off)


def test_sample_count_and_phase_changes():
    tr = run_protocol(default_params(), CNT, paper_protocol(), 0.01)
    assert len(tr) == 1500
    assert int(np.count_nonzero(np.diff(tr.phase))) == 3
    assert np.all(np.diff(tr.t) > 0)
    assert np.all(np.abs(tr.i) <= default_params().i_limit)
    nz = tr.i != 0
    assert np.allclose(tr.r[nz], tr.v[nz] / tr.i[nz], rtol=1e-12)
    assert np.allclose(np.abs(tr.v), 3.0)


def test_empty_protocol():
    tr = run_protocol(default_params(), CNT, ProtocolSpec(()), 0.01)
    assert len(tr) == 0


def test_dt_must_divide():
    proto = ProtocolSpec((PhaseSpec(3.0, 2, 0.5, 1.0),))
    with pytest.raises(ValueError):
        run_protocol(default_params(), CNT, proto, 0.3)
    with pytest.raises(ValueError):
        run_protocol(default_params(), CNT, proto, 0.0)


def test_water_flat():
    tr = run_protocol(default_params(DeviceKind.WATER_LM), DeviceKind.WATER_LM,
                      paper_protocol(), 0.01)
    assert len(tr) == 1500
    assert np.all(tr.r == tr.r[0])


def test_default_cnt_profile():
    p = default_params()
    tr = run_protocol(p, CNT, paper_protocol(), 0.01)
    s1 = tr.r[tr.phase == 0]
    s2 = tr.r[tr.phase == 1]
    assert np.ptp(s1) == 0.0  # s1 stays on the high profile
    drop = s1.mean() / s2.min()
    assert 10.0 <= drop <= 100.0 * 1.0001


def test_free_liquid_drift_per_phase():
    p = default_params(DeviceKind.CNT_FREE_LIQUID)
    tr = run_protocol(p, DeviceKind.CNT_FREE_LIQUID, paper_protocol(), 0.01)
    means = [tr.r[tr.phase == k].mean() for k in range(4)]
    for k in range(4):
        assert means[k] == pytest.approx(p.contact_factor * p.r_high * (1 - p.drift_per_phase) ** k)


def test_time_translation_with_leading_rest_phase():
    p = default_params()
    base = paper_protocol()
    rest = PhaseSpec(0.0, 20, 0.5, 1.0)
    a = run_protocol(p, CNT, base, 0.01)
    b = run_protocol(p, CNT, concat_protocols([rest], base), 0.01)
    tail = b.phase >= 1
    assert np.array_equal(b.t[tail], a.t + rest.duration)
    for col in ("v", "i", "r", "pulse"):
        assert np.array_equal(getattr(b, col)[tail], getattr(a, col))
    assert np.array_equal(b.phase[tail], a.phase + 1)
    assert b.final_state == a.final_state


def test_sweep_pinch_and_closure():
    p = default_params()
    tr = run_sweep(p, CNT, SweepSpec(3.0, 60, 0.1), 0.01)
    assert len(tr) == 4 * 60 + 1
    assert tr.v[0] == 0.0 and tr.v[-1] == 0.0
    zero = np.abs(tr.v) < 1e-9
    assert np.all(np.abs(tr.i[zero]) < 1e-9)
    assert np.all(np.abs(tr.i) <= p.i_limit)
    assert loop_area(tr) > 0


def test_sweep_levels():
    lv = SweepSpec(3.0, 4, 0.1).levels()
    assert list(lv) == [0, 0.75, 1.5, 2.25, 3.0, 2.25, 1.5, 0.75, 0.0, -0.75, -1.5, -2.25,
                        -3.0, -2.25, -1.5, -0.75, 0.0]


def test_sweep_frequency_dependence_and_subthreshold():
    p = default_params()
    big = loop_area(run_sweep(p, CNT, SweepSpec(3.0, 60, 0.1), 0.01))
    fast = loop_area(run_sweep(p, CNT, SweepSpec(3.0, 60, 0.01), 0.01))
    small = loop_area(run_sweep(p, CNT, SweepSpec(0.05, 60, 0.1), 0.01))
    assert 0 < big
    assert fast < big
    assert small < 1e-3 * big


def test_loop_area_oracles():
    v = np.array([0.0, 1.0, 2.0, 1.0, 0.0, -1.0, -2.0, -1.0, 0.0])
    ohmic = Trace(np.arange(9.0), v, v / 100.0, np.full(9, 100.0), np.zeros(9), np.arange(9))
    assert loop_area(ohmic) == pytest.approx(0.0, abs=1e-15)
    # unit square traversed from the origin: (0,0) (1,0) (1,1) (0,1) back to V = 0
    sq_v = np.array([0.0, 1.0, 1.0, 0.0])
    sq_i = np.array([0.0, 0.0, 1.0, 1.0])
    sq = Trace(np.arange(4.0), sq_v, sq_i, np.ones(4), np.zeros(4), np.arange(4))
    assert loop_area(sq) == pytest.approx(1.0)
    open_path = Trace(np.arange(3.0), np.array([0.0, 1.0, 2.0]), np.zeros(3), np.ones(3),
                      np.zeros(3), np.arange(3))
    with pytest.raises(ValueError):
        loop_area(open_path)


def test_csv_round_trip(tmp_path):
    tr = run_protocol(default_params(), CNT, paper_protocol(), 0.01)
    path = tmp_path / "t.csv"
    write_trace_csv(tr, path)
    text = path.read_text()
    assert text.splitlines()[0] == "t_s,v_volt,i_amp,r_ohm,phase,pulse"
    back = read_trace_csv(path, paper_protocol())
    assert np.allclose(back.r, tr.r, rtol=1e-8)
    assert np.allclose(back.t, tr.t, rtol=1e-9)
    assert np.array_equal(back.phase, tr.phase)
    assert back.phase_starts == tr.phase_starts
    path2 = tmp_path / "u.csv"
    write_trace_csv(back, path2)
    assert path2.read_text() == text


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.floats(-1e6, 1e6), st.floats(-10, 10), st.floats(-1, 1),
                          st.floats(1e-3, 1e9), st.integers(0, 3), st.integers(0, 999)),
                min_size=1, max_size=30))
def test_csv_round_trip_property(tmp_path_factory, rows):
    cols = list(zip(*rows))
    tr = Trace(*[np.array(c) for c in cols])
    path = tmp_path_factory.mktemp("csv") / "p.csv"
    write_trace_csv(tr, path)
    back = read_trace_csv(path)
    for name in ("t", "v", "i", "r"):
        assert np.allclose(getattr(back, name), getattr(tr, name), rtol=5e-9, atol=0)
    assert np.array_equal(back.phase, tr.phase)
    assert np.array_equal(back.pulse, tr.pulse)


def test_csv_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_trace_csv(path)


def test_run_deterministic():
    p = default_params().replace(contact_factor=0.3)
    a = run_protocol(p, CNT, paper_protocol(), 0.01)
    b = run_protocol(p, CNT, paper_protocol(), 0.01)
    assert np.array_equal(a.r, b.r) and a.final_state == b.final_state


def test_contact_does_not_shorten_s2_onset():
    from cntmarble.stats import detect_onset
    onsets = []
    for c in (0.125, 0.2, 0.35, 0.6, 1.0, 1.25):
        tr = run_protocol(default_params().replace(contact_factor=c), CNT, paper_protocol(), 0.01)
        onsets.append(detect_onset(tr, 1))
    assert all(o is not None for o in onsets)
    assert all(b >= a for a, b in zip(onsets, onsets[1:]))
