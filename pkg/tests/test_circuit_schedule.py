import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ionspin import circuit as C
from ionspin.ion import SystemLayout, ca43_defaults
from ionspin.schedule import ALL, Delay, FrameZ, PulseSpec, Schedule, metadata_for, pulse, layout_from_metadata


def test_parse_text_and_roundtrip():
    text = "# demo\nCNOT 0 1\nSWAPIS 1\nX 0\nZ 1\nROTS 0 0.25 1.5\nCNOTSI 0\nCNOTIS 1\n"
    gates = C.parse_text(text)
    assert [g.kind for g in gates] == ["CnotNN", "SwapIS", "X", "Z", "RotS", "CnotSI", "CnotIS"]
    assert C.parse_text(C.to_text(gates)) == gates
    assert C.parse_json(C.to_json(gates)) == gates


def test_unitary_gate_roundtrip():
    u = np.array([[0, 1j], [1j, 0]])
    g = C.Gate("UNuclear", (0,), unitary=u)
    back = C.parse_json(C.to_json([g]))[0]
    np.testing.assert_allclose(back.unitary, u)


@pytest.mark.parametrize("line", ["FOO 1", "CNOT 0", "CNOT 0 0", "X a", "ROTS 0 1"])
def test_parse_errors(line):
    with pytest.raises(C.CircuitError):
        gates = C.parse_text(line)
        for g in gates:
            g.check(2)


def test_gate_check_range():
    with pytest.raises(C.CircuitError):
        C.Gate("X", (3,)).check(2)
    with pytest.raises(C.CircuitError):
        C.Gate("UNuclear", (0,), unitary=np.array([[1, 1], [0, 1]])).check(1)


def test_swap_target_is_swap():
    u = C.gate_unitary(C.Gate("SwapIS", (0,)), 1)
    # |a>_S |b>_I -> |b>_S |a>_I
    for a in range(2):
        for b in range(2):
            col = np.zeros(4)
            col[2 * a + b] = 1
            assert np.argmax(np.abs(u @ col)) == 2 * b + a


def test_pulse_spec_validation():
    with pytest.raises(ValueError):
        PulseSpec("MW", ALL, 3.5, math.pi, 0.0, 1e6, 25e9)
    with pytest.raises(ValueError):
        PulseSpec("RF", ALL, 0.5, math.pi / 2, 0.0, 1e5, -406e6)
    with pytest.raises(ValueError):
        PulseSpec("MW", 0, 3.5, 0.0, 0.0, 1e6, 25e9)
    p = pulse(PulseSpec("MW", 0, 3.5, math.pi, 0.0, 1e6, 25e9))
    assert p.duration == pytest.approx(0.5e-6)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.sampled_from(["pulse", "delay", "frame"]), max_size=12), st.floats(1e-9, 1e-3))
def test_schedule_json_roundtrip(kinds, t):
    items = []
    for k in kinds:
        if k == "pulse":
            items.append(pulse(PulseSpec("RF", ALL, 0.5, math.pi, math.pi, 3e5, -406.05e6)))
        elif k == "delay":
            items.append(Delay(t))
        else:
            items.append(FrameZ(0, "I", -t * 1e3))
    lay = SystemLayout(ca43_defaults(), 1, 1.0, 0.0, (0.0,))
    s = Schedule(tuple(items), metadata_for(lay))
    back = Schedule.from_json(s.to_json())
    assert back == s
    assert back.to_json() == s.to_json()
    assert s.duration == pytest.approx(sum(it.duration for it in items))


def test_metadata_layout_roundtrip():
    lay = SystemLayout(ca43_defaults(), 2, 1.0, 450.0, (-1e-6, 1e-6), np.array([[0, 5.0], [5.0, 0]]))
    back = layout_from_metadata(metadata_for(lay))
    assert back.n_ions == 2 and back.positions == lay.positions
    np.testing.assert_array_equal(back.j_matrix, lay.j_matrix)


def test_bad_schema_rejected():
    with pytest.raises(ValueError):
        Schedule.from_json('{"schema": "other/9", "items": [], "metadata": {}}')
