import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ionspin import circuit as C
from ionspin.compiler import (
    IS_SI_IS, SI_IS_SI, CompileError, CompileOptions, FeasibilityError, ParityError, PulseCompiler,
    build_layout, compile_circuit, zyz_angles,
)
from ionspin.ion import SystemLayout, ca43_defaults
from ionspin.quantum import SpinSpec, angular_momentum_ops, mat_exp_hermitian, process_fidelity, random_unitary
from ionspin.schedule import ALL, Pulse, Schedule, metadata_for
from ionspin.simulator import render_ideal
from fractions import Fraction

CA = ca43_defaults()
MHZ = 2 * math.pi * 1e6


def trap(n=2, b=450.0):
    from ionspin.trap import TrapParams

    return TrapParams(MHZ, n, CA, b)


LAY1 = SystemLayout(CA, 1, 1.0, 0.0, (0.0,))
LAY2 = build_layout(trap(2))
LAY3 = build_layout(trap(3))


def perm_oracle(n_slots, fn):
    """Permutation matrix of a classical map on qubit bit strings (0 = up)."""
    d = 2**n_slots
    u = np.zeros((d, d))
    for bits in itertools.product((0, 1), repeat=n_slots):
        out = fn(list(bits))
        u[int("".join(map(str, out)), 2), int("".join(map(str, bits)), 2)] = 1
    return u


def render(items, layout):
    return render_ideal(Schedule(tuple(items), metadata_for(layout)))


def fid(a, b):
    return process_fidelity(a, b)


def cnot_oracle(n_slots, control, target):
    def fn(b):
        if b[control] == 0:
            b[target] ^= 1
        return b

    return perm_oracle(n_slots, fn)


def test_cnot_si_and_is_fragments():
    comp = PulseCompiler(LAY1)
    u_si = render(comp.cnot_si(0), LAY1)
    u_is = render(comp.cnot_is(0), LAY1)
    assert fid(cnot_oracle(2, 0, 1), u_si) > 1 - 1e-12
    assert fid(cnot_oracle(2, 1, 0), u_is) > 1 - 1e-12
    # |S=+1/2, I=+7/2> <-> |S=+1/2, I=-7/2>, m_S = -1/2 states untouched
    assert abs(u_si[1, 0]) == pytest.approx(1)
    assert abs(u_si[2, 2]) == pytest.approx(1) and abs(u_si[3, 3]) == pytest.approx(1)
    frag = comp.cnot_si(0, phase=0.0)
    sq = render(frag + frag, LAY1)
    assert fid(np.eye(4), sq) > 1 - 1e-12


@pytest.mark.parametrize("order", [SI_IS_SI, IS_SI_IS])
def test_swap_orderings(order):
    comp = PulseCompiler(LAY1, CompileOptions(swap_order=order))
    u = render(comp.swap_is(0), LAY1)
    assert fid(perm_oracle(2, lambda b: [b[1], b[0]]), u) > 1 - 1e-10
    assert fid(np.eye(4), render(comp.swap_is(0) + comp.swap_is(0), LAY1)) > 1 - 1e-10


def test_nuclear_pi_conjugation():
    ops = angular_momentum_ops(SpinSpec("I", Fraction(7, 2)))
    p = mat_exp_hermitian(ops.x, math.pi)
    assert np.max(np.abs(p @ ops.z @ p.conj().T + ops.z)) < 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_u_nuclear_random(seed):
    u = random_unitary(2, np.random.default_rng(seed))
    comp = PulseCompiler(LAY1)
    got = render(comp.u_nuclear(0, u), LAY1)
    assert fid(np.kron(np.eye(2), u), got) >= 1 - 1e-9


def test_u_nuclear_special_cases():
    comp = PulseCompiler(LAY1)
    assert fid(np.eye(4), render(comp.u_nuclear(0, np.eye(2)), LAY1)) > 1 - 1e-10
    x_oracle = perm_oracle(2, lambda b: [b[0], 1 - b[1]])
    assert fid(x_oracle, render(comp.u_nuclear(0, C.PAULI_X), LAY1)) > 1 - 1e-10


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_zyz_reconstructs(seed):
    u = random_unitary(2, np.random.default_rng(seed))
    a, b, c = zyz_angles(u)
    rz = lambda t: np.diag([np.exp(-0.5j * t), np.exp(0.5j * t)])
    ry = np.array([[math.cos(b / 2), -math.sin(b / 2)], [math.sin(b / 2), math.cos(b / 2)]])
    assert fid(u, rz(a) @ ry @ rz(c)) > 1 - 1e-12


@pytest.mark.parametrize("method", ["two_pulse_delay", "selective_line"])
def test_electron_cnot_methods(method):
    comp = PulseCompiler(LAY2, CompileOptions(cnot_method=method))
    u = render(comp.cnot_electron_pair(0, 1), LAY2)
    assert fid(cnot_oracle(4, 0, 2), u) >= 1 - 1e-9
    u = render(comp.cnot_electron_pair(1, 0), LAY2)
    assert fid(cnot_oracle(4, 2, 0), u) >= 1 - 1e-9


def test_negative_coupling_cnot():
    lay = SystemLayout(CA, 2, 1.0, 450.0, LAY2.positions, -LAY2.j_matrix)
    comp = PulseCompiler(lay)
    assert fid(cnot_oracle(4, 0, 2), render(comp.cnot_electron_pair(0, 1), lay)) >= 1 - 1e-9


def test_core_delay_duration():
    comp = PulseCompiler(LAY2)
    delays = [it.duration for it in comp.cnot_electron_pair(0, 1) if not isinstance(it, Pulse)]
    assert sum(delays) == pytest.approx(math.pi / LAY2.j_matrix[0, 1])
    assert sum(delays) == pytest.approx(0.97e-3, rel=0.01)


def test_uncoupled_pair_rejected():
    lay = SystemLayout(CA, 2, 1.0, 450.0, LAY2.positions, np.zeros((2, 2)))
    with pytest.raises(CompileError):
        PulseCompiler(lay).cnot_electron_pair(0, 1)


def _zz(n_slots, a, b, theta):
    z = np.diagonal(C.kron_slots(n_slots, {a: C.PAULI_Z / 2})).real * np.diagonal(C.kron_slots(n_slots, {b: C.PAULI_Z / 2})).real
    return np.diag(np.exp(-1j * theta * z))


def test_refocus_block_passive_couplings():
    rng = np.random.default_rng(11)
    j01 = 2.0e3
    tau = 0.1e-3
    outs = []
    for _ in range(10):
        j02, j12 = rng.uniform(-3e3, 3e3, size=2)
        j = np.array([[0, j01, j02], [j01, 0, j12], [j02, j12, 0]])
        lay = SystemLayout(CA, 3, 1.0, 450.0, LAY3.positions, j)
        comp = PulseCompiler(lay)
        u = render(comp.refocus_block((0, 1), (2,), tau), lay)
        theta = -2 * tau * j01
        assert fid(_zz(6, 0, 2, theta), u) >= 1 - 1e-10
        outs.append(u)
    assert all(np.array_equal(outs[0], o) for o in outs[1:])


def test_refocus_cancels_zeeman_and_trivial_case():
    comp = PulseCompiler(LAY3)
    items = comp.refocus_block((0, 1), (2,), 0.2e-3)
    sched = Schedule(tuple(items), metadata_for(LAY3))
    base = render_ideal(sched)
    off = render_ideal(sched, offsets_s=[3e4, -2e4, 0.0])
    assert fid(base, off) > 1 - 1e-10
    lay = SystemLayout(CA, 3, 1.0, 450.0, LAY3.positions, np.zeros((3, 3)))
    assert fid(np.eye(64), render(PulseCompiler(lay).refocus_block((0, 1), (2,), 1e-4), lay)) > 1 - 1e-12


def _rf_counts(sched, n):
    counts = [0] * n
    for it in sched.items:
        if isinstance(it, Pulse) and it.spec.channel == "RF":
            for k in (range(n) if it.spec.target == ALL else [it.spec.target]):
                counts[k] += 1
    return counts


def test_compile_cnot_nn_structure():
    s = compile_circuit(C.parse_text("CNOT 0 1"), trap(2))
    counts = _rf_counts(s, 2)
    assert all(c % 2 == 0 for c in counts)
    assert s.metadata["rf_parity"] == {"0": 4, "1": 4}
    # four SWAPs: one CNOT_IS pulse for each swap on the m_I = +7/2 line
    cnot_is = [it for it in s.items if isinstance(it, Pulse) and it.spec.channel == "MW" and it.spec.phase == 0.0]
    assert len(cnot_is) == 4
    assert fid(C.target_unitary(C.parse_text("CNOT 0 1"), 2), render_ideal(s)) >= 1 - 1e-9


def test_three_ion_nuclear_gate_parity():
    s = compile_circuit([C.Gate("UNuclear", (0,), unitary=random_unitary(2, np.random.default_rng(2)))], LAY3)
    counts = _rf_counts(s, 3)
    assert counts[1] % 2 == 0 and counts[2] % 2 == 0


def test_empty_circuit():
    s = compile_circuit([], LAY2)
    assert len(s) == 0 and s.duration == 0


def test_lone_cnot_si_parity_error():
    with pytest.raises(ParityError):
        compile_circuit(C.parse_text("CNOTSI 0"), LAY2)
    s = compile_circuit(C.parse_text("CNOTSI 0"), LAY2, CompileOptions(nonselective_rf=False))
    assert len(s) > 0


def test_feasibility_guard():
    with pytest.raises(FeasibilityError):
        compile_circuit(C.parse_text("X 0"), trap(2, b=340.0 * 1.6))
    s = compile_circuit(C.parse_text("X 0"), trap(2, b=340.0 * 1.6), CompileOptions(force=True))
    assert len(s) > 0


def test_rabi_clipped_to_addressing_limit():
    s = compile_circuit(C.parse_text("CNOTIS 0"), trap(2), CompileOptions(rabi_mw=50e6))
    sep = 28.02e9 * 450 * 5.4599e-6
    assert s.metadata["options"]["rabi_mw"] == pytest.approx(sep / 10, rel=1e-3)


def test_bad_options():
    with pytest.raises(ValueError):
        CompileOptions(swap_order="bogus")
    with pytest.raises(ValueError):
        CompileOptions(rabi_rf=0)


gate_st = st.one_of(
    st.tuples(st.sampled_from(["X", "Z", "SwapIS", "CnotIS"]), st.integers(0, 2)).map(lambda t: C.Gate(t[0], (t[1],))),
    st.tuples(st.integers(0, 2), st.integers(0, 2)).filter(lambda t: t[0] != t[1]).map(lambda t: C.Gate("CnotNN", t)),
    st.tuples(st.integers(0, 2), st.floats(0, 6.2), st.floats(0.1, 6.2)).map(lambda t: C.Gate("RotS", (t[0],), axis=t[1], angle=t[2])),
)


@settings(max_examples=15, deadline=None)
@given(st.lists(gate_st, min_size=1, max_size=4), st.sampled_from([2, 3]))
def test_compiled_schedules_render_target(gates, n):
    gates = [g for g in gates if max(g.ions) < n]
    lay = LAY2 if n == 2 else LAY3
    s = compile_circuit(gates, lay)
    assert fid(C.target_unitary(gates, n), render_ideal(s)) >= 1 - 1e-9
    assert all(c % 2 == 0 for c in s.metadata["rf_parity"].values())
