"""Lowering of nuclear-register circuits to MW/RF pulse schedules.

Every conditional pi pulse is followed by a zero-duration frame update
on its control qubit, which turns the bare rotation (a controlled
+-iX) into an exact CNOT. Electron rotations that must not depend on the
nuclear state are emitted as one pulse per nuclear line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import circuit as C
from .ion import SystemLayout, mw_line_frequency, rf_line_frequency, TWO_PI
from .schedule import ALL, BOTH, Delay, FrameZ, Pulse, PulseSpec, Schedule, metadata_for, pulse
from .trap import (
    KAPPA_DEFAULT, MARGIN_DEFAULT, TrapParams, chain, feasibility_report, FeasibilityReport,
)

SI_IS_SI = "SI-IS-SI"
IS_SI_IS = "IS-SI-IS"


class CompileError(RuntimeError):
    pass


class ParityError(CompileError):
    pass


class FeasibilityError(CompileError):
    def __init__(self, report: FeasibilityReport):
        super().__init__("; ".join(report.messages) or "feasibility check failed")
        self.report = report


@dataclass
class CompileOptions:
    rabi_mw: float = 1e6  # Hz
    rabi_rf: float = 300e3  # Hz
    nonselective_rf: bool = True
    swap_order: str = SI_IS_SI
    cnot_method: str = "two_pulse_delay"
    refocus: bool = True
    verify: bool = True
    force: bool = False
    rf_reference: str = "mean"
    rf_pairing: str = "same"
    margin: float = MARGIN_DEFAULT
    kappa: float = KAPPA_DEFAULT

    def __post_init__(self):
        choices = {
            "swap_order": (SI_IS_SI, IS_SI_IS),
            "cnot_method": ("two_pulse_delay", "selective_line"),
            "rf_reference": ("mean", "active"),
            "rf_pairing": ("same", "alternate"),
        }
        for name, allowed in choices.items():
            if getattr(self, name) not in allowed:
                raise ValueError(f"{name} must be one of {allowed}, got {getattr(self, name)!r}")
        if self.rabi_mw <= 0 or self.rabi_rf <= 0:
            raise ValueError("Rabi frequencies must be positive")


@dataclass
class ParityLedger:
    """Nonselective RF pi pulses seen by each ion."""

    counts: dict = field(default_factory=dict)

    def add(self, ions):
        for i in ions:
            self.counts[i] = self.counts.get(i, 0) + 1

    def odd(self, exclude=()):
        return sorted(i for i, c in self.counts.items() if c % 2 and i not in exclude)


def normalize_angle(a: float) -> float:
    """Map to (0, 2pi]; zero stays zero."""
    a = math.fmod(a, 2 * math.pi)
    if a < 0:
        a += 2 * math.pi
    return a


def zyz_angles(u: np.ndarray):
    """(a, b, c) with u = e^{i g} Rz(a) Ry(b) Rz(c)."""
    v = u / np.sqrt(np.linalg.det(u))
    b = 2 * math.atan2(abs(v[1, 0]), abs(v[0, 0]))
    if abs(v[0, 0]) < 1e-12:
        s, d = 0.0, 2 * np.angle(v[1, 0])
    elif abs(v[1, 0]) < 1e-12:
        s, d = 2 * np.angle(v[1, 1]), 0.0
    else:
        s, d = 2 * np.angle(v[1, 1]), 2 * np.angle(v[1, 0])
    # s = a + c, d = a - c
    return (s + d) / 2, b, (s - d) / 2


def _rz(a):
    return np.diag([np.exp(-0.5j * a), np.exp(0.5j * a)])


def _ry(b):
    return C.rotation(math.pi / 2, b)


def _control_correction(factor: complex, control_up: bool) -> float:
    """Frame angle that cancels ``factor`` on the active control state."""
    beta = -np.angle(factor)
    return -beta if control_up else beta


class PulseCompiler:
    """Fragment builder bound to one register layout."""

    def __init__(self, layout: SystemLayout, options: CompileOptions | None = None):
        self.layout = layout
        self.options = options or CompileOptions()
        self.spin_i = layout.species.nuclear_spin
        self.m_top = float(self.spin_i)
        self._rf_phase = 0.0

    # -- primitive pulses ---------------------------------------------------
    def mw(self, ion, m_i, angle, phase=0.0, spectator=None, rabi=None):
        freq = mw_line_frequency(self.layout, ion, m_i)
        if spectator is not None:
            k, ms = spectator
            # Ising shift of the line: -J S_z^k S_z^ion
            freq -= self.layout.j_matrix[ion][k] * ms / TWO_PI
        spec = PulseSpec("MW", int(ion), float(m_i), normalize_angle(angle), normalize_angle(phase) % (2 * math.pi),
                         rabi or self.options.rabi_mw, freq, spectator)
        return pulse(spec)

    def rf(self, ion, m_s, angle=math.pi, phase=0.0):
        nonsel = self.options.nonselective_rf
        target = ALL if nonsel else int(ion)
        ref = range(self.layout.n_ions) if nonsel and self.options.rf_reference == "mean" else [ion]
        ms_ref = 0.5 if m_s == BOTH else m_s
        freq = float(np.mean([rf_line_frequency(self.layout, k, ms_ref) for k in ref]))
        spec = PulseSpec("RF", target, m_s, angle, phase % (2 * math.pi), self.options.rabi_rf, freq)
        return pulse(spec)

    def unconditional_s(self, ion, angle, phase):
        """Electron rotation on both extreme nuclear lines."""
        angle = normalize_angle(angle)
        if angle == 0:
            return []
        return [self.mw(ion, self.m_top, angle, phase), self.mw(ion, -self.m_top, angle, phase)]

    def _nuclear_pi_factor(self, phase):
        from .simulator import nuclear_qubit_rotation

        return nuclear_qubit_rotation(Fraction(self.spin_i), math.pi, phase)[1, 0]

    # -- fragments ----------------------------------------------------------
    def cnot_is(self, ion):
        """MW pi pulse on the m_I = +I electron line, nucleus controls."""
        p = self.mw(ion, self.m_top, math.pi)
        factor = C.rotation(p.spec.phase, math.pi)[1, 0]
        return [p, FrameZ(int(ion), "I", _control_correction(factor, True))]

    def cnot_si(self, ion, phase=None):
        """RF pi pulse on the m_S = +1/2 nuclear line, electron controls."""
        if phase is None:
            phase = self._rf_phase
            if self.options.rf_pairing == "alternate":
                self._rf_phase = (self._rf_phase + math.pi) % (2 * math.pi)
        p = self.rf(ion, 0.5, math.pi, phase)
        factor = self._nuclear_pi_factor(p.spec.phase)
        return [p, FrameZ(int(ion), "S", _control_correction(factor, True))]

    def swap_is(self, ion, order=None):
        order = order or self.options.swap_order
        if order == SI_IS_SI:
            return self.cnot_si(ion) + self.cnot_is(ion) + self.cnot_si(ion) + self._idle_fix(ion)
        if order == IS_SI_IS:
            return self.cnot_is(ion) + self.cnot_si(ion) + self.cnot_is(ion)
        raise CompileError(f"unknown SWAP ordering {order!r}")

    def swap_pair(self, i, j):
        """SWAP on two ions at once; every nonselective RF pulse is then used."""
        if not self.options.nonselective_rf or self.options.swap_order != SI_IS_SI:
            return self.swap_is(i) + self.swap_is(j)
        active = (i, j)

        def rf_both():
            phase = self._rf_phase
            if self.options.rf_pairing == "alternate":
                self._rf_phase = (self._rf_phase + math.pi) % (2 * math.pi)
            p = self.rf(i, 0.5, math.pi, phase)
            corr = _control_correction(self._nuclear_pi_factor(p.spec.phase), True)
            return [p] + [FrameZ(int(k), "S", corr) for k in active]

        mw = self.cnot_is(i) + self.cnot_is(j)
        first = rf_both()
        return first + mw + rf_both() + [FrameZ(k, "S", math.pi) for k in self._idle_ions(active)]

    def _idle_ions(self, active):
        if not self.options.nonselective_rf or self.options.rf_pairing == "alternate":
            return []
        return [k for k in range(self.layout.n_ions) if k not in active]

    def _idle_fix(self, ion):
        # two equal-phase RF pi pulses are a 2 pi turn: -1 on idle ions with m_S = +1/2
        return [FrameZ(k, "S", math.pi) for k in self._idle_ions((ion,))]

    def u_electron(self, ion, u):
        a, b, c = zyz_angles(u)
        items = []
        if abs(normalize_angle(c)) > 1e-12 and abs(normalize_angle(c) - 2 * math.pi) > 1e-12:
            items.append(FrameZ(int(ion), "S", c))
        if b > 1e-12:
            items += self.unconditional_s(ion, b, math.pi / 2)
        if abs(normalize_angle(a)) > 1e-12 and abs(normalize_angle(a) - 2 * math.pi) > 1e-12:
            items.append(FrameZ(int(ion), "S", a))
        return items

    def u_nuclear(self, ion, u):
        return self.swap_is(ion) + self.u_electron(ion, u) + self.swap_is(ion)

    def refocus_block(self, active, passive=(), tau=None):
        """tau - pi_y(i), pi_y(j) - tau - pi_y(i), pi_y(j).

        Leaves exp(+i 2 tau J_ij S_z^i S_z^j); Larmor offsets of i, j and
        couplings to the passive spins cancel.
        """
        i, j = active
        if i == j:
            raise CompileError("refocusing needs two distinct active ions")
        if tau is None or tau <= 0:
            raise CompileError("tau must be positive")
        flips = self.unconditional_s(i, math.pi, math.pi / 2) + self.unconditional_s(j, math.pi, math.pi / 2)
        return [Delay(tau)] + flips + [Delay(tau)] + list(flips)

    def cnot_electron_pair(self, i, j, method=None):
        """CNOT between electron i (control) and electron j (target)."""
        method = method or self.options.cnot_method
        jij = 0.0 if self.layout.j_matrix is None else float(self.layout.j_matrix[i][j])
        if jij == 0:
            raise CompileError(f"ions {i} and {j} are not coupled")
        if method == "selective_line":
            rabi = abs(jij) / TWO_PI / 20
            items = [self.mw(j, m, math.pi, 0.0, spectator=(i, 0.5), rabi=rabi) for m in (self.m_top, -self.m_top)]
            factor = C.rotation(0.0, math.pi)[1, 0]
            return items + [FrameZ(int(i), "S", _control_correction(factor, True))]
        if method != "two_pulse_delay":
            raise CompileError(f"unknown CNOT method {method!r}")
        t_gate = math.pi / abs(jij)
        if self.options.refocus:
            passive = [k for k in range(self.layout.n_ions) if k not in (i, j)]
            wait = self.refocus_block((i, j), passive, t_gate / 2)
        else:
            wait = [Delay(t_gate)]
        # exp(i pi S_z S_z) = CZ up to exp(-i pi/4 Z) on each qubit; for J < 0
        # the extra -i Z Z is absorbed by flipping the correction sign
        corr = -math.pi / 2 if jij > 0 else math.pi / 2
        return (
            self.unconditional_s(j, math.pi / 2, math.pi / 2)
            + wait
            + [FrameZ(int(i), "S", corr), FrameZ(int(j), "S", corr)]
            + self.unconditional_s(j, math.pi / 2, 3 * math.pi / 2)
        )

    def cnot_nn(self, i, j):
        core = self.cnot_electron_pair(i, j)
        return self.swap_pair(i, j) + core + self.swap_pair(i, j)

    # -- gates ----------------------------------------------------------------
    def gate_items(self, gate: C.Gate):
        self._rf_phase = 0.0
        k = gate.kind
        i = gate.ions[0]
        if k == "X":
            return self.u_nuclear(i, C.PAULI_X)
        if k == "Z":
            return [FrameZ(i, "I", math.pi)]
        if k == "RotS":
            return self.unconditional_s(i, gate.angle, gate.axis)
        if k == "CnotSI":
            return self.cnot_si(i)
        if k == "CnotIS":
            return self.cnot_is(i)
        if k == "SwapIS":
            return self.swap_is(i)
        if k == "CnotNN":
            return self.cnot_nn(i, gate.ions[1])
        if k == "UNuclear":
            return self.u_nuclear(i, gate.unitary)
        raise CompileError(f"unknown gate kind {k!r}")

    def check_parity(self, gate, items):
        ledger = ParityLedger()
        for it in items:
            if isinstance(it, Pulse) and it.spec.target == ALL:
                ledger.add(range(self.layout.n_ions))
        odd = ledger.odd(exclude=gate.ions)
        if odd:
            raise ParityError(f"{gate.kind} on {gate.ions} leaves odd RF pi-pulse counts on ions {odd}")
        return ledger

    def carrier_fix(self, items, t0=0.0):
        """Undo the carrier phase each detuned ion sees by conjugating its pulses.

        A drive detuned by d from an ion's line reaches it with phase
        -2 pi d t; a z rotation of that angle before the pulse and its
        inverse after restore the nominal phase.
        """
        from .simulator import carrier_shifts

        out = []
        t = t0
        two_i = float(2 * self.spin_i)
        for it in items:
            if isinstance(it, Pulse):
                spin, mult = ("S", 1.0) if it.spec.channel == "MW" else ("I", two_i)
                shifts = carrier_shifts(it.spec, self.layout, t + it.duration / 2)
                pre = [FrameZ(k, spin, mult * a) for k, a in sorted(shifts.items()) if a]
                post = [FrameZ(k, spin, -mult * a) for k, a in sorted(shifts.items()) if a]
                out += pre + [it] + post
            else:
                out.append(it)
            t += it.duration
        return out

    def verify(self, gate, items, t0=0.0):
        from .simulator import render_ideal

        n = self.layout.n_ions
        md = metadata_for(self.layout)
        u = render_ideal(Schedule(tuple(items), md), t0=t0)
        t = C.gate_unitary(gate, n)
        fid = abs(np.trace(t.conj().T @ u)) / t.shape[0]
        if fid < 1 - 1e-9:
            raise CompileError(f"{gate.kind} on {gate.ions}: ideal rendering fidelity {fid:.12f}")
        return fid


def build_layout(trap: TrapParams, kappa: float = KAPPA_DEFAULT) -> SystemLayout:
    """Register layout with equilibrium positions and couplings of ``trap``."""
    if trap.n_ions == 1:
        return SystemLayout(trap.species, 1, trap.B0, trap.gradient_b, (0.0,))
    modes, j = chain(trap, kappa)
    return SystemLayout(trap.species, trap.n_ions, trap.B0, trap.gradient_b, tuple(modes.positions), j)


def compile_circuit(gates, trap: TrapParams | SystemLayout, options: CompileOptions | None = None) -> Schedule:
    """Lower ``gates`` to a schedule.

    ``trap`` may be a :class:`TrapParams` (feasibility is checked and the
    MW Rabi frequency clipped to the addressing limit) or a prepared
    :class:`SystemLayout`.
    """
    options = options or CompileOptions()
    report = None
    if isinstance(trap, TrapParams):
        layout = build_layout(trap, options.kappa)
        gate_time = math.pi / abs(layout.j_matrix[0, 1]) if trap.n_ions > 1 and trap.gradient_b > 0 else 1e-3
        report = feasibility_report(trap, options.rabi_mw, gate_time, options.margin, positions=layout.positions)
        if report.addressing_ok and not report.rabi_ok:
            options = CompileOptions(**{**options.__dict__, "rabi_mw": report.rabi_limit_hz})
            report = feasibility_report(trap, options.rabi_mw, gate_time, options.margin, positions=layout.positions)
        if not report.ok and not options.force:
            raise FeasibilityError(report)
    else:
        layout = trap
    comp = PulseCompiler(layout, options)
    items = []
    parity = {}
    verified = options.verify and layout.n_ions <= 4
    t_now = 0.0
    for gate in gates:
        gate.check(layout.n_ions)
        frag = comp.gate_items(gate)
        ledger = comp.check_parity(gate, frag)
        for ion, c in ledger.counts.items():
            parity[ion] = parity.get(ion, 0) + c
        frag = comp.carrier_fix(frag, t_now)
        if verified:
            comp.verify(gate, frag, t_now)
        items += frag
        t_now += sum(it.duration for it in frag)
    md = metadata_for(
        layout,
        gates,
        options={
            "rabi_mw": options.rabi_mw, "rabi_rf": options.rabi_rf, "nonselective_rf": options.nonselective_rf,
            "swap_order": options.swap_order, "cnot_method": options.cnot_method, "refocus": options.refocus,
        },
        frame={"MW": "sum_i S_z^i", "RF": "sum_i I_z^i", "interaction_picture": "uncoupled H0"},
        rf_parity={str(k): v for k, v in sorted(parity.items())},
        frame_phases=[{"ion": it.ion, "spin": it.spin, "angle_rad": it.angle} for it in items if isinstance(it, FrameZ)],
        verified=verified,
    )
    return Schedule(tuple(items), md)
