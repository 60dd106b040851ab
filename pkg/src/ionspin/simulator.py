"""Schedule execution in three modes.

ideal     instantaneous algebraic pulses on the truncated register
          (electron qubit + nuclear m_I = +-I pair per ion)
physical  full register, finite Rabi frequencies, exact propagators of
          the rotating-frame Hamiltonian of each segment
labframe  fixed-step integration of the lab-frame Hamiltonian with
          scaled-down frequencies, for validating the rotating frame

Physical results are expressed in the interaction picture of the
uncoupled single-ion Hamiltonians taken from the schedule's frame
definitions, so free evolution only carries the Ising couplings (and any
field offset).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import lru_cache

import numpy as np

from . import circuit as C
from .ion import (
    MW, RF, TWO_PI, DriveParams, SystemLayout, build_h1_rwa, channel_operators,
    h0_diagonal, mw_line_frequency, rf_line_frequency, spin_layout, spin_z_diagonals,
)
from .quantum import DimensionError, SpinSpec, angular_momentum_ops, process_fidelity, mat_exp_hermitian
from .schedule import ALL, BOTH, Delay, FrameZ, Pulse, PulseSpec, Schedule, layout_from_metadata

REPORT_SCHEMA = "ionspin.report/1"
MODES = ("ideal", "physical", "labframe")
LABFRAME_MAX_DIM = 16


class FrameMismatch(ValueError):
    pass


@dataclass
class FidelityReport:
    mode: str
    process_fidelity: float
    leakage: float
    duration_s: float
    segments: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "mode": self.mode,
            "process_fidelity": self.process_fidelity,
            "infidelity": 1.0 - self.process_fidelity,
            "leakage": self.leakage,
            "duration_s": self.duration_s,
            "segments": self.segments,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


# ---- ideal rendering ----------------------------------------------------------

@lru_cache(maxsize=64)
def nuclear_qubit_rotation(nuclear_spin: Fraction, angle: float, phase: float) -> np.ndarray:
    """Spin-I rotation restricted to the m_I = +-I pair."""
    ops = angular_momentum_ops(SpinSpec("I", nuclear_spin))
    gen = math.cos(phase) * ops.x + math.sin(phase) * ops.y
    full = mat_exp_hermitian(gen, angle)
    r = full[np.ix_([0, -1], [0, -1])]
    if np.max(np.abs(r.conj().T @ r - np.eye(2))) > 1e-9:
        raise ValueError(f"RF rotation by {angle:.4f} rad leaves the nuclear qubit subspace")
    return r


def _qubit_projector(m: float) -> np.ndarray:
    return C.UP if m > 0 else C.DOWN


def ideal_pulse_unitary(spec: PulseSpec, n_ions: int, nuclear_spin: Fraction, shifts=None) -> np.ndarray:
    """Instantaneous pulse on the truncated register.

    ``shifts`` maps ion index to an extra carrier phase seen by that ion.
    """
    shifts = shifts or {}
    n = 2 * n_ions
    eye = np.eye(4**n_ions, dtype=complex)
    if spec.channel == MW:
        t = int(spec.target)
        rot = C.rotation(spec.phase + shifts.get(t, 0.0), spec.angle)
        ops = {C.slot_s(t): rot - np.eye(2), C.slot_i(t): _qubit_projector(spec.condition)}
        if spec.spectator is not None:
            k, ms = spec.spectator
            ops[C.slot_s(k)] = _qubit_projector(ms)
        return eye + C.kron_slots(n, ops)
    targets = range(n_ions) if spec.target == ALL else [int(spec.target)]
    u = eye
    for t in targets:
        phase = (spec.phase + shifts.get(t, 0.0)) % TWO_PI
        rq = nuclear_qubit_rotation(Fraction(nuclear_spin), spec.angle, phase) - np.eye(2)
        ops = {C.slot_i(t): rq}
        if spec.condition != BOTH:
            ops[C.slot_s(t)] = _qubit_projector(spec.condition)
        u = (eye + C.kron_slots(n, ops)) @ u
    return u


def carrier_shifts(spec: PulseSpec, layout: SystemLayout, t_center: float) -> dict:
    """Carrier phase offsets -2 pi (f_line - f) t seen by each driven ion.

    Line frequencies are those of the uncoupled ions, i.e. of the frame
    the results are expressed in; a spectator-conditioned MW pulse is
    referenced to the Ising-shifted line it is meant to drive.
    """
    if spec.channel == MW:
        t = int(spec.target)
        f_line = mw_line_frequency(layout, t, spec.condition)
        if spec.spectator is not None and layout.j_matrix is not None:
            k, ms = spec.spectator
            f_line -= layout.j_matrix[t][k] * ms / TWO_PI
        lines = {t: f_line}
    else:
        if spec.condition == BOTH:
            return {}
        ions = range(layout.n_ions) if spec.target == ALL else [int(spec.target)]
        lines = {k: rf_line_frequency(layout, k, spec.condition) for k in ions}
    return {k: -TWO_PI * (f - spec.frequency) * t_center for k, f in lines.items()}


def frame_z_diagonal(item: FrameZ, n_ions: int) -> np.ndarray:
    slot = C.slot_s(item.ion) if item.spin == "S" else C.slot_i(item.ion)
    z = np.diagonal(C.kron_slots(2 * n_ions, {slot: C.PAULI_Z})).real
    return np.exp(-0.5j * item.angle * z)


def _delay_terms(n_ions, nuclear_spin, j_matrix, offsets_s, offsets_i):
    """Delay generator as (coefficient, slots) terms of products of qubit Z/2."""
    terms = []
    two_i = float(2 * nuclear_spin)
    for k in range(n_ions):
        if offsets_s is not None and offsets_s[k]:
            terms.append((offsets_s[k], (C.slot_s(k),)))
        if offsets_i is not None and offsets_i[k]:
            # I_z on the qubit pair is 2I * (Z/2)
            terms.append((-offsets_i[k] * two_i, (C.slot_i(k),)))
    if j_matrix is not None:
        for k in range(n_ions):
            for l in range(k + 1, n_ions):
                if j_matrix[k][l]:
                    terms.append((-j_matrix[k][l], (C.slot_s(k), C.slot_s(l))))
    return terms


def _half_z(slot: int, n_slots: int) -> np.ndarray:
    return 0.5 * np.diagonal(C.kron_slots(n_slots, {slot: C.PAULI_Z})).real


class _ToggleAccumulator:
    """Product of pulses and diagonal free evolutions in the toggling frame.

    Holds U = Q exp(-i sum_t acc_t Z_t) F. Delays are folded into ``acc``
    with signs given by how the pending pulses Q map each qubit Z; a pulse
    product that does not map every relevant Z onto +-Z forces a flush.
    Cancelling terms therefore cancel exactly, not just to rounding.
    """

    def __init__(self, n_slots, terms):
        self.n_slots = n_slots
        self.dim = 2**n_slots
        self.terms = terms
        self.slots = sorted({s for _, ss in terms for s in ss})
        self.zdiag = {s: _half_z(s, n_slots) for s in self.slots}
        self.F = np.eye(self.dim, dtype=complex)
        self.Q = np.eye(self.dim, dtype=complex)
        self.Q_is_identity = True
        self.acc = {}

    def _signs(self):
        if self.Q_is_identity:
            return {s: 1.0 for s in self.slots}
        out = {}
        for s in self.slots:
            z = self.zdiag[s]
            conj = self.Q.conj().T @ (z[:, None] * self.Q)
            if np.max(np.abs(conj - np.diag(z))) < 1e-9:
                out[s] = 1.0
            elif np.max(np.abs(conj + np.diag(z))) < 1e-9:
                out[s] = -1.0
            else:
                return None
        return out

    def _exp_acc(self):
        gen = np.zeros(self.dim)
        for key in sorted(self.acc):
            val = self.acc[key]
            prod = np.ones(self.dim)
            for s in key:
                prod = prod * self.zdiag[s]
            gen = gen + val * prod
        return np.exp(-1j * gen)

    def flush(self):
        if self.acc:
            self.F = (self.Q * self._exp_acc()[None, :]) @ self.F
        else:
            self.F = self.Q @ self.F
        self.Q = np.eye(self.dim, dtype=complex)
        self.Q_is_identity = True
        self.acc = {}

    def pulse(self, u):
        self.Q = u @ self.Q
        self.Q_is_identity = False

    def phase(self, diag):
        self.Q = diag[:, None] * self.Q
        self.Q_is_identity = False

    def delay(self, t):
        if not self.terms:
            return
        signs = self._signs()
        if signs is None:
            self.flush()
            signs = {s: 1.0 for s in self.slots}
        for coeff, key in self.terms:
            sgn = 1.0
            for s in key:
                sgn *= signs[s]
            self.acc[key] = self.acc.get(key, 0.0) + sgn * (coeff * t)

    def result(self):
        self.flush()
        return self.F


def render_ideal(
    schedule: Schedule,
    n_ions: int | None = None,
    nuclear_spin=None,
    j_matrix=None,
    offsets_s=None,
    offsets_i=None,
    carrier: SystemLayout | None | bool = True,
    t0: float = 0.0,
) -> np.ndarray:
    """Ideal unitary of ``schedule`` on the truncated register.

    Pulses are instantaneous and act at their centre time; delays evolve
    under the Ising couplings plus optional electron/nuclear Larmor offsets
    (rad/s). When a layout is known (``carrier``, or by default the one
    recorded in the metadata) each pulse carries the phase its ions see
    for a drive detuned from their own lines; ``carrier=False`` ignores
    this. ``t0`` is the absolute start time of the schedule.
    """
    md = schedule.metadata
    n_ions = n_ions if n_ions is not None else int(md.get("n_ions", 1))
    if nuclear_spin is None:
        nuclear_spin = Fraction(md.get("species", {}).get("nuclear_spin", "7/2"))
    if j_matrix is None:
        j_matrix = md.get("j_matrix")
    terms = _delay_terms(n_ions, Fraction(nuclear_spin), j_matrix if n_ions > 1 else None, offsets_s, offsets_i)
    if carrier is True:
        carrier = layout_from_metadata(md) if _has_layout(md) else None
    acc = _ToggleAccumulator(2 * n_ions, terms)
    t = t0
    for it in schedule.items:
        if isinstance(it, Pulse):
            shifts = carrier_shifts(it.spec, carrier, t + it.duration / 2) if carrier else None
            acc.pulse(ideal_pulse_unitary(it.spec, n_ions, Fraction(nuclear_spin), shifts))
        elif isinstance(it, FrameZ):
            acc.phase(frame_z_diagonal(it, n_ions))
        else:
            acc.delay(it.duration)
        t += it.duration
    return acc.result()


def _has_layout(md) -> bool:
    return "species" in md and "B0" in md and "positions" in md


def schedule_target(schedule: Schedule) -> np.ndarray:
    gates = [C.Gate.from_dict(g) for g in schedule.metadata.get("circuit", [])]
    return C.target_unitary(gates, schedule.n_ions)


# ---- physical (rotating frame, full register) ---------------------------------

class Register:
    """Cached operators of a full register for physical execution."""

    def __init__(self, layout: SystemLayout, frame: SystemLayout | None = None):
        self.layout = layout
        self.frame = frame or layout
        self.energy = h0_diagonal(layout)
        self.energy_ref = h0_diagonal(self.frame, include_coupling=False)
        self._ops = {}
        self._eig = {}
        self.sz, self.iz = spin_z_diagonals(layout)

    def ops(self, channel):
        if channel not in self._ops:
            self._ops[channel] = channel_operators(self.layout, channel)
        return self._ops[channel]

    def rotating_hamiltonian(self, spec: PulseSpec) -> np.ndarray:
        if spec.channel == RF and spec.condition == BOTH:
            raise ValueError("two-tone RF pulses (condition BOTH) have no single rotating frame")
        z, x, y = self.ops(spec.channel)
        w = TWO_PI * spec.rabi
        h = np.diag(self.energy - TWO_PI * spec.frequency * z).astype(complex)
        return h + w * (math.cos(spec.phase) * x + math.sin(spec.phase) * y)

    def pulse_propagator(self, spec: PulseSpec, duration: float, t0: float) -> np.ndarray:
        key = (spec.channel, spec.frequency, spec.phase, spec.rabi)
        if key not in self._eig:
            self._eig[key] = np.linalg.eigh(self.rotating_hamiltonian(spec))
        w, v = self._eig[key]
        z, _, _ = self.ops(spec.channel)
        g = self.energy_ref - TWO_PI * spec.frequency * z
        u = (v * np.exp(-1j * w * duration)) @ v.conj().T
        # interaction picture: D(t0 + T) U D(t0)^dagger with D(t) = exp(i g t)
        left = np.exp(1j * g * (t0 + duration))
        right = np.exp(-1j * g * t0)
        return left[:, None] * u * right[None, :]

    def delay_diagonal(self, duration: float) -> np.ndarray:
        return np.exp(-1j * (self.energy - self.energy_ref) * duration)

    def frame_z_diagonal(self, item: FrameZ) -> np.ndarray:
        if item.spin == "S":
            op = self.sz[item.ion]
        else:
            op = self.iz[item.ion] / float(2 * self.layout.species.nuclear_spin)
        return np.exp(-1j * item.angle * op)


def qubit_isometry(layout: SystemLayout) -> np.ndarray:
    """Columns embed the truncated register into the full one."""
    d_i = int(2 * layout.species.nuclear_spin + 1)
    per_ion = [(s * d_i + m) for s in (0, 1) for m in (0, d_i - 1)]
    idx = np.zeros(1, dtype=int)
    for _ in range(layout.n_ions):
        idx = (idx[:, None] * (2 * d_i) + np.array(per_ion)[None, :]).ravel()
    iso = np.zeros((layout.dim, idx.size))
    iso[idx, np.arange(idx.size)] = 1.0
    return iso


def _check_frame(schedule: Schedule, layout: SystemLayout):
    md = schedule.metadata
    if "n_ions" in md and int(md["n_ions"]) != layout.n_ions:
        raise FrameMismatch(f"schedule built for {md['n_ions']} ions, layout has {layout.n_ions}")
    sp = md.get("species")
    if sp and Fraction(sp["nuclear_spin"]) != layout.species.nuclear_spin:
        raise FrameMismatch("schedule and layout disagree on the nuclear spin")


def frame_layout(schedule: Schedule, layout: SystemLayout) -> SystemLayout:
    md = schedule.metadata
    if "species" in md and "B0" in md:
        return layout_from_metadata(md)
    return layout


def run_physical(schedule: Schedule, layout: SystemLayout, frame: SystemLayout | None = None):
    """Full-register propagator and per-segment log."""
    reg = Register(layout, frame)
    u = np.eye(layout.dim, dtype=complex)
    t = 0.0
    log = []
    for k, it in enumerate(schedule.items):
        if isinstance(it, Pulse):
            u = reg.pulse_propagator(it.spec, it.duration, t) @ u
            log.append({"index": k, "type": "pulse", "channel": it.spec.channel, "target": it.spec.target, "duration_s": it.duration})
        elif isinstance(it, Delay):
            u = reg.delay_diagonal(it.duration)[:, None] * u
            log.append({"index": k, "type": "delay", "duration_s": it.duration})
        else:
            u = reg.frame_z_diagonal(it)[:, None] * u
            log.append({"index": k, "type": "frame_z", "duration_s": 0.0})
        t += it.duration
    return u, log


def qubit_block(u_full: np.ndarray, layout: SystemLayout):
    iso = qubit_isometry(layout)
    block = iso.T @ u_full @ iso
    leakage = float(np.max(1.0 - np.sum(np.abs(block) ** 2, axis=0)))
    return block, max(leakage, 0.0)


def subspace_fidelity(target: np.ndarray, block: np.ndarray) -> float:
    return float(min(1.0, abs(np.trace(target.conj().T @ block)) / target.shape[0]))


# ---- lab frame oracle ----------------------------------------------------------

def scaled_layout(layout: SystemLayout, factor: float) -> SystemLayout:
    """Divide every spin frequency by ``factor`` (ratios preserved)."""
    sp = layout.species
    sp2 = replace(sp, hyperfine_a=sp.hyperfine_a / factor, electron_gamma=sp.electron_gamma / factor, nuclear_gamma=sp.nuclear_gamma / factor)
    j = None if layout.j_matrix is None else layout.j_matrix / factor
    return replace(layout, species=sp2, j_matrix=j)


def scaled_schedule(schedule: Schedule, factor: float) -> Schedule:
    items = []
    for it in schedule.items:
        if isinstance(it, Pulse):
            s = replace(it.spec, rabi=it.spec.rabi / factor, frequency=it.spec.frequency / factor)
            items.append(Pulse(s, it.duration * factor))
        elif isinstance(it, Delay):
            items.append(Delay(it.duration * factor))
        else:
            items.append(it)
    md = dict(schedule.metadata)
    if "species" in md:
        sp = dict(md["species"])
        for key in ("hyperfine_a", "electron_gamma", "nuclear_gamma"):
            sp[key] = sp[key] / factor
        md["species"] = sp
    if md.get("j_matrix") is not None:
        md["j_matrix"] = (np.asarray(md["j_matrix"]) / factor).tolist()
    return Schedule(tuple(items), md)


def labframe_propagator(layout: SystemLayout, spec: PulseSpec, t0: float, duration: float, steps_per_period: int = 400) -> np.ndarray:
    """Lab-frame propagator of one pulse by Strang splitting.

    H(t) = H0 + 2 omega cos(|f| t + phi_lab) X with the drive sampled at
    each step midpoint; phi_lab = sign(f) * phase reproduces the
    rotating-frame rotation axis.
    """
    if layout.dim > LABFRAME_MAX_DIM:
        raise DimensionError(f"lab-frame oracle limited to {LABFRAME_MAX_DIM} dimensions")
    energy = h0_diagonal(layout)
    _, x, _ = channel_operators(layout, spec.channel)
    f_max = max(abs(spec.frequency), (np.max(energy) - np.min(energy)) / TWO_PI)
    n_steps = int(math.ceil(duration * f_max * steps_per_period))
    dt = duration / n_steps
    lam, vec = np.linalg.eigh(x)
    half = np.exp(-0.5j * energy * dt)
    w_lab = TWO_PI * abs(spec.frequency)
    phi_lab = math.copysign(1.0, spec.frequency) * spec.phase
    amp = 2 * TWO_PI * spec.rabi
    mids = t0 + (np.arange(n_steps) + 0.5) * dt
    coeffs = amp * np.cos(w_lab * mids + phi_lab) * dt
    vh = vec.conj().T
    u = np.eye(layout.dim, dtype=complex)
    for c in coeffs:
        u = half[:, None] * u
        u = vec @ (np.exp(-1j * c * lam)[:, None] * (vh @ u))
        u = half[:, None] * u
    return u


def rwa_lab_propagator(layout: SystemLayout, spec: PulseSpec, t0: float, duration: float) -> np.ndarray:
    """Rotating-frame propagator mapped back to the lab frame."""
    drive = DriveParams(spec.frequency, rabi_S=spec.rabi if spec.channel == MW else 0.0, rabi_I=spec.rabi if spec.channel == RF else 0.0, phase=spec.phase)
    h = build_h1_rwa(layout, drive, spec.channel)
    z, _, _ = channel_operators(layout, spec.channel)
    wf = TWO_PI * spec.frequency
    u = mat_exp_hermitian(h, duration)
    return np.exp(-1j * wf * z * (t0 + duration))[:, None] * u * np.exp(1j * wf * z * t0)[None, :]


def run_labframe(schedule: Schedule, layout: SystemLayout, frame: SystemLayout | None = None):
    frame = frame or layout
    if layout.dim > LABFRAME_MAX_DIM:
        raise DimensionError(f"lab-frame oracle limited to {LABFRAME_MAX_DIM} dimensions")
    energy = h0_diagonal(layout)
    energy_ref = h0_diagonal(frame, include_coupling=False)
    reg = Register(layout, frame)
    u = np.eye(layout.dim, dtype=complex)
    t = 0.0
    log = []
    for k, it in enumerate(schedule.items):
        if isinstance(it, Pulse):
            u = labframe_propagator(layout, it.spec, t, it.duration) @ u
        elif isinstance(it, Delay):
            u = np.exp(-1j * energy * it.duration)[:, None] * u
        else:
            u = reg.frame_z_diagonal(it)[:, None] * u
        log.append({"index": k, "type": type(it).__name__.lower(), "duration_s": it.duration})
        t += it.duration
    # lab -> interaction picture of the reference Hamiltonian
    u = np.exp(1j * energy_ref * t)[:, None] * u
    return u, log


# ---- public entry points ----------------------------------------------------

def execute(
    schedule: Schedule,
    layout: SystemLayout | None = None,
    mode: str = "ideal",
    target: np.ndarray | None = None,
    labframe_scale: float = 1e4,
):
    """Realised unitary and a :class:`FidelityReport` against the target.

    ``target`` defaults to the circuit recorded in the schedule metadata,
    on the truncated register. In ``labframe`` mode the schedule and the
    layout are first slowed down by ``labframe_scale`` (all frequencies
    divided, all durations multiplied), which leaves the ideal dynamics
    unchanged.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    if target is None:
        target = schedule_target(schedule)
    if mode == "ideal":
        n_ions = layout.n_ions if layout is not None else schedule.n_ions
        kw = {}
        if layout is not None:
            _check_frame(schedule, layout)
            kw["nuclear_spin"] = layout.species.nuclear_spin
            if layout.j_matrix is not None:
                kw["j_matrix"] = layout.j_matrix
        u = render_ideal(schedule, n_ions=n_ions, **kw)
        fid = process_fidelity(target, u)
        log = [{"index": k, "type": type(it).__name__.lower(), "duration_s": it.duration} for k, it in enumerate(schedule.items)]
        return u, FidelityReport(mode, fid, 0.0, schedule.duration, log)
    if layout is None:
        layout = layout_from_metadata(schedule.metadata)
    _check_frame(schedule, layout)
    duration = schedule.duration
    if mode == "labframe":
        schedule = scaled_schedule(schedule, labframe_scale)
        layout = scaled_layout(layout, labframe_scale)
    frame = frame_layout(schedule, layout)
    runner = run_physical if mode == "physical" else run_labframe
    u, log = runner(schedule, layout, frame)
    if mode == "labframe":
        for entry in log:
            entry["duration_s"] /= labframe_scale
    block, leak = qubit_block(u, layout)
    fid = subspace_fidelity(target, block)
    return u, FidelityReport(mode, fid, leak, duration, log)


def electron_flip_probabilities(u_full: np.ndarray, layout: SystemLayout, ion: int, inputs) -> np.ndarray:
    """Probability that the electron of ``ion`` changes, per full-basis input index."""
    spins = spin_layout(layout)
    dims = [s.dim for s in spins]
    out = []
    for idx in inputs:
        digits = np.unravel_index(idx, dims)
        probs = np.abs(u_full[:, idx]) ** 2
        p = probs.reshape(dims)
        sl = [slice(None)] * len(dims)
        sl[2 * ion] = 1 - digits[2 * ion]
        out.append(float(np.sum(p[tuple(sl)])))
    return np.array(out)


def dephasing_mc(schedule: Schedule, layout: SystemLayout, delta_b_rms: float, trials: int, seed: int = 0, mode: str = "ideal"):
    """Mean fidelity under a quasi-static Gaussian field offset.

    Returns a dict with the mean fidelity, its standard error and the
    spread of the idle electron phase 2 pi gamma_S dB T.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if delta_b_rms < 0:
        raise ValueError("delta_b_rms must be >= 0")
    rng = np.random.default_rng(seed)
    shifts = delta_b_rms * rng.standard_normal(trials)
    target = schedule_target(schedule)
    sp = layout.species
    fids = []
    for db in shifts:
        if mode == "ideal":
            ds = np.full(layout.n_ions, TWO_PI * sp.electron_gamma * db)
            di = np.full(layout.n_ions, TWO_PI * sp.nuclear_gamma * db)
            j = layout.j_matrix if layout.n_ions > 1 else None
            u = render_ideal(schedule, layout.n_ions, sp.nuclear_spin, j, ds, di)
            fids.append(process_fidelity(target, u))
        else:
            shifted = layout.shifted(float(db))
            frame = frame_layout(schedule, layout)
            u, _ = run_physical(schedule, shifted, frame)
            block, _ = qubit_block(u, shifted)
            fids.append(subspace_fidelity(target, block))
    fids = np.array(fids)
    phases = TWO_PI * sp.electron_gamma * shifts * schedule.duration
    return {
        # offset by the first sample so identical trials average exactly
        "mean_fidelity": float(fids[0] + np.mean(fids - fids[0])),
        "stderr": float(np.std(fids, ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0,
        "phase_std_rad": float(np.std(phases, ddof=1)) if trials > 1 else 0.0,
        "phase_std_expected_rad": TWO_PI * sp.electron_gamma * delta_b_rms * schedule.duration,
        "trials": trials,
        "seed": seed,
    }


# ---- selectivity -----------------------------------------------------------------

@dataclass
class SelectivityCurve:
    """Nominal pi pulse on one electron line, swept in Rabi frequency."""

    ion: int
    m_i: float
    rabi_hz: np.ndarray
    infidelity: np.ndarray
    leakage: np.ndarray
    neighbor_flip: np.ndarray
    doublet_inversion: np.ndarray

    def halving_ratio(self) -> float:
        """infidelity(r) / infidelity(r/2) from a log-log fit over the whole range."""
        ok = self.infidelity > 0
        if np.count_nonzero(ok) < 2:
            return float("nan")
        slope = np.polyfit(np.log(self.rabi_hz[ok]), np.log(self.infidelity[ok]), 1)[0]
        return float(2.0**slope)

    def rows(self):
        for k in range(self.rabi_hz.size):
            yield {
                "rabi_hz": float(self.rabi_hz[k]),
                "infidelity": float(self.infidelity[k]),
                "leakage": float(self.leakage[k]),
                "neighbor_flip": float(self.neighbor_flip[k]),
                "doublet_inversion": float(self.doublet_inversion[k]),
            }


def _qubit_inputs(layout: SystemLayout):
    iso = qubit_isometry(layout)
    return np.argmax(iso, axis=0)


def selectivity_scan(layout: SystemLayout, transition=(0, None), rabi_range=(1e5, 1e6, 11)) -> SelectivityCurve:
    """Infidelity and crosstalk of a conditional electron pi pulse vs Rabi frequency.

    ``transition`` is ``(ion, m_I)`` (``m_I`` defaults to +I);
    ``rabi_range`` is either ``(lo, hi, n)`` for a geometric grid or an
    explicit sequence of frequencies in Hz. Neighbour flips are the worst
    case over qubit-subspace inputs and over the other ions; the doublet
    inversion is the smallest flip probability of the addressed electron
    over inputs on the addressed nuclear level, i.e. over both lines of
    any J doublet.
    """
    from .compiler import CompileOptions, PulseCompiler, _control_correction

    ion, m_i = transition
    m_i = float(layout.species.nuclear_spin) if m_i is None else float(m_i)
    if isinstance(rabi_range, tuple) and len(rabi_range) == 3 and not isinstance(rabi_range[2], float):
        rabis = np.geomspace(rabi_range[0], rabi_range[1], int(rabi_range[2]))
    else:
        rabis = np.asarray(rabi_range, dtype=float)
    if np.any(rabis <= 0):
        raise ValueError("rabi_range must be positive")
    md = None
    inputs = _qubit_inputs(layout)
    spins = spin_layout(layout)
    dims = [s.dim for s in spins]
    m_level = list(spins[2 * ion + 1].m_values).index(m_i) if m_i in list(spins[2 * ion + 1].m_values) else None
    addressed = [idx for idx in inputs if np.unravel_index(idx, dims)[2 * ion + 1] == m_level]
    res = {k: [] for k in ("inf", "leak", "nb", "dbl")}
    for r in rabis:
        comp = PulseCompiler(layout, CompileOptions(rabi_mw=float(r)))
        p = comp.mw(ion, m_i, math.pi)
        factor = C.rotation(p.spec.phase, math.pi)[1, 0]
        items = (p, FrameZ(int(ion), "I", _control_correction(factor, m_i > 0)))
        if md is None:
            from .schedule import metadata_for

            md = metadata_for(layout)
        sched = Schedule(items, md)
        target = render_ideal(sched)
        u, _ = run_physical(sched, layout)
        block, leak = qubit_block(u, layout)
        res["inf"].append(1.0 - subspace_fidelity(target, block))
        res["leak"].append(leak)
        others = [k for k in range(layout.n_ions) if k != ion]
        res["nb"].append(max((float(np.max(electron_flip_probabilities(u, layout, k, inputs))) for k in others), default=0.0))
        res["dbl"].append(float(np.min(electron_flip_probabilities(u, layout, ion, addressed))))
    return SelectivityCurve(ion, m_i, rabis, *(np.array(res[k]) for k in ("inf", "leak", "nb", "dbl")))
