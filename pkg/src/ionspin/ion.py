"""Single- and multi-ion spin Hamiltonians and magnetic-dipole spectra.

Per ion the Hilbert space is electron (S) ⊗ nucleus (I); ions are stacked
left to right, so the full layout reads [S_0, I_0, S_1, I_1, ...].
Constants are stored as cyclic frequencies (Hz, Hz/T); Hamiltonians are
returned in rad/s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from itertools import product
from typing import Sequence

import numpy as np

from .quantum import SpinSpec, angular_momentum_ops, embed, embed_diag, layout_dim, MAX_DIM

TWO_PI = 2 * math.pi
ATOMIC_MASS_CA43 = 43 * 1.67e-27  # kg, as quoted for the Lamb-Dicke estimate

MW = "MW"
RF = "RF"


@dataclass(frozen=True)
class IonSpecies:
    name: str
    mass: float  # kg
    nuclear_spin: Fraction
    hyperfine_a: float  # Hz, signed
    electron_gamma: float  # Hz/T
    nuclear_gamma: float  # Hz/T; enters H0 with a minus sign

    def __post_init__(self):
        spin = Fraction(self.nuclear_spin).limit_denominator(2)
        object.__setattr__(self, "nuclear_spin", spin)
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if spin < 0 or (2 * spin).denominator != 1:
            raise ValueError(f"nuclear spin must be a half-integer, got {self.nuclear_spin}")
        if self.electron_gamma <= 0:
            raise ValueError("electron_gamma must be positive")

    @property
    def ion_dim(self) -> int:
        return 2 * int(2 * self.nuclear_spin + 1)


def ca43_defaults() -> IonSpecies:
    """43Ca+ ground state in the Paschen-Back regime."""
    return IonSpecies(
        name="43Ca+",
        mass=ATOMIC_MASS_CA43,
        nuclear_spin=Fraction(7, 2),
        hyperfine_a=-806.4e6,
        electron_gamma=28.02e9,
        nuclear_gamma=2.85e6,
    )


def custom_species(name, mass, nuclear_spin, hyperfine_a, electron_gamma=28.02e9, nuclear_gamma=0.0):
    """Species without bundled constants (171Yb+, 135Ba+, 137Ba+ ...)."""
    return IonSpecies(name, mass, Fraction(nuclear_spin), hyperfine_a, electron_gamma, nuclear_gamma)


@dataclass(frozen=True)
class SystemLayout:
    species: IonSpecies
    n_ions: int = 1
    B0: float = 1.0  # T
    gradient_b: float = 0.0  # T/m
    positions: tuple = ()  # m, one per ion
    j_matrix: np.ndarray | None = field(default=None, compare=False, repr=False)  # rad/s

    def __post_init__(self):
        if self.n_ions < 1:
            raise ValueError("n_ions must be >= 1")
        if self.B0 <= 0:
            raise ValueError("B0 must be positive (Paschen-Back regime)")
        object.__setattr__(self, "positions", tuple(float(z) for z in self.positions))
        if self.positions and len(self.positions) != self.n_ions:
            raise ValueError("positions must have one entry per ion")
        if self.j_matrix is not None:
            j = np.asarray(self.j_matrix, dtype=float)
            if j.shape != (self.n_ions, self.n_ions):
                raise ValueError("j_matrix must be n_ions x n_ions")
            object.__setattr__(self, "j_matrix", j)
        if layout_dim(spin_layout(self)) > MAX_DIM:
            raise ValueError(f"register dimension exceeds {MAX_DIM}")

    @property
    def dim(self) -> int:
        return self.species.ion_dim**self.n_ions

    def field_at_ions(self) -> np.ndarray:
        z = np.asarray(self.positions) if self.positions else np.zeros(self.n_ions)
        return self.B0 + self.gradient_b * z

    def shifted(self, delta_b: float) -> "SystemLayout":
        """Same register with a uniform field offset."""
        return replace(self, B0=self.B0 + delta_b)


@dataclass(frozen=True)
class DriveParams:
    """A single drive tone.

    ``frequency`` is the signed rotating-frame frequency in Hz: the tone
    sits at ``abs(frequency)`` and the sign selects the rotation sense
    (positive for the electron lines, negative for the nuclear lines of
    the m_S = +1/2 manifold when A < 0). ``phase`` is the azimuth of the
    rotation axis in the rotating frame.
    """

    frequency: float
    rabi_S: float = 0.0  # Hz
    rabi_I: float = 0.0  # Hz
    phase: float = 0.0
    target_ion: int = 0

    def __post_init__(self):
        if self.rabi_S < 0 or self.rabi_I < 0:
            raise ValueError("Rabi frequencies must be non-negative")


@dataclass(frozen=True)
class SpectrumLine:
    frequency: float  # Hz
    intensity: float
    label_initial: str
    label_final: str
    ion_index: int


def spin_layout(layout: SystemLayout) -> list[SpinSpec]:
    out = []
    for i in range(layout.n_ions):
        out.append(SpinSpec(f"S{i}", Fraction(1, 2)))
        out.append(SpinSpec(f"I{i}", layout.species.nuclear_spin))
    return out


def larmor(layout: SystemLayout) -> tuple[np.ndarray, np.ndarray]:
    """Electron and nuclear Larmor frequencies per ion, rad/s."""
    b = layout.field_at_ions()
    sp = layout.species
    return TWO_PI * sp.electron_gamma * b, TWO_PI * sp.nuclear_gamma * b


def _check_multi_ion(layout: SystemLayout, include_coupling: bool):
    if layout.n_ions > 1:
        if not layout.positions:
            raise ValueError("multi-ion layouts need ion positions")
        if include_coupling and layout.j_matrix is None:
            raise ValueError("multi-ion layouts need a J matrix")


def spin_z_diagonals(layout: SystemLayout) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Diagonals of S_z^i and I_z^i in the full register basis."""
    spins = spin_layout(layout)
    sz, iz = [], []
    for i in range(layout.n_ions):
        sz.append(embed_diag(spins[2 * i].m_values, 2 * i, spins))
        iz.append(embed_diag(spins[2 * i + 1].m_values, 2 * i + 1, spins))
    return sz, iz


def h0_diagonal(layout: SystemLayout, include_coupling: bool = True) -> np.ndarray:
    """Diagonal of the truncated register Hamiltonian (rad/s).

    Omega_S^i S_z^i - Omega_I^i I_z^i + A S_z^i I_z^i summed over ions,
    minus J_ij S_z^i S_z^j over pairs when ``include_coupling``.
    """
    _check_multi_ion(layout, include_coupling)
    omega_s, omega_i = larmor(layout)
    a = TWO_PI * layout.species.hyperfine_a
    sz, iz = spin_z_diagonals(layout)
    d = np.zeros(layout.dim)
    for k in range(layout.n_ions):
        d += omega_s[k] * sz[k] - omega_i[k] * iz[k] + a * sz[k] * iz[k]
    if include_coupling and layout.n_ions > 1:
        for k in range(layout.n_ions):
            for l in range(k + 1, layout.n_ions):
                d -= layout.j_matrix[k, l] * sz[k] * sz[l]
    return d


def build_h0(layout: SystemLayout) -> np.ndarray:
    return np.diag(h0_diagonal(layout)).astype(complex)


def channel_operators(layout: SystemLayout, channel: str):
    """(Z, X, Y) summed over all ions for the given drive channel."""
    spins = spin_layout(layout)
    slot = 0 if channel == MW else 1
    ops = angular_momentum_ops(spins[slot])
    z = np.zeros(layout.dim)
    x = np.zeros((layout.dim, layout.dim), complex)
    y = np.zeros((layout.dim, layout.dim), complex)
    for i in range(layout.n_ions):
        k = 2 * i + slot
        z += embed_diag(spins[k].m_values, k, spins)
        x += embed(ops.x, k, spins)
        y += embed(ops.y, k, spins)
    return z, x, y


def build_h1_rwa(layout: SystemLayout, drive: DriveParams, channel: str) -> np.ndarray:
    """Time-independent rotating-frame Hamiltonian for one drive tone (rad/s).

    H0 - omega_f Z + omega (cos(phase) X + sin(phase) Y) with Z, X, Y the
    channel's spin operators summed over every ion; counter-rotating terms
    are dropped.
    """
    if channel not in (MW, RF):
        raise ValueError(f"unknown channel {channel!r}")
    if drive.frequency == 0:
        raise ValueError("drive frequency must be non-zero")
    rabi, other = (drive.rabi_S, drive.rabi_I) if channel == MW else (drive.rabi_I, drive.rabi_S)
    if rabi == 0 and other > 0:
        raise ValueError(f"{channel} drive with zero Rabi frequency on its own spin")
    z, x, y = channel_operators(layout, channel)
    h = np.diag(h0_diagonal(layout) - TWO_PI * drive.frequency * z).astype(complex)
    w = TWO_PI * rabi
    if w:
        h += w * (math.cos(drive.phase) * x + math.sin(drive.phase) * y)
    return h


def mw_line_frequency(layout: SystemLayout, ion: int, m_i: float) -> float:
    """Electron resonance of ``ion`` with its nucleus in ``m_i`` (Hz, J unshifted)."""
    omega_s, _ = larmor(layout)
    return (omega_s[ion] / TWO_PI) + layout.species.hyperfine_a * m_i


def rf_line_frequency(layout: SystemLayout, ion: int, m_s: float) -> float:
    """Signed nuclear transition frequency E(m_I+1) - E(m_I) at electron state ``m_s`` (Hz)."""
    _, omega_i = larmor(layout)
    return -(omega_i[ion] / TWO_PI) + layout.species.hyperfine_a * m_s


def _fmt_m(m: float) -> str:
    f = Fraction(m).limit_denominator(2)
    return f"{'+' if f >= 0 else '-'}{abs(f)}"


def state_label(layout: SystemLayout, index: int) -> str:
    spins = spin_layout(layout)
    dims = [s.dim for s in spins]
    digits = np.unravel_index(index, dims)
    parts = []
    for i in range(layout.n_ions):
        ms = spins[2 * i].m_values[digits[2 * i]]
        mi = spins[2 * i + 1].m_values[digits[2 * i + 1]]
        parts.append(f"mS{i}={_fmt_m(ms)},mI{i}={_fmt_m(mi)}")
    return ";".join(parts)


def transition_spectrum(layout: SystemLayout, channel: str, directed: bool = False) -> list[SpectrumLine]:
    """Stick spectrum of the magnetic-dipole transitions of one channel.

    Lines connect eigenstates of H0 with a non-zero matrix element of
    sum_i S_x^i (MW) or sum_i I_x^i (RF). By default each unordered pair
    appears once; ``directed=True`` lists absorption and emission
    separately.
    """
    if channel not in (MW, RF):
        raise ValueError(f"unknown channel {channel!r}")
    energies = h0_diagonal(layout)
    spins = spin_layout(layout)
    dims = [s.dim for s in spins]
    slot = 0 if channel == MW else 1
    lines = []
    for ion in range(layout.n_ions):
        k = 2 * ion + slot
        jx = angular_momentum_ops(spins[k]).x
        others = [range(d) for d in dims]
        others[k] = [0]
        for digits in product(*others):
            digits = list(digits)
            for a in range(dims[k]):
                for b in range(a + 1, dims[k]):
                    amp = jx[a, b]
                    if abs(amp) == 0:
                        continue
                    digits[k] = a
                    ia = int(np.ravel_multi_index(digits, dims))
                    digits[k] = b
                    ib = int(np.ravel_multi_index(digits, dims))
                    lo, hi = (ia, ib) if energies[ia] < energies[ib] else (ib, ia)
                    freq = (energies[hi] - energies[lo]) / TWO_PI
                    inten = float(abs(amp) ** 2)
                    lines.append(SpectrumLine(freq, inten, state_label(layout, lo), state_label(layout, hi), ion))
                    if directed:
                        lines.append(SpectrumLine(freq, inten, state_label(layout, hi), state_label(layout, lo), ion))
    lines.sort(key=lambda ln: (ln.frequency, ln.ion_index, ln.label_initial))
    return lines


def distinct_frequencies(lines: Sequence[SpectrumLine], tol_hz: float = 1e-3) -> np.ndarray:
    f = np.sort([ln.frequency for ln in lines])
    if f.size == 0:
        return f
    keep = np.concatenate([[True], np.diff(f) > tol_hz])
    return f[keep]
