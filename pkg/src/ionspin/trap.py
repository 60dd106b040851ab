"""Axial ion-chain statics, normal modes and gradient-induced couplings."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import constants as sc

from .ion import IonSpecies, TWO_PI

COULOMB_K = sc.e**2 / (4 * math.pi * sc.epsilon_0)
KAPPA_DEFAULT = 0.0418
EPS_MAX_DEFAULT = 0.1
MARGIN_DEFAULT = 10.0
MAX_IONS = 10

# quoted closed form for the nuclear Larmor separation, MHz per (T/m * m)
NUCLEAR_SEPARATION_CLOSED_FORM_MHZ = 18.0
NUCLEAR_SEPARATION_QUOTED_HZ = 700.0


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrapParams:
    nu1: float  # rad/s, centre-of-mass axial frequency
    n_ions: int
    species: IonSpecies
    gradient_b: float = 0.0  # T/m
    B0: float = 1.0  # T

    def __post_init__(self):
        if self.nu1 <= 0:
            raise ValueError("nu1 must be positive")
        if self.n_ions < 1:
            raise ValueError("n_ions must be >= 1")
        if self.gradient_b < 0:
            raise ValueError("gradient_b must be >= 0")

    @property
    def length_scale(self) -> float:
        """(e^2 / 4 pi eps0 m nu1^2)^(1/3), metres."""
        return (COULOMB_K / (self.species.mass * self.nu1**2)) ** (1 / 3)


@dataclass(frozen=True)
class ModeStructure:
    positions: np.ndarray  # m, ascending
    mode_freqs: np.ndarray  # rad/s, ascending
    mode_vectors: np.ndarray  # rows are modes


def _coulomb_terms(u):
    diff = u[:, None] - u[None, :]
    np.fill_diagonal(diff, np.inf)
    return diff


def _force(u):
    diff = _coulomb_terms(u)
    return u - np.sum(np.sign(diff) / diff**2, axis=1)


def _hessian(u):
    diff = _coulomb_terms(u)
    inv3 = 1.0 / np.abs(diff) ** 3
    hess = -2.0 * inv3
    np.fill_diagonal(hess, 1.0 + 2.0 * np.sum(inv3, axis=1))
    return hess


def dimensionless_positions(n: int, tol: float = 1e-12, max_iter: int = 200) -> np.ndarray:
    """Equilibrium positions in units of the trap length scale.

    Damped Newton on u_i = sum_j sign(u_i - u_j) / (u_i - u_j)^2.
    """
    if n == 1:
        return np.zeros(1)
    # spacing seed ~ 2 N^-0.56 around the centre is close to the true chain
    spacing = 2.0 * n**-0.56 if n > 2 else 2 ** (1 / 3)
    u = (np.arange(n) - (n - 1) / 2) * spacing
    res = np.max(np.abs(_force(u)))
    for _ in range(max_iter):
        if res <= tol:
            break
        step = np.linalg.solve(_hessian(u), -_force(u))
        lam = 1.0
        while True:
            trial = u + lam * step
            if np.all(np.diff(trial) > 0):
                r = np.max(np.abs(_force(trial)))
                if r < res or lam < 1e-6:
                    break
            lam /= 2
        u, res = trial, r
    if res > tol:
        raise ConvergenceError(f"equilibrium solve for N={n} stalled: residual {res:.3e} from seed spacing {spacing:.4f}")
    u = 0.5 * (u - u[::-1])  # enforce mirror symmetry
    return u


def equilibrium_positions(trap: TrapParams) -> np.ndarray:
    """Axial equilibrium positions in metres (ascending)."""
    if trap.n_ions > MAX_IONS:
        raise ValueError(f"at most {MAX_IONS} ions are supported")
    return dimensionless_positions(trap.n_ions) * trap.length_scale


def normal_modes(trap: TrapParams, positions: np.ndarray) -> ModeStructure:
    u = np.asarray(positions) / trap.length_scale
    if trap.n_ions == 1:
        return ModeStructure(np.asarray(positions, float), np.array([trap.nu1]), np.ones((1, 1)))
    w, v = np.linalg.eigh(_hessian(u))
    if np.any(w <= 0):
        raise ValueError("Hessian is not positive definite; positions are not an equilibrium")
    vecs = v.T.copy()
    for row in vecs:
        pivot = np.argmax(np.abs(row) > 1e-9)
        if row[pivot] < 0:
            row *= -1
    return ModeStructure(np.asarray(positions, float), trap.nu1 * np.sqrt(w), vecs)


def coupling_prefactor(trap: TrapParams) -> float:
    """(g mu_B b)^2 / (hbar m) in s^-3."""
    g_mu_b = sc.h * trap.species.electron_gamma
    return (g_mu_b * trap.gradient_b) ** 2 / (sc.hbar * trap.species.mass)


def j_coupling_matrix(trap: TrapParams, modes: ModeStructure, kappa: float = KAPPA_DEFAULT) -> np.ndarray:
    """Ising couplings J_ij in rad/s, zero diagonal.

    J_ij = kappa (g mu_B b)^2 / (hbar m) sum_n S_ni S_nj / nu_n^2.
    """
    s = modes.mode_vectors
    kernel = (s.T / modes.mode_freqs**2) @ s
    j = kappa * coupling_prefactor(trap) * kernel
    np.fill_diagonal(j, 0.0)
    return j


def chain(trap: TrapParams, kappa: float = KAPPA_DEFAULT):
    """Equilibrium chain and its J matrix."""
    pos = equilibrium_positions(trap)
    modes = normal_modes(trap, pos)
    return modes, j_coupling_matrix(trap, modes, kappa)


def lamb_dicke_epsilon(trap: TrapParams, eps_max: float = EPS_MAX_DEFAULT) -> tuple[float, float]:
    """Generalised Lamb-Dicke parameter and the gradient that reaches ``eps_max``.

    epsilon = g mu_B b / sqrt(2 N m hbar nu1^3).
    """
    g_mu_b = sc.h * trap.species.electron_gamma
    denom = math.sqrt(2 * trap.n_ions * trap.species.mass * sc.hbar * trap.nu1**3)
    return g_mu_b * trap.gradient_b / denom, eps_max * denom / g_mu_b


@dataclass
class FeasibilityReport:
    n_ions: int
    dz_min: float  # m
    electron_separation_hz: float
    addressing_ratio: float  # g mu_B b dz N / |A|
    addressing_ok: bool
    rabi_mw_hz: float
    rabi_limit_hz: float
    rabi_ok: bool
    nuclear_separation_hz: float
    nuclear_separation_closed_form_hz: float
    nuclear_separation_quoted_hz: float
    epsilon: float
    epsilon_max: float
    epsilon_ok: bool
    b_max_tesla_per_m: float
    gate_time_s: float
    delta_b_max_tesla: float
    messages: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.addressing_ok and self.rabi_ok and self.epsilon_ok


def min_spacing(positions) -> float:
    p = np.sort(np.asarray(positions))
    return float(np.min(np.diff(p))) if p.size > 1 else math.inf


def feasibility_report(
    trap: TrapParams,
    rabi_mw_hz: float,
    gate_time_s: float,
    margin: float = MARGIN_DEFAULT,
    eps_max: float = EPS_MAX_DEFAULT,
    positions=None,
) -> FeasibilityReport:
    """Check addressing, Rabi, Lamb-Dicke and field-stability constraints.

    Strong inequalities are encoded as a factor ``margin``; raw ratios are
    kept so other margins can be applied downstream.
    """
    if gate_time_s <= 0:
        raise ValueError("gate_time_s must be positive")
    sp = trap.species
    pos = equilibrium_positions(trap) if positions is None else np.asarray(positions)
    dz = min_spacing(pos)
    msgs = []
    if trap.n_ions > 1:
        sep = sp.electron_gamma * trap.gradient_b * dz
        ratio = sep * trap.n_ions / abs(sp.hyperfine_a)
        addressing_ok = ratio < 1.0
        rabi_limit = sep / margin
        nuc = sp.nuclear_gamma * trap.gradient_b * dz
        nuc_closed = NUCLEAR_SEPARATION_CLOSED_FORM_MHZ * 1e6 * trap.gradient_b * dz
    else:
        sep, ratio, addressing_ok = math.inf, 0.0, True
        rabi_limit = abs(sp.hyperfine_a) / margin
        nuc = nuc_closed = 0.0
        dz = 0.0
    rabi_ok = rabi_mw_hz <= rabi_limit
    eps, b_max = lamb_dicke_epsilon(trap, eps_max)
    eps_ok = eps <= eps_max
    # field noise budget in cyclic-frequency units: delta_B << 1 / (gamma_S tau)
    db_max = 1.0 / (margin * sp.electron_gamma * gate_time_s)
    if not addressing_ok:
        msgs.append(f"electron lines overlap: N g mu_B b dz / |A| = {ratio:.3f} >= 1")
    if not rabi_ok:
        msgs.append(f"MW Rabi {rabi_mw_hz:.4g} Hz exceeds limit {rabi_limit:.4g} Hz")
    if not eps_ok:
        msgs.append(f"Lamb-Dicke epsilon {eps:.4f} exceeds {eps_max} (b_max = {b_max:.1f} T/m)")
    if trap.n_ions > 1:
        msgs.append(
            f"nuclear Larmor separation {nuc:.4g} Hz (closed form {nuc_closed:.4g} Hz, quoted {NUCLEAR_SEPARATION_QUOTED_HZ:.0f} Hz)"
        )
    return FeasibilityReport(
        n_ions=trap.n_ions,
        dz_min=dz,
        electron_separation_hz=sep,
        addressing_ratio=ratio,
        addressing_ok=addressing_ok,
        rabi_mw_hz=rabi_mw_hz,
        rabi_limit_hz=rabi_limit,
        rabi_ok=rabi_ok,
        nuclear_separation_hz=nuc,
        nuclear_separation_closed_form_hz=nuc_closed,
        nuclear_separation_quoted_hz=NUCLEAR_SEPARATION_QUOTED_HZ,
        epsilon=eps,
        epsilon_max=eps_max,
        epsilon_ok=eps_ok,
        b_max_tesla_per_m=b_max,
        gate_time_s=gate_time_s,
        delta_b_max_tesla=db_max,
        messages=msgs,
    )


# nu1/2pi (MHz), b (T/m), dz_min (um), J12 (k rad/s), T (ms)
TABLE1_ROWS = (
    (1.0, 450.0, 5.5, 3.25, 0.24),
    (1.0, 230.0, 5.5, 0.85, 0.92),
    (1.0, 50.0, 5.5, 0.40, 1.75),
    (0.8, 340.0, 6.3, 2.90, 0.27),
    (0.8, 160.0, 6.3, 0.65, 1.21),
    (0.8, 35.0, 6.3, 0.30, 2.62),
)
TABLE1_FIT_ROWS = (0, 1, 3, 4)


def _row_trap(row, species, n_ions=2, B0=1.0):
    return TrapParams(TWO_PI * row[0] * 1e6, n_ions, species, row[1], B0)


def fit_kappa(species: IonSpecies, rows=TABLE1_ROWS, fit_rows=TABLE1_FIT_ROWS) -> float:
    """Least-squares kappa matching tabulated two-ion J12 values."""
    num = den = 0.0
    for idx in fit_rows:
        trap = _row_trap(rows[idx], species)
        modes, _ = chain(trap, 1.0)
        f = j_coupling_matrix(trap, modes, 1.0)[0, 1]
        target = rows[idx][3] * 1e3
        num += f * target
        den += f * f
    return num / den


@dataclass(frozen=True)
class Table1Row:
    nu1_hz: float
    b_t_per_m: float
    dz_um: float
    dz_um_table: float
    j_krad_s: float
    j_krad_s_table: float
    t_ms_pi_over_j: float
    t_ms_table_relation: float
    t_ms_table: float
    tj_table: float
    epsilon: float
    flags: tuple


def table1(species: IonSpecies, kappa: float = KAPPA_DEFAULT, j_tol: float = 0.05, tj_tol: float = 0.02):
    """Recompute the two-ion parameter table with the calibrated coupling."""
    out = []
    for row in TABLE1_ROWS:
        trap = _row_trap(row, species)
        modes, j = chain(trap, kappa)
        dz = min_spacing(modes.positions)
        j12 = j[0, 1]
        eps, _ = lamb_dicke_epsilon(trap)
        tj = row[3] * row[4]
        flags = []
        if abs(j12 / (row[3] * 1e3) - 1) > j_tol:
            flags.append("INCONSISTENT_B2")
        if abs(tj / (math.pi / 4) - 1) > tj_tol:
            flags.append("TJ_NOT_PI_OVER_4")
        if eps > EPS_MAX_DEFAULT:
            flags.append("EPSILON_ABOVE_MAX")
        out.append(
            Table1Row(
                nu1_hz=row[0] * 1e6,
                b_t_per_m=row[1],
                dz_um=dz * 1e6,
                dz_um_table=row[2],
                j_krad_s=j12 / 1e3,
                j_krad_s_table=row[3],
                t_ms_pi_over_j=math.pi / j12 * 1e3,
                t_ms_table_relation=math.pi / (4 * j12) * 1e3,
                t_ms_table=row[4],
                tj_table=tj,
                epsilon=eps,
                flags=tuple(flags),
            )
        )
    return out
