import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize

from ionspin.ion import ca43_defaults
from ionspin.trap import (
    TABLE1_ROWS, TrapParams, chain, dimensionless_positions, equilibrium_positions, feasibility_report,
    fit_kappa, j_coupling_matrix, lamb_dicke_epsilon, min_spacing, normal_modes, table1,
)

CA = ca43_defaults()
MHZ = 2 * math.pi * 1e6


def trap(n=2, nu=1.0, b=450.0):
    return TrapParams(nu * MHZ, n, CA, b)


def _energy(u):
    u = np.asarray(u)
    e = 0.5 * np.sum(u**2)
    for i in range(u.size):
        for j in range(i + 1, u.size):
            e += 1 / abs(u[i] - u[j])
    return e


def test_two_ion_spacing():
    assert min_spacing(equilibrium_positions(trap())) == pytest.approx(5.46e-6, rel=2e-3)
    assert min_spacing(equilibrium_positions(trap(nu=0.8))) == pytest.approx(6.33e-6, rel=2e-3)


def test_three_ions_against_direct_minimisation():
    res = minimize(_energy, [-1.2, 0.1, 1.3], method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 20000})
    oracle = np.sort(res.x)
    np.testing.assert_allclose(dimensionless_positions(3), oracle, atol=1e-6)
    np.testing.assert_allclose(dimensionless_positions(3), [-1.0772, 0, 1.0772], atol=1e-4)


def _fd_hessian(u, h=1e-5):
    n = u.size
    out = np.zeros((n, n))
    for a in range(n):
        for b in range(n):
            ea, eb = np.eye(n)[a] * h, np.eye(n)[b] * h
            out[a, b] = (_energy(u + ea + eb) - _energy(u + ea - eb) - _energy(u - ea + eb) + _energy(u - ea - eb)) / (4 * h * h)
    return out


@pytest.mark.parametrize("n", [2, 3, 4])
def test_mode_frequencies_against_finite_difference(n):
    t = trap(n)
    modes = normal_modes(t, equilibrium_positions(t))
    oracle = np.sqrt(np.linalg.eigvalsh(_fd_hessian(dimensionless_positions(n))))
    np.testing.assert_allclose(modes.mode_freqs / t.nu1, oracle, rtol=1e-5)


def test_known_mode_ratios():
    m2 = normal_modes(trap(2), equilibrium_positions(trap(2)))
    np.testing.assert_allclose(m2.mode_freqs / trap().nu1, [1, math.sqrt(3)], rtol=1e-10)
    m3 = normal_modes(trap(3), equilibrium_positions(trap(3)))
    np.testing.assert_allclose(m3.mode_freqs / trap().nu1, [1, math.sqrt(3), math.sqrt(29 / 5)], rtol=1e-10)


@pytest.mark.parametrize("n", range(2, 11))
def test_com_mode_is_lowest_and_vectors_orthonormal(n):
    t = trap(n)
    modes = normal_modes(t, equilibrium_positions(t))
    assert abs(modes.mode_freqs[0] / t.nu1 - 1) < 1e-10
    np.testing.assert_allclose(np.sum(modes.mode_vectors**2, axis=0), 1, atol=1e-12)


def test_j_values_and_symmetry():
    _, j = chain(trap())
    assert j[0, 1] == pytest.approx(3.25e3, rel=0.05)
    _, j4 = chain(trap(nu=0.8, b=340.0))
    assert j4[0, 1] == pytest.approx(2.90e3, rel=0.05)
    _, j0 = chain(trap(b=0.0))
    assert np.all(j0 == 0)
    _, j5 = chain(trap(5, b=300.0))
    np.testing.assert_allclose(j5, j5.T)
    assert np.all(np.diag(j5) == 0)


def test_j_closed_form_two_ions():
    # COM + stretch: J = k (h g b)^2 / (hbar m) (1/2nu^2 - 1/(2 * 3 nu^2))
    import scipy.constants as sc

    t = trap()
    pref = 0.0418 * (sc.h * CA.electron_gamma * t.gradient_b) ** 2 / (sc.hbar * CA.mass)
    expected = pref * (0.5 / t.nu1**2 - 0.5 / (3 * t.nu1**2))
    assert chain(t)[1][0, 1] == pytest.approx(expected, rel=1e-10)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.5, 3.0), st.floats(0.5, 2.0))
def test_j_scaling_laws(c, nu):
    base = chain(trap(nu=nu))[1][0, 1]
    assert chain(trap(nu=nu, b=450 * c))[1][0, 1] == pytest.approx(c * c * base, rel=1e-12)
    assert chain(trap(nu=nu * c))[1][0, 1] == pytest.approx(base / c**2, rel=1e-9)


def test_kappa_fit():
    assert fit_kappa(CA) == pytest.approx(0.0418, rel=2e-3)


def test_lamb_dicke():
    eps, b_max = lamb_dicke_epsilon(trap())
    assert b_max == pytest.approx(455, rel=0.05)
    assert lamb_dicke_epsilon(trap(b=455.0))[0] == pytest.approx(0.097, abs=0.002)
    e1 = lamb_dicke_epsilon(trap(2, b=200.0))[0]
    e2 = lamb_dicke_epsilon(trap(8, b=400.0))[0]
    assert e2 == pytest.approx(e1, rel=1e-12)
    bm = [lamb_dicke_epsilon(trap(nu=nu))[1] for nu in (0.5, 1.0, 1.5)]
    assert bm[0] < bm[1] < bm[2]
    assert bm[2] / bm[0] == pytest.approx(3**1.5, rel=1e-12)


def test_feasibility_examples():
    rep = feasibility_report(trap(), 1e6, 1e-3)
    assert rep.addressing_ok and rep.rabi_ok and rep.ok
    assert rep.electron_separation_hz == pytest.approx(28.02e9 * 450 * rep.dz_min)
    assert rep.electron_separation_hz == pytest.approx(69.3e6, rel=0.02)
    assert rep.delta_b_max_tesla == pytest.approx(3.6e-9, rel=0.02)
    assert 1e-9 <= rep.delta_b_max_tesla <= 1e-8
    bad = feasibility_report(trap(), 20e6, 1e-3)
    assert not bad.rabi_ok and bad.messages


def test_table1():
    rows = table1(CA, fit_kappa(CA))
    for row, ref in zip(rows, TABLE1_ROWS):
        assert row.dz_um == pytest.approx(ref[2], rel=0.02)
    for k in (0, 1, 3, 4):
        assert rows[k].j_krad_s == pytest.approx(TABLE1_ROWS[k][3], rel=0.05)
    assert "INCONSISTENT_B2" in rows[2].flags and "INCONSISTENT_B2" in rows[5].flags
    assert rows[2].j_krad_s == pytest.approx(0.040, rel=0.05)
    assert rows[0].t_ms_pi_over_j == pytest.approx(0.97, rel=0.01)
