from fractions import Fraction

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from ionspin.quantum import (
    DimensionError, SpinSpec, angular_momentum_ops, embed, embed_diag, expm_series, is_hermitian,
    is_unitary, layout_dim, mat_exp_hermitian, process_fidelity, random_hermitian, random_unitary,
    trace_distance,
)

HALF, SEVEN_HALVES = Fraction(1, 2), Fraction(7, 2)
S = SpinSpec("S", HALF)
I = SpinSpec("I", SEVEN_HALVES)


def test_spin_half_matrices():
    ops = angular_momentum_ops(S)
    np.testing.assert_allclose(ops.z, np.diag([0.5, -0.5]))
    np.testing.assert_allclose(ops.x, [[0, 0.5], [0.5, 0]])


def test_ladder_element_seven_halves():
    ops = angular_momentum_ops(I)
    jp = ops.x + 1j * ops.y
    # basis m = +7/2 ... -7/2: <7/2|J+|5/2> sits at (0, 1)
    assert jp[0, 1] == pytest.approx(np.sqrt(7))
    assert ops.z.shape == (8, 8)
    assert np.trace(ops.z) == pytest.approx(0)


@pytest.mark.parametrize("j", [Fraction(1, 2), Fraction(3, 2), Fraction(7, 2)])
def test_commutation(j):
    ops = angular_momentum_ops(SpinSpec("J", j))
    comm = ops.x @ ops.y - ops.y @ ops.x
    assert np.max(np.abs(comm - 1j * ops.z)) < 1e-12
    casimir = ops.x @ ops.x + ops.y @ ops.y + ops.z @ ops.z
    np.testing.assert_allclose(casimir, float(j * (j + 1)) * np.eye(ops.z.shape[0]), atol=1e-12)


def test_embed_examples():
    layout = [S, I]
    sz = embed(angular_momentum_ops(S).z, 0, layout)
    assert sz.shape == (16, 16)
    assert np.count_nonzero(sz - np.diag(np.diag(sz))) == 0
    np.testing.assert_allclose(np.diag(sz)[:8], 0.5)
    iz = np.diag(embed(angular_momentum_ops(I).z, 1, layout)).real
    m = np.arange(3.5, -4, -1)
    np.testing.assert_allclose(iz, np.concatenate([m, m]))
    np.testing.assert_allclose(embed_diag(m, 1, layout), iz)


def test_embed_errors():
    with pytest.raises(IndexError):
        embed(np.eye(2), 2, [S, I])
    with pytest.raises(ValueError):
        embed(np.eye(3), 0, [S, I])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2), st.integers(0, 2**31 - 1))
def test_embed_trace_and_linearity(slot, seed):
    rng = np.random.default_rng(seed)
    layout = [S, SpinSpec("T", Fraction(1)), S]
    d = layout[slot].dim
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    b = rng.normal(size=(d, d))
    rest = layout_dim(layout) // d
    assert np.trace(embed(a, slot, layout)) == pytest.approx(np.trace(a) * rest)
    np.testing.assert_allclose(embed(a + 2.5 * b, slot, layout), embed(a, slot, layout) + 2.5 * embed(b, slot, layout), atol=1e-12)
    other = (slot + 1) % 3
    c = rng.normal(size=(layout[other].dim,) * 2)
    x, y = embed(a, slot, layout), embed(c, other, layout)
    np.testing.assert_allclose(x @ y, y @ x, atol=1e-12)


def test_expm_examples():
    w, t = 2.3, 0.7
    np.testing.assert_allclose(mat_exp_hermitian(np.diag([w, -w]), t), np.diag([np.exp(-1j * w * t), np.exp(1j * w * t)]))
    sx2 = 2 * angular_momentum_ops(S).x
    np.testing.assert_allclose(mat_exp_hermitian(np.pi * sx2 / 2, 1.0), -1j * sx2, atol=1e-10)


def test_expm_against_independent_oracles():
    rng = np.random.default_rng(5)
    h = random_hermitian(16, rng)
    u = mat_exp_hermitian(h, 0.9)
    assert is_unitary(u)
    np.testing.assert_allclose(u, expm_series(-0.9j * h), atol=1e-10)
    np.testing.assert_allclose(u, scipy.linalg.expm(-0.9j * h), atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_expm_group_property(seed, t1, t2):
    h = random_hermitian(8, np.random.default_rng(seed))
    lhs = mat_exp_hermitian(h, t1) @ mat_exp_hermitian(h, t2)
    assert np.max(np.abs(lhs - mat_exp_hermitian(h, t1 + t2))) < 1e-9


def test_expm_rejects_bad_input():
    with pytest.raises(ValueError):
        mat_exp_hermitian(np.array([[0, 1], [0, 0]], complex), 1.0)
    with pytest.raises(DimensionError):
        mat_exp_hermitian(np.zeros((4097, 4097)), 1.0)
    assert not is_hermitian(np.array([[0, 1j], [1j, 0]]))


def test_fidelity_examples():
    rng = np.random.default_rng(1)
    u = random_unitary(4, rng)
    assert process_fidelity(u, u) == pytest.approx(1)
    assert process_fidelity(u, np.exp(0.4j) * u) == pytest.approx(1)
    assert process_fidelity(np.eye(2), np.array([[0, 1], [1, 0]])) == pytest.approx(0)
    assert trace_distance(u, u) == 0


def test_fidelity_on_subspace():
    # unitary on a 2-dim subspace embedded in 3 dims
    v = np.diag([1, 1j, 0.3])
    iso = np.eye(3)[:, :2]
    assert process_fidelity(np.diag([1, 1j]), iso.T @ v @ iso) == pytest.approx(1)
    assert process_fidelity(np.diag([1, 1j, 5.0]), v, subspace=iso) == pytest.approx(1)
