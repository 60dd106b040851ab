"""Finite-dimensional spin algebra.

Operators are plain complex ``numpy`` arrays. The basis of a composite
system is described by a list of :class:`SpinSpec`; within each subsystem
states run m = +j, ..., -j and the leftmost subsystem varies slowest.
All frequencies handed to this module are angular (rad/s).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

HERMITIAN_RTOL = 1e-12
UNITARY_ATOL = 1e-10
MAX_DIM = 4096



class DimensionError(ValueError):
    """Operator too large for dense exponentiation."""

@dataclass(frozen=True)
class SpinSpec:
    label: str
    j: Fraction

    def __post_init__(self):
        j = Fraction(self.j).limit_denominator(2)
        if j < 0 or (2 * j).denominator != 1:
            raise ValueError(f"spin j must be a non-negative half-integer, got {self.j}")
        object.__setattr__(self, "j", j)

    @property
    def dim(self) -> int:
        return int(2 * self.j + 1)

    @property
    def m_values(self) -> np.ndarray:
        """Magnetic quantum numbers in basis order (+j first)."""
        return float(self.j) - np.arange(self.dim)


@dataclass(frozen=True)
class SpinOps:
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    plus: np.ndarray
    minus: np.ndarray


def angular_momentum_ops(spec: SpinSpec) -> SpinOps:
    """Jx, Jy, Jz, J+ and J- for a single spin, in the +j..-j basis."""
    j = float(spec.j)
    m = spec.m_values
    # <m+1|J+|m> sits one row above the diagonal since m decreases with index
    ladder = np.sqrt(j * (j + 1) - m[1:] * (m[1:] + 1))
    jp = np.diag(ladder, k=1).astype(complex)
    jm = jp.conj().T
    jz = np.diag(m).astype(complex)
    jx = 0.5 * (jp + jm)
    jy = -0.5j * (jp - jm)
    return SpinOps(jx, jy, jz, jp, jm)


def layout_dim(layout: Sequence[SpinSpec]) -> int:
    return int(np.prod([s.dim for s in layout])) if layout else 1


def embed(op: np.ndarray, slot: int, layout: Sequence[SpinSpec]) -> np.ndarray:
    """Kronecker-embed a single-subsystem operator into ``layout``."""
    if not 0 <= slot < len(layout):
        raise IndexError(f"slot {slot} out of range for {len(layout)} subsystems")
    op = np.asarray(op)
    if op.shape != (layout[slot].dim, layout[slot].dim):
        raise ValueError(
            f"operator shape {op.shape} does not match subsystem "
            f"{layout[slot].label} of dimension {layout[slot].dim}"
        )
    left = layout_dim(layout[:slot])
    right = layout_dim(layout[slot + 1:])
    return np.kron(np.kron(np.eye(left), op), np.eye(right))


def embed_diag(diag: np.ndarray, slot: int, layout: Sequence[SpinSpec]) -> np.ndarray:
    """Diagonal of ``embed(np.diag(diag), slot, layout)`` without forming matrices."""
    left = layout_dim(layout[:slot])
    right = layout_dim(layout[slot + 1:])
    return np.kron(np.kron(np.ones(left), np.asarray(diag)), np.ones(right))


def is_hermitian(h: np.ndarray, rtol: float = HERMITIAN_RTOL) -> bool:
    scale = max(np.max(np.abs(h)), 1.0) if h.size else 1.0
    return bool(np.max(np.abs(h - h.conj().T), initial=0.0) <= rtol * scale)


def is_unitary(u: np.ndarray, atol: float = UNITARY_ATOL) -> bool:
    eye = np.eye(u.shape[0])
    return bool(np.max(np.abs(u.conj().T @ u - eye), initial=0.0) <= atol)


def mat_exp_hermitian(h: np.ndarray, t: float) -> np.ndarray:
    """Return exp(-i h t) for Hermitian ``h`` via eigendecomposition.

    Diagonal input short-circuits to an elementwise exponential.
    """
    h = np.asarray(h)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError("expected a square matrix")
    if h.shape[0] > MAX_DIM:
        raise DimensionError(f"dimension {h.shape[0]} exceeds supported maximum {MAX_DIM}")
    if not is_hermitian(h):
        raise ValueError("matrix is not Hermitian")
    d = np.diag(h)
    if np.count_nonzero(h - np.diag(d)) == 0:
        return np.diag(np.exp(-1j * d.real * t))
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w * t)) @ v.conj().T


def expm_series(a: np.ndarray) -> np.ndarray:
    """exp(a) by scaling and squaring with a truncated Taylor series.

    Slow and general; kept as an independent check on the eigen route.
    """
    norm = np.max(np.sum(np.abs(a), axis=1), initial=0.0)
    s = max(0, int(np.ceil(np.log2(norm))) + 1) if norm > 0 else 0
    x = a / 2**s
    out = np.eye(a.shape[0], dtype=complex)
    term = np.eye(a.shape[0], dtype=complex)
    for k in range(1, 30):
        term = term @ x / k
        out = out + term
    for _ in range(s):
        out = out @ out
    return out


def process_fidelity(u: np.ndarray, v: np.ndarray, subspace: np.ndarray | None = None) -> float:
    """|tr(P U^dag V P)| / rank(P), insensitive to global phase.

    ``subspace`` is either a projector (square, same size as ``u``) or an
    isometry whose columns span the subspace.
    """
    u = np.asarray(u)
    v = np.asarray(v)
    if u.shape != v.shape or u.shape[0] != u.shape[1]:
        raise ValueError(f"shape mismatch: {u.shape} vs {v.shape}")
    if subspace is None:
        if not (is_unitary(u) and is_unitary(v)):
            raise ValueError("process_fidelity requires unitary operands")
        return float(min(1.0, abs(np.trace(u.conj().T @ v)) / u.shape[0]))
    p = np.asarray(subspace)
    if p.shape == u.shape and np.allclose(p @ p, p) and np.allclose(p, p.conj().T):
        w, vecs = np.linalg.eigh(p)
        iso = vecs[:, w > 0.5]
    else:
        iso = p
    uu = iso.conj().T @ u @ iso
    vv = iso.conj().T @ v @ iso
    rank = iso.shape[1]
    if not (is_unitary(uu, 1e-6) or is_unitary(vv, 1e-6)):
        raise ValueError("neither operand is unitary on the given subspace")
    return float(min(1.0, abs(np.trace(uu.conj().T @ vv)) / rank))


def trace_distance(u: np.ndarray, v: np.ndarray) -> float:
    """Normalised trace-norm distance ||U - V||_1 / (2 dim), phase sensitive."""
    s = np.linalg.svd(np.asarray(u) - np.asarray(v), compute_uv=False)
    return float(np.sum(s) / (2 * u.shape[0]))


def random_hermitian(dim: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return scale * 0.5 * (a + a.conj().T)


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary from the QR of a complex Gaussian matrix."""
    z = (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))
