"""Quantum states and channels in three interconvertible representations.

Conventions shared by the whole package:

* superoperators act on column-stacked density matrices (see ``linalg.vec``);
* the Choi matrix is unnormalized, ``C = sum_ij |i><j| (x) M(|i><j|)``, so a
  trace-preserving map has ``Tr_out C = I`` and ``Tr C = dim``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .linalg import DimensionError, partial_trace, unvec, vec

STATE_HERMITIAN_TOL = 1e-12
STATE_TRACE_TOL = 1e-12
PSD_TOL = 1e-10
KRAUS_EIG_CUTOFF = 1e-12


class InvalidStateError(ValueError):
    """Raised when a matrix fails the density-matrix invariants."""


class NotCompletelyPositiveError(ValueError):
    """Raised when Kraus extraction meets a Choi matrix with a negative eigenvalue."""

    def __init__(self, eigenvalue: float):
        super().__init__(f"map is not completely positive: Choi eigenvalue {eigenvalue:.3e}")
        self.eigenvalue = eigenvalue


# --------------------------------------------------------------------------
# states


def check_density_matrix(
    rho: np.ndarray,
    herm_tol: float = STATE_HERMITIAN_TOL,
    trace_tol: float = STATE_TRACE_TOL,
    psd_tol: float = PSD_TOL,
) -> np.ndarray:
    """Return ``rho`` as an array, raising InvalidStateError if it is not a state."""
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise InvalidStateError(f"density matrix must be square, got shape {rho.shape}")
    herm = np.max(np.abs(rho - rho.conj().T)) if rho.size else 0.0
    if herm > herm_tol:
        raise InvalidStateError(f"not Hermitian: max |rho - rho^dag| = {herm:.3e}")
    tr = np.trace(rho)
    if abs(tr - 1.0) > trace_tol:
        raise InvalidStateError(f"trace {tr.real:.15g} differs from 1")
    lmin = np.linalg.eigvalsh((rho + rho.conj().T) / 2).min()
    if lmin < -psd_tol:
        raise InvalidStateError(f"not positive semidefinite: min eigenvalue {lmin:.3e}")
    return rho


def ket(index: int, dim: int = 2) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[index] = 1.0
    return v


def projector(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def random_density_matrix(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Random mixed state from a Ginibre matrix (Hilbert-Schmidt measure for full rank)."""
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_pure_state(dim: int, rng: np.random.Generator) -> np.ndarray:
    psi = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return psi / np.linalg.norm(psi)


def haar_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR of a complex Gaussian matrix with phase fix."""
    z = (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / math.sqrt(2)
    q, r = np.linalg.qr(z)
    phases = np.diag(r) / np.abs(np.diag(r))
    return q * phases


def is_unitary(u: np.ndarray, tol: float = 1e-12) -> bool:
    u = np.asarray(u)
    return u.ndim == 2 and u.shape[0] == u.shape[1] and np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))) <= tol


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Half the trace norm of ``a - b``, from Hermitian eigenvalues."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise DimensionError(f"trace_distance: shapes {a.shape} and {b.shape} differ")
    diff = a - b
    diff = (diff + diff.conj().T) / 2
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(diff))))


# --------------------------------------------------------------------------
# channel representations


def _dim_from_square(n: int) -> int:
    d = math.isqrt(n)
    if d * d != n:
        raise DimensionError(f"{n} is not a perfect square")
    return d


@dataclass(frozen=True, eq=False)
class Superoperator:
    """Matrix of a linear map acting on column-stacked operators."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError(f"superoperator must be square, got shape {m.shape}")
        _dim_from_square(m.shape[0])
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return math.isqrt(self.matrix.shape[0])

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return apply_superop(self.matrix, rho)

    def __matmul__(self, other: "Superoperator") -> "Superoperator":
        return Superoperator(self.matrix @ other.matrix)


@dataclass(frozen=True, eq=False)
class KrausChannel:
    operators: tuple[np.ndarray, ...]

    def __post_init__(self):
        ops = tuple(np.asarray(k, dtype=complex) for k in self.operators)
        if not ops:
            raise ValueError("a Kraus channel needs at least one operator")
        shape = ops[0].shape
        if len(shape) != 2 or shape[0] != shape[1] or any(k.shape != shape for k in ops):
            raise DimensionError("Kraus operators must be square and share one shape")
        object.__setattr__(self, "operators", ops)

    @property
    def dim(self) -> int:
        return self.operators[0].shape[0]

    def completeness_deviation(self) -> float:
        s = sum(k.conj().T @ k for k in self.operators)
        return float(np.max(np.abs(s - np.eye(self.dim))))


@dataclass(frozen=True, eq=False)
class ChoiMatrix:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError(f"Choi matrix must be square, got shape {m.shape}")
        _dim_from_square(m.shape[0])
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return math.isqrt(self.matrix.shape[0])


def as_matrix(m) -> np.ndarray:
    """Superoperator matrix from a Superoperator or a bare array."""
    return m.matrix if isinstance(m, Superoperator) else np.asarray(m)


def apply_superop(m, rho: np.ndarray) -> np.ndarray:
    rho = np.asarray(rho)
    return unvec(as_matrix(m) @ vec(rho), rho.shape[0])


def unitary_superop(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u)
    return np.kron(u.conj(), u)


def identity_superop(dim: int) -> np.ndarray:
    return np.eye(dim * dim, dtype=complex)


def transpose_superop(dim: int) -> np.ndarray:
    """Matrix of rho -> rho^T, the standard positive but not CP map."""
    m = np.zeros((dim * dim, dim * dim), dtype=complex)
    for i in range(dim):
        for j in range(dim):
            m[j + i * dim, i + j * dim] = 1.0
    return m


def superop_to_choi(s) -> np.ndarray:
    s = as_matrix(s)
    d = _dim_from_square(s.shape[0])
    # s[b*d + a, j*d + i] = M(|i><j|)[a, b]  ->  C[(i, a), (j, b)]
    return s.reshape(d, d, d, d).transpose(3, 1, 2, 0).reshape(d * d, d * d)


def choi_to_superop(c) -> np.ndarray:
    c = c.matrix if isinstance(c, ChoiMatrix) else np.asarray(c)
    d = _dim_from_square(c.shape[0])
    return c.reshape(d, d, d, d).transpose(3, 1, 2, 0).reshape(d * d, d * d)


def kraus_to_superop(ops: Sequence[np.ndarray]) -> np.ndarray:
    return sum(np.kron(np.conj(k), k) for k in ops)


def kraus_to_choi(ops: Sequence[np.ndarray]) -> np.ndarray:
    vs = [np.asarray(k).T.reshape(-1) for k in ops]
    return sum(np.outer(v, v.conj()) for v in vs)


def choi_to_kraus(c, psd_tol: float = PSD_TOL, cutoff: float = KRAUS_EIG_CUTOFF) -> list[np.ndarray]:
    """Kraus operators from the eigendecomposition of a Choi matrix."""
    c = c.matrix if isinstance(c, ChoiMatrix) else np.asarray(c)
    d = _dim_from_square(c.shape[0])
    w, v = np.linalg.eigh((c + c.conj().T) / 2)
    if w[0] < -psd_tol:
        raise NotCompletelyPositiveError(float(w[0]))
    return [math.sqrt(lam) * v[:, k].reshape(d, d).T for k, lam in enumerate(w) if lam > cutoff]


def channel_convert(x, to: str):
    """Convert between ``"superop"``, ``"kraus"`` and ``"choi"`` representations."""
    if isinstance(x, Superoperator):
        choi = superop_to_choi(x.matrix)
        sup = x.matrix
    elif isinstance(x, ChoiMatrix):
        choi = x.matrix
        sup = choi_to_superop(choi)
    elif isinstance(x, KrausChannel):
        choi = kraus_to_choi(x.operators)
        sup = kraus_to_superop(x.operators)
    else:
        raise TypeError(f"cannot convert object of type {type(x).__name__}")

    if to == "superop":
        return Superoperator(sup)
    if to == "choi":
        return ChoiMatrix(choi)
    if to == "kraus":
        if isinstance(x, KrausChannel):
            return x
        return KrausChannel(tuple(choi_to_kraus(choi)))
    raise ValueError(f"unknown representation {to!r}")


# --------------------------------------------------------------------------
# certification


@dataclass(frozen=True)
class CPTReport:
    min_choi_eig: float
    trace_dev: float
    is_cpt: bool


def trace_deviation(m) -> float:
    """Max-norm deviation of vec(I)^dag M from vec(I)^dag (adjoint map on the identity)."""
    m = as_matrix(m)
    d = _dim_from_square(m.shape[0])
    tr_row = vec(np.eye(d)).conj()
    return float(np.max(np.abs(tr_row @ m - tr_row)))


def cpt_check(m, tol: float = 1e-10) -> CPTReport:
    m = as_matrix(m)
    choi = superop_to_choi(m)
    lmin = float(np.linalg.eigvalsh((choi + choi.conj().T) / 2)[0])
    tdev = trace_deviation(m)
    return CPTReport(min_choi_eig=lmin, trace_dev=tdev, is_cpt=bool(lmin >= -tol and tdev <= tol))


def batched_cpt_data(maps: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Min Choi eigenvalue and trace deviation for a stack of superoperators."""
    maps = np.asarray(maps)
    n, D, _ = maps.shape
    d = _dim_from_square(D)
    chois = maps.reshape(n, d, d, d, d).transpose(0, 4, 2, 3, 1).reshape(n, D, D)
    chois = (chois + np.conj(np.swapaxes(chois, 1, 2))) / 2
    lmin = np.linalg.eigvalsh(chois)[:, 0]
    tr_row = vec(np.eye(d)).conj()
    tdev = np.max(np.abs(np.einsum("i,nij->nj", tr_row, maps) - tr_row), axis=1)
    return lmin, tdev


def reduced_choi_partial_trace(choi: np.ndarray) -> np.ndarray:
    """Tr over the output factor; equals the identity for trace-preserving maps."""
    d = _dim_from_square(np.asarray(choi).shape[0])
    return partial_trace(choi, [d, d], keep=[0])
