"""Common qubit operators and Lindblad generators.

Qubit basis: index 0 is the ground state, index 1 the excited state.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .channels import as_matrix

SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)  # |0><1|
SIGMA_PLUS = SIGMA_MINUS.conj().T
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def exchange_hamiltonian(g: float) -> np.ndarray:
    """Resonant excitation exchange ``g (s+ s- + s- s+)`` on system (x) ancilla."""
    return g * (np.kron(SIGMA_PLUS, SIGMA_MINUS) + np.kron(SIGMA_MINUS, SIGMA_PLUS))


def lindbladian(hamiltonian: np.ndarray | None, jumps: Sequence[np.ndarray], dim: int | None = None) -> np.ndarray:
    """Superoperator of ``-i[H, .] + sum_k (L rho L^dag - {L^dag L, rho}/2)``."""
    if dim is None:
        dim = (hamiltonian if hamiltonian is not None else jumps[0]).shape[0]
    ident = np.eye(dim)
    gen = np.zeros((dim * dim, dim * dim), dtype=complex)
    if hamiltonian is not None:
        h = np.asarray(hamiltonian)
        gen += -1j * (np.kron(ident, h) - np.kron(h.T, ident))
    for jump in jumps:
        jump = np.asarray(jump)
        jdj = jump.conj().T @ jump
        gen += np.kron(jump.conj(), jump) - 0.5 * (np.kron(ident, jdj) + np.kron(jdj.T, ident))
    return gen


def decay_lindbladian(gamma0: float) -> np.ndarray:
    """Zero-temperature spontaneous emission at rate ``gamma0``."""
    return lindbladian(None, [np.sqrt(gamma0) * SIGMA_MINUS], dim=2)


def map_norm(m) -> float:
    """Norm of a superoperator induced by the Hilbert-Schmidt norm (spectral norm)."""
    return float(np.linalg.norm(as_matrix(m), 2))
