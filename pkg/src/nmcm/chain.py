"""Discrete collision chain with stochastic partial-swap ancilla collisions.

The system S meets ancilla 1, 2, ... in turn through a fixed unitary; between
two system collisions neighbouring ancillas exchange their states with
probability ``p``.  Three evaluation routes are provided and cross-checked:

* ``simulate_full_chain``: literal composition on the joint S + ancillas state;
* ``simulate_recursive_joint``: the joint recursion in terms of earlier states;
* ``reduced_recursion``: the same recursion traced down to S, using the maps
  ``E_j[rho] = Tr_A U^j (rho (x) |a><a|) U^j^dag``.

Tensor layout of joint states: system first, then ancillas 1..n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    DimensionError,
    check_density_matrix,
    expm,
    exchange_hamiltonian,
    identity_superop,
    is_unitary,
    partial_trace,
    projector,
    unvec,
    vec,
)

DEFAULT_MAX_DIM = 4096


class ResourceLimitError(RuntimeError):
    """Joint chain dimension exceeds the configured cap."""


@dataclass(frozen=True, eq=False)
class CollisionChainConfig:
    n_steps: int
    p: float
    tau: float
    sa_unitary: np.ndarray
    system_init: np.ndarray
    ancilla_init: np.ndarray
    max_dim: int = DEFAULT_MAX_DIM

    def __post_init__(self):
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"n_steps must be a positive integer, got {self.n_steps}")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"swap probability p={self.p} outside [0, 1]")
        if not self.tau > 0:
            raise ValueError(f"collision time tau={self.tau} must be positive")
        rho = check_density_matrix(self.system_init)
        psi = np.asarray(self.ancilla_init, dtype=complex).reshape(-1)
        if abs(np.linalg.norm(psi) - 1.0) > 1e-12:
            raise ValueError("ancilla_init must be a normalized state vector")
        u = np.asarray(self.sa_unitary, dtype=complex)
        if u.shape != (rho.shape[0] * psi.size,) * 2:
            raise DimensionError(
                f"sa_unitary shape {u.shape} does not match dim_S*dim_A = {rho.shape[0] * psi.size}"
            )
        if not is_unitary(u, 1e-12):
            raise ValueError("sa_unitary is not unitary within 1e-12")
        object.__setattr__(self, "n_steps", int(self.n_steps))
        object.__setattr__(self, "system_init", rho)
        object.__setattr__(self, "ancilla_init", psi)
        object.__setattr__(self, "sa_unitary", u)

    @property
    def dim_s(self) -> int:
        return self.system_init.shape[0]

    @property
    def dim_a(self) -> int:
        return self.ancilla_init.size

    @property
    def joint_dim(self) -> int:
        return self.dim_s * self.dim_a**self.n_steps

    @classmethod
    def from_hamiltonian(cls, hamiltonian, n_steps, p, tau, system_init, ancilla_init=None, **kw):
        u = expm(-1j * np.asarray(hamiltonian) * tau)
        if ancilla_init is None:
            d_a = u.shape[0] // np.asarray(system_init).shape[0]
            ancilla_init = np.eye(d_a)[0]
        return cls(n_steps=n_steps, p=p, tau=tau, sa_unitary=u,
                   system_init=system_init, ancilla_init=ancilla_init, **kw)

    @classmethod
    def exchange(cls, n_steps, p, tau, g=1.0, system_init=None, **kw):
        """Qubit chain with the resonant exchange coupling, ancillas in |0>."""
        if system_init is None:
            system_init = projector(np.array([math.sqrt(0.2), math.sqrt(0.8)]))
        return cls.from_hamiltonian(exchange_hamiltonian(g), n_steps, p, tau, system_init, **kw)


@dataclass(frozen=True, eq=False)
class ChainState:
    step: int
    joint: np.ndarray | None = None
    reduced: np.ndarray | None = None


# --------------------------------------------------------------------------
# joint-state machinery


def _check_cap(cfg: CollisionChainConfig) -> None:
    if cfg.joint_dim > cfg.max_dim:
        raise ResourceLimitError(
            f"joint dimension {cfg.joint_dim} = {cfg.dim_s}*{cfg.dim_a}^{cfg.n_steps} "
            f"exceeds the cap max_dim={cfg.max_dim}"
        )


def _dims(cfg: CollisionChainConfig) -> list[int]:
    return [cfg.dim_s] + [cfg.dim_a] * cfg.n_steps


def initial_joint_state(cfg: CollisionChainConfig, rho0: np.ndarray | None = None) -> np.ndarray:
    """``rho0 (x) |a><a|^{(x) n}`` as a matrix."""
    rho0 = cfg.system_init if rho0 is None else np.asarray(rho0, dtype=complex)
    out = rho0
    anc = projector(cfg.ancilla_init)
    for _ in range(cfg.n_steps):
        out = np.kron(out, anc)
    return out


def _apply_local(t: np.ndarray, op: np.ndarray, sites: list[int], n_sites: int) -> np.ndarray:
    """Apply ``op (.) op^dag`` on the given sites of a density tensor."""
    k = len(sites)
    dims = t.shape[:n_sites]
    local = [dims[s] for s in sites]
    op_t = op.reshape(local + local)
    t = np.tensordot(op_t, t, axes=(list(range(k, 2 * k)), sites))
    t = np.moveaxis(t, list(range(k)), sites)
    bra = [s + n_sites for s in sites]
    t = np.tensordot(op_t.conj(), t, axes=(list(range(k, 2 * k)), bra))
    return np.moveaxis(t, list(range(k)), bra)


def _swap_sites(t: np.ndarray, i: int, j: int, n_sites: int) -> np.ndarray:
    perm = list(range(2 * n_sites))
    perm[i], perm[j] = perm[j], perm[i]
    perm[i + n_sites], perm[j + n_sites] = perm[j + n_sites], perm[i + n_sites]
    return t.transpose(perm)


def _partial_swap_tensor(t: np.ndarray, p: float, i: int, j: int, n_sites: int) -> np.ndarray:
    if p == 0.0:
        return t
    swapped = _swap_sites(t, i, j, n_sites)
    if p == 1.0:
        return swapped
    return (1.0 - p) * t + p * swapped


def partial_swap_map(p: float, dims: tuple[int, int] = (2, 2)) -> np.ndarray:
    """Superoperator of ``sigma -> (1-p) sigma + p S sigma S`` on two ancillas."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"swap probability p={p} outside [0, 1]")
    d1, d2 = dims
    if d1 != d2:
        raise DimensionError("a swap needs two ancillas of equal dimension")
    swap = swap_operator(d1)
    return (1.0 - p) * identity_superop(d1 * d2) + p * np.kron(swap.conj(), swap)


def swap_operator(dim: int) -> np.ndarray:
    s = np.zeros((dim * dim, dim * dim))
    for a in range(dim):
        for b in range(dim):
            s[b * dim + a, a * dim + b] = 1.0
    return s


def _full_chain_tensors(cfg: CollisionChainConfig, rho0: np.ndarray) -> list[np.ndarray]:
    dims = _dims(cfg)
    n_sites = len(dims)
    t = initial_joint_state(cfg, rho0).reshape(dims + dims)
    u = cfg.sa_unitary
    out = [t]
    for k in range(1, cfg.n_steps + 1):
        if k > 1:
            t = _partial_swap_tensor(t, cfg.p, k - 1, k, n_sites)
        t = _apply_local(t, u, [0, k], n_sites)
        out.append(t)
    return out


def simulate_full_chain(cfg: CollisionChainConfig, validate: bool = True) -> list[ChainState]:
    """Joint states sigma_0..sigma_n by literal composition of the collisions."""
    _check_cap(cfg)
    dim = cfg.joint_dim
    states = []
    for k, t in enumerate(_full_chain_tensors(cfg, cfg.system_init)):
        sigma = t.reshape(dim, dim)
        if validate:
            check_density_matrix(sigma, herm_tol=1e-10, trace_tol=1e-10)
        states.append(ChainState(step=k, joint=sigma))
    return states


def _recursive_joint_matrices(cfg: CollisionChainConfig, rho0: np.ndarray) -> list[np.ndarray]:
    dims = _dims(cfg)
    n_sites = len(dims)
    dim = cfg.joint_dim
    p = cfg.p
    sigma0 = initial_joint_state(cfg, rho0).reshape(dims + dims)
    powers = [np.eye(cfg.sa_unitary.shape[0], dtype=complex)]
    for _ in range(cfg.n_steps):
        powers.append(powers[-1] @ cfg.sa_unitary)

    sig = [sigma0]
    for n in range(1, cfg.n_steps + 1):
        acc = p ** (n - 1) * _apply_local(sig[0], powers[n], [0, n], n_sites)
        for j in range(1, n):
            w = (1.0 - p) * p ** (j - 1)
            if w != 0.0:
                acc = acc + w * _apply_local(sig[n - j], powers[j], [0, n], n_sites)
        sig.append(acc)
    return [s.reshape(dim, dim) for s in sig]


def simulate_recursive_joint(cfg: CollisionChainConfig, validate: bool = True) -> list[ChainState]:
    """Joint states from the recursion over earlier joint states."""
    _check_cap(cfg)
    out = []
    for k, sigma in enumerate(_recursive_joint_matrices(cfg, cfg.system_init)):
        if validate:
            check_density_matrix(sigma, herm_tol=1e-10, trace_tol=1e-10)
        out.append(ChainState(step=k, joint=sigma))
    return out


def system_marginal(cfg: CollisionChainConfig, sigma: np.ndarray) -> np.ndarray:
    return partial_trace(sigma, _dims(cfg), keep=[0])


# --------------------------------------------------------------------------
# reduced dynamics


def map_Ej(j: int, cfg: CollisionChainConfig) -> np.ndarray:
    """Reduced map on S after a coherent interaction of duration j*tau with one ancilla."""
    if int(j) != j or j < 0:
        raise ValueError(f"j must be a non-negative integer, got {j}")
    return _ej_maps(cfg, int(j))[int(j)]


def _ej_maps(cfg: CollisionChainConfig, n: int) -> np.ndarray:
    """Stack of E_0..E_n superoperators on the system."""
    d_s, d_a = cfg.dim_s, cfg.dim_a
    psi = cfg.ancilla_init
    u = cfg.sa_unitary
    out = np.empty((n + 1, d_s * d_s, d_s * d_s), dtype=complex)
    out[0] = identity_superop(d_s)
    power = np.eye(u.shape[0], dtype=complex)
    for j in range(1, n + 1):
        power = power @ u
        # K_k[s', s] = sum_b U^j[(s', k), (s, b)] psi[b]
        kraus = np.einsum("xkyb,b->kxy", power.reshape(d_s, d_a, d_s, d_a), psi)
        out[j] = np.einsum("kab,kcd->acbd", kraus.conj(), kraus).reshape(d_s * d_s, d_s * d_s)
    return out


def reduced_map_recursion(cfg: CollisionChainConfig, n_steps: int | None = None) -> np.ndarray:
    """Dynamical maps Lambda_0..Lambda_n with rho_n = Lambda_n[rho_0]."""
    n = cfg.n_steps if n_steps is None else n_steps
    e = _ej_maps(cfg, n)
    return _recursion(e, cfg.p, e[0], n)


def _recursion(e: np.ndarray, p: float, x0: np.ndarray, n: int) -> np.ndarray:
    """x_n = (1-p) sum_j p^{j-1} E_j x_{n-j} + p^{n-1} E_n x_0 for matrices or vectors."""
    x = np.empty((n + 1,) + x0.shape, dtype=complex)
    x[0] = x0
    j = np.arange(1, n + 1)
    weights = (1.0 - p) * p ** (j - 1.0)
    sub = "jab,jb->a" if x0.ndim == 1 else "jab,jbc->ac"
    for k in range(1, n + 1):
        acc = p ** (k - 1) * (e[k] @ x0)
        if k > 1:
            hist = x[k - 1:0:-1]
            acc = acc + np.einsum(sub, weights[: k - 1, None, None] * e[1:k], hist)
        x[k] = acc
    return x


def reduced_recursion(cfg: CollisionChainConfig, validate: bool = True) -> list[np.ndarray]:
    """System states rho_0..rho_n from the reduced recursion."""
    n = cfg.n_steps
    e = _ej_maps(cfg, n)
    d = cfg.dim_s
    vecs = _recursion(e, cfg.p, vec(cfg.system_init).astype(complex), n)
    states = [unvec(v, d) for v in vecs]
    if validate:
        for rho in states:
            check_density_matrix(rho, herm_tol=1e-10, trace_tol=1e-10)
    return states


@dataclass
class DeltaRecursionReport:
    max_deviation: float
    deviations: list[float] = field(default_factory=list)


def verify_delta_recursion(cfg: CollisionChainConfig) -> DeltaRecursionReport:
    """Compare the step-difference recursion against direct differences of rho_n.

    The leftover history term carries weight ``(1-p) p^(n-2)``; this is what
    subtracting the recursion for ``n-1`` from the one for ``n`` produces.
    """
    if cfg.n_steps < 3:
        raise ValueError("the difference recursion check needs n_steps >= 3")
    n = cfg.n_steps
    p = cfg.p
    e = _ej_maps(cfg, n)
    rho = _recursion(e, p, vec(cfg.system_init).astype(complex), n)
    delta = np.zeros_like(rho)
    delta[1:] = rho[1:] - rho[:-1]
    devs = []
    for k in range(2, n + 1):
        pred = (1.0 - p) * p ** (k - 2) * (e[k - 1] @ rho[1])
        pred = pred + (p ** (k - 1) * e[k] - p ** (k - 2) * e[k - 1]) @ rho[0]
        for j in range(1, k - 1):
            pred = pred + (1.0 - p) * p ** (j - 1) * (e[j] @ delta[k - j])
        devs.append(float(np.max(np.abs(pred - delta[k]))))
    return DeltaRecursionReport(max_deviation=max(devs), deviations=devs)


# --------------------------------------------------------------------------
# dense embeddings for the swap-commutation identities (small chains only)


def embed_sa_unitary(u: np.ndarray, i: int, n_anc: int, d_s: int, d_a: int) -> np.ndarray:
    """Dense matrix of the system-ancilla unitary acting on S and ancilla i (1-based)."""
    dims = [d_s] + [d_a] * n_anc
    dim = math.prod(dims)
    ident = np.eye(dim, dtype=complex).reshape(dims + dims)
    # apply on the ket side only
    op_t = np.asarray(u).reshape(d_s, d_a, d_s, d_a)
    t = np.tensordot(op_t, ident, axes=([2, 3], [0, i]))
    t = np.moveaxis(t, [0, 1], [0, i])
    return t.reshape(dim, dim)


def embed_swap(i: int, j: int, n_anc: int, d_s: int, d_a: int) -> np.ndarray:
    dims = [d_s] + [d_a] * n_anc
    n_sites = len(dims)
    dim = math.prod(dims)
    ident = np.eye(dim).reshape(dims + dims)
    perm = list(range(2 * n_sites))
    perm[i], perm[j] = perm[j], perm[i]
    return ident.transpose(perm).reshape(dim, dim)


def swap_identity_residuals(cfg: CollisionChainConfig, i: int, n_anc: int = 3) -> tuple[float, float]:
    """Max-norm residuals of ``S U_i S = U_{i+1}`` and ``S sigma_0 = sigma_0``."""
    d_s, d_a = cfg.dim_s, cfg.dim_a
    s = embed_swap(i, i + 1, n_anc, d_s, d_a)
    ui = embed_sa_unitary(cfg.sa_unitary, i, n_anc, d_s, d_a)
    uj = embed_sa_unitary(cfg.sa_unitary, i + 1, n_anc, d_s, d_a)
    sigma0 = cfg.system_init
    for _ in range(n_anc):
        sigma0 = np.kron(sigma0, projector(cfg.ancilla_init))
    r1 = float(np.max(np.abs(s @ ui @ s - uj)))
    r2 = float(np.max(np.abs(s @ sigma0 - sigma0)))
    return r1, r2
