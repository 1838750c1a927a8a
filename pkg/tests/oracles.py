"""Reference implementations written independently of the package code."""

import itertools
import math

import numpy as np
import scipy.linalg
from scipy.integrate import solve_ivp


def ptrace_loops(rho, dims, keep):
    dims = list(dims)
    keep = sorted(keep)
    kd = [dims[k] for k in keep]
    out = np.zeros((math.prod(kd), math.prod(kd)), dtype=complex)
    for idx_r in itertools.product(*[range(d) for d in dims]):
        for idx_c in itertools.product(*[range(d) for d in dims]):
            if any(idx_r[i] != idx_c[i] for i in range(len(dims)) if i not in keep):
                continue
            r = np.ravel_multi_index(idx_r, dims)
            c = np.ravel_multi_index(idx_c, dims)
            rr = np.ravel_multi_index([idx_r[k] for k in keep], kd) if kd else 0
            cc = np.ravel_multi_index([idx_c[k] for k in keep], kd) if kd else 0
            out[rr, cc] += rho[r, c]
    return out


def trace_distance_svd(a, b):
    return 0.5 * float(np.sum(np.linalg.svd(np.asarray(a) - np.asarray(b), compute_uv=False)))


def apply_channel_loops(superop, rho):
    """Apply a column-stacked superoperator entrywise."""
    d = rho.shape[0]
    out = np.zeros((d, d), dtype=complex)
    for i in range(d):
        for j in range(d):
            for k in range(d):
                for l in range(d):
                    out[i, j] += superop[i + d * j, k + d * l] * rho[k, l]
    return out


def site_permutation(dims, perm):
    """Dense unitary that moves tensor factor perm[k] to position k."""
    n = math.prod(dims)
    new_dims = [dims[p] for p in perm]
    p_mat = np.zeros((n, n))
    for idx in itertools.product(*[range(d) for d in dims]):
        new_idx = [idx[p] for p in perm]
        p_mat[np.ravel_multi_index(new_idx, new_dims), np.ravel_multi_index(idx, dims)] = 1.0
    return p_mat


def dense_chain(u, rho_s, psi_a, n, p):
    """System states of the partial-swap collision chain with dense matrices."""
    d_s, d_a = rho_s.shape[0], psi_a.size
    dims = [d_s] + [d_a] * n
    sigma = rho_s
    for _ in range(n):
        sigma = np.kron(sigma, np.outer(psi_a, psi_a.conj()))
    rest = math.prod(dims) // (d_s * d_a)

    def on_site(k):
        # bring ancilla k next to the system, act, move back
        perm = [0, k] + [i for i in range(1, n + 1) if i != k]
        pm = site_permutation(dims, perm)
        return pm.T @ np.kron(u, np.eye(rest)) @ pm

    def swap(i, j):
        perm = list(range(n + 1))
        perm[i], perm[j] = perm[j], perm[i]
        return site_permutation(dims, perm)

    states = [ptrace_loops_fast(sigma, dims)]
    for k in range(1, n + 1):
        if k > 1:
            s = swap(k - 1, k)
            sigma = (1 - p) * sigma + p * s @ sigma @ s.T
        uk = on_site(k)
        sigma = uk @ sigma @ uk.conj().T
        states.append(ptrace_loops_fast(sigma, dims))
    return states


def ptrace_loops_fast(sigma, dims):
    d_s = dims[0]
    rest = math.prod(dims[1:])
    out = np.zeros((d_s, d_s), dtype=complex)
    for e in range(rest):
        idx = np.arange(d_s) * rest + e
        out += sigma[np.ix_(idx, idx)]
    return out


def expm_reference(a):
    return scipy.linalg.expm(np.asarray(a))


def pseudomode_amplitude(gamma0, lam, times):
    """Excited amplitude of a qubit coupled to a damped pseudomode with kernel (gamma0 lam / 2) e^{-lam t}."""
    g = math.sqrt(gamma0 * lam / 2)

    def rhs(t, y):
        c, b = y[0] + 1j * y[1], y[2] + 1j * y[3]
        dc = -1j * g * b
        db = -1j * g * c - lam * b
        return [dc.real, dc.imag, db.real, db.imag]

    sol = solve_ivp(rhs, (0, float(np.max(times))), [1, 0, 0, 0], t_eval=times,
                    rtol=1e-12, atol=1e-14, method="DOP853")
    return sol.y[0] + 1j * sol.y[1]


def random_hermitian(d, rng, scale=1.0):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    h = (a + a.conj().T) / 2
    return scale * h / np.linalg.norm(h, 2)
