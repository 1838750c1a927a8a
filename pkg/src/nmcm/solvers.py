"""Continuous-time memory-kernel master equations for dynamical maps.

The collision-model master equation for the dynamical map reads

    dL/dt = G int_0^t e^{-G s} E(s) dL/dt(t - s) ds + e^{-G t} dE/dt(t),   L(0) = I,

with ``E(t)`` a CPT generator family and ``G`` the memory rate.  Integrating
once in time gives the equivalent renewal equation

    L(t) = K(t) + G int_0^t K(s) L(t - s) ds,      K(t) = e^{-G t} E(t),

which is what ``solve_cm_me`` time-steps.  The history integral uses a
product-trapezoid rule: ``e^{-G s}`` is integrated exactly against the linear
interpolant of ``E(s) L(t - s)``.  All quadrature weights are positive, so the
discrete solution is a positive combination of compositions of CP maps, and
both trace preservation and semigroup transparency hold exactly on the grid.

``lambda_series`` evaluates the same map as a weighted sum of auto-convolutions
of ``K``, term by term, with FFT-based convolutions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import batched_cpt_data, expm, unitary_superop
from .core.channels import as_matrix

SERIES_K_MAX = 200
GENERATOR_CPT_TOL = 1e-9
IDENTITY_TOL = 1e-12


class GridResolutionError(ValueError):
    """Time step too coarse for the memory rate or the generator's timescale."""


class SeriesTruncationError(RuntimeError):
    """The factorial weight bound cannot reach the tolerance within K_max terms."""


@dataclass(frozen=True)
class TimeGrid:
    t_max: float
    n_points: int

    def __post_init__(self):
        if not (self.t_max > 0 and math.isfinite(self.t_max)):
            raise ValueError(f"t_max must be positive and finite, got {self.t_max}")
        if int(self.n_points) != self.n_points or self.n_points < 2:
            raise ValueError(f"n_points must be an integer >= 2, got {self.n_points}")
        object.__setattr__(self, "n_points", int(self.n_points))

    @property
    def dt(self) -> float:
        return self.t_max / (self.n_points - 1)

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_max, self.n_points)

    def refine(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.t_max, factor * (self.n_points - 1) + 1)

    def stride_from(self, finer: "TimeGrid") -> int | None:
        """Subsampling stride that maps ``finer`` onto this grid, if any."""
        if not math.isclose(finer.t_max, self.t_max, rel_tol=1e-12):
            return None
        q, r = divmod(finer.n_points - 1, self.n_points - 1)
        return q if r == 0 and q >= 1 else None


@dataclass(frozen=True)
class MemoryRate:
    gamma: float

    def __post_init__(self):
        if not (math.isfinite(self.gamma) and self.gamma >= 0):
            raise ValueError(f"memory rate must be finite and non-negative, got {self.gamma}")

    def __float__(self) -> float:
        return float(self.gamma)


def _rate(gamma) -> float:
    return float(MemoryRate(float(gamma)))


@dataclass(frozen=True, eq=False)
class GeneratorMapTrajectory:
    """Sampled CPT family E(t) with E(0) = I.

    ``func`` (optional) evaluates E at arbitrary times and lets solvers
    resample on finer grids; ``timescale`` is the fastest time scale of the
    family, used for grid validation; ``tag``/``params`` mark analytic
    families that have scalar fast paths.
    """

    grid: TimeGrid
    maps: np.ndarray
    tag: str | None = None
    params: dict = field(default_factory=dict)
    func: Callable[[float], np.ndarray] | None = None
    timescale: float | None = None
    validate: bool = True

    def __post_init__(self):
        maps = np.asarray(self.maps, dtype=complex)
        if maps.ndim != 3 or maps.shape[0] != self.grid.n_points or maps.shape[1] != maps.shape[2]:
            raise ValueError(f"generator samples of shape {maps.shape} do not fit the grid")
        ident = np.eye(maps.shape[1])
        dev = float(np.max(np.abs(maps[0] - ident)))
        if dev > IDENTITY_TOL:
            raise ValueError(f"generator must start at the identity map, |E(0) - I| = {dev:.3e}")
        if self.validate:
            lmin, tdev = batched_cpt_data(maps)
            bad = np.flatnonzero((lmin < -GENERATOR_CPT_TOL) | (tdev > GENERATOR_CPT_TOL))
            if bad.size:
                i = bad[0]
                raise ValueError(
                    f"generator sample at t={self.grid.times[i]:.6g} is not CPT "
                    f"(min Choi eig {lmin[i]:.3e}, trace dev {tdev[i]:.3e})"
                )
        object.__setattr__(self, "maps", maps)

    @property
    def dim(self) -> int:
        return math.isqrt(self.maps.shape[1])

    def on(self, grid: TimeGrid) -> np.ndarray:
        """Samples of E on ``grid`` (subsampled or re-evaluated)."""
        if grid == self.grid:
            return self.maps
        stride = grid.stride_from(self.grid)
        if stride is not None:
            return self.maps[::stride]
        if self.func is None:
            raise GridResolutionError(
                f"generator sampled on {self.grid} cannot provide samples on {grid}; "
                "supply a finer sampling or an evaluation function"
            )
        return np.stack([np.asarray(self.func(t), dtype=complex) for t in grid.times])


@dataclass(frozen=True, eq=False)
class MapTrajectory:
    grid: TimeGrid
    maps: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        maps = np.asarray(self.maps, dtype=complex)
        if maps.shape[0] != self.grid.n_points:
            raise ValueError("trajectory length does not match its grid")
        object.__setattr__(self, "maps", maps)

    @property
    def dim(self) -> int:
        return math.isqrt(self.maps.shape[1])

    def apply(self, rho: np.ndarray) -> np.ndarray:
        """States Lambda(t_i)[rho] for every grid time, shape (n, d, d)."""
        rho = np.asarray(rho, dtype=complex)
        d = rho.shape[0]
        v = self.maps @ rho.reshape(-1, order="F")
        return v.reshape(-1, d, d).transpose(0, 2, 1)


# --------------------------------------------------------------------------
# generator families


def generator_from_function(func, grid: TimeGrid, tag=None, params=None, timescale=None, validate=True):
    maps = np.stack([np.asarray(func(t), dtype=complex) for t in grid.times])
    return GeneratorMapTrajectory(grid=grid, maps=maps, tag=tag, params=dict(params or {}),
                                  func=func, timescale=timescale, validate=validate)


def semigroup_generator(generator: np.ndarray, grid: TimeGrid, timescale=None) -> GeneratorMapTrajectory:
    """E(t) = exp(L t) for a Lindbladian superoperator L."""
    gen = as_matrix(generator)
    return generator_from_function(lambda t: expm(gen * t), grid, tag="semigroup",
                                   params={"generator": gen}, timescale=timescale)


def dilation_generator(hamiltonian: np.ndarray, dim_s: int, ancilla_state: np.ndarray,
                       grid: TimeGrid) -> GeneratorMapTrajectory:
    """E(t)[rho] = Tr_A U(t) (rho (x) |a><a|) U(t)^dag with U(t) = exp(-i H t).

    The continuous counterpart of the discrete maps E_j of the collision chain.
    """
    h = np.asarray(hamiltonian, dtype=complex)
    psi = np.asarray(ancilla_state, dtype=complex)
    d_a = psi.size
    w, v = np.linalg.eigh(h)

    def func(t):
        u = (v * np.exp(-1j * w * t)) @ v.conj().T
        kraus = np.einsum("xkyb,b->kxy", u.reshape(dim_s, d_a, dim_s, d_a), psi)
        return np.einsum("kab,kcd->acbd", kraus.conj(), kraus).reshape(dim_s**2, dim_s**2)

    spread = float(w[-1] - w[0])
    timescale = 2 * math.pi / spread if spread > 0 else None
    return generator_from_function(func, grid, tag="dilation", timescale=timescale)


def rotated_semigroup_generator(generator: np.ndarray, hamiltonian: np.ndarray, eps: float,
                                grid: TimeGrid) -> GeneratorMapTrajectory:
    """E(t) = U(eps t^2) o exp(L t): a CPT family with dE/dt(0) = L and an O(t^2) deviation."""
    gen = as_matrix(generator)
    h = np.asarray(hamiltonian, dtype=complex)
    return generator_from_function(
        lambda t: unitary_superop(expm(-1j * h * eps * t * t)) @ expm(gen * t), grid, tag="rotated-semigroup"
    )


# --------------------------------------------------------------------------
# shared numerics


def validate_resolution(grid: TimeGrid, gamma: float = 0.0, timescale: float | None = None) -> None:
    """dt must resolve both 1/(20 gamma) and timescale/40."""
    dt = grid.dt
    if gamma > 0 and dt > 1.0 / (20.0 * gamma) * (1 + 1e-12):
        raise GridResolutionError(f"dt={dt:.4g} exceeds 1/(20*gamma)={1 / (20 * gamma):.4g}")
    if timescale is not None and dt > timescale / 40.0 * (1 + 1e-12):
        raise GridResolutionError(f"dt={dt:.4g} exceeds timescale/40={timescale / 40:.4g}")


def time_derivative(samples: np.ndarray, dt: float) -> np.ndarray:
    """Fourth-order finite differences along axis 0 (one-sided near the ends)."""
    f = np.asarray(samples)
    n = f.shape[0]
    if n < 5:
        raise ValueError("need at least 5 samples for a fourth-order derivative")
    out = np.empty_like(f)
    out[2:-2] = (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * dt)
    out[0] = (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * dt)
    out[1] = (-3 * f[0] - 10 * f[1] + 18 * f[2] - 6 * f[3] + f[4]) / (12 * dt)
    out[-1] = (25 * f[-1] - 48 * f[-2] + 36 * f[-3] - 16 * f[-4] + 3 * f[-5]) / (12 * dt)
    out[-2] = (3 * f[-1] + 10 * f[-2] - 18 * f[-3] + 6 * f[-4] - f[-5]) / (12 * dt)
    return out


def product_trapezoid_weights(gamma: float, dt: float) -> tuple[float, float]:
    """Exact integrals of e^{-gamma s} against the two hat functions on [0, dt]."""
    x = gamma * dt
    if x < 1e-3:
        a = dt * (1 / 2 - x / 6 + x**2 / 24 - x**3 / 120 + x**4 / 720)
        b = dt * (1 / 2 - x / 3 + x**2 / 8 - x**3 / 30 + x**4 / 144)
    else:
        e = math.exp(-x)
        a = (x - 1 + e) / (gamma * x)
        b = (1 - e - x * e) / (gamma * x)
    return a, b


def _history_cutoff(gamma: float, dt: float, n: int) -> int:
    if gamma <= 0:
        return n
    return min(n, int(math.ceil(45.0 / (gamma * dt))) + 1)


def _renewal_solve(e: np.ndarray, gamma: float, dt: float) -> np.ndarray:
    """Product-trapezoid solution of L = K + gamma * (K conv L), K = e^{-gamma t} E."""
    n_pts, dim, _ = e.shape
    w = np.exp(-gamma * dt * np.arange(n_pts))
    k = w[:, None, None] * e
    if gamma == 0.0:
        return k.copy()
    a, b = product_trapezoid_weights(gamma, dt)
    c = a * w
    c[1:] += b * w[:-1]
    weighted = c[:, None, None] * e
    lhs_inv = np.linalg.inv(np.eye(dim) - gamma * a * e[0])
    cut = _history_cutoff(gamma, dt, n_pts)

    out = np.empty_like(e)
    out[0] = k[0]
    for n in range(1, n_pts):
        m = min(n - 1, cut)
        rhs = k[n].copy()
        if m > 0:
            hist = np.tensordot(weighted[1 : m + 1], out[n - m : n][::-1], axes=([0, 2], [0, 1]))
            rhs += gamma * hist
        if n - 1 <= cut:
            rhs += gamma * b * w[n - 1] * (e[n] @ out[0])
        out[n] = lhs_inv @ rhs
    return out


def _richardson(coarse: np.ndarray, fine: np.ndarray) -> np.ndarray:
    return (4.0 * fine[::2] - coarse) / 3.0


# --------------------------------------------------------------------------
# collision-model master equation


def solve_cm_me(gen: GeneratorMapTrajectory, gamma, grid: TimeGrid | None = None,
                richardson: bool = False) -> MapTrajectory:
    """Dynamical map of the collision-model master equation.

    Second order in dt; ``richardson=True`` adds one extrapolation level
    (requires the generator on the doubled grid) for fourth-order accuracy.
    """
    gamma = _rate(gamma)
    grid = gen.grid if grid is None else grid
    validate_resolution(grid, gamma, gen.timescale)
    e = gen.on(grid)
    lam = _renewal_solve(e, gamma, grid.dt)
    if richardson:
        fine_grid = grid.refine(2)
        lam = _richardson(lam, _renewal_solve(gen.on(fine_grid), gamma, fine_grid.dt))
    return MapTrajectory(grid, lam, meta={"method": "volterra", "gamma": gamma, "richardson": richardson})


def series_truncation_order(x: float, tol: float, k_max: int = SERIES_K_MAX) -> int:
    """Smallest K with x^K / K! < tol (x = gamma * t_max)."""
    if x <= 0:
        return 1
    log_tol = math.log(tol)
    for k in range(1, k_max + 1):
        if k * math.log(x) - math.lgamma(k + 1) < log_tol:
            return k
    raise SeriesTruncationError(
        f"weight bound (gamma*t_max)^K/K! with gamma*t_max={x:.4g} stays above tol={tol:g} up to K_max={k_max}"
    )


def trace_weight_sum(gamma: float, times: np.ndarray, order: int) -> np.ndarray:
    """e^{-gamma t} sum_{k=1}^{K} (gamma t)^{k-1}/(k-1)! at each time."""
    t = np.asarray(times, dtype=float)
    x = gamma * t
    total = np.zeros_like(x)
    with np.errstate(divide="ignore"):
        logx = np.where(x > 0, np.log(np.where(x > 0, x, 1.0)), -np.inf)
    for j in range(order):
        if j == 0:
            total += np.exp(-x)
        else:
            total += np.exp(-x + j * logx - math.lgamma(j + 1))
    return total


def lambda_series(gen: GeneratorMapTrajectory, gamma, grid: TimeGrid | None = None,
                  tol: float = 1e-10, k_max: int = SERIES_K_MAX) -> MapTrajectory:
    """Dynamical map as the positively weighted series of auto-convolutions of E."""
    gamma = _rate(gamma)
    grid = gen.grid if grid is None else grid
    validate_resolution(grid, gamma, gen.timescale)
    e = gen.on(grid)
    n_pts = grid.n_points
    order = series_truncation_order(gamma * grid.t_max, tol, k_max)
    w = np.exp(-gamma * grid.dt * np.arange(n_pts))
    term = w[:, None, None] * e
    total = term.copy()
    if order > 1:
        a, b = product_trapezoid_weights(gamma, grid.dt)
        c = a * w
        c[1:] += b * w[:-1]
        nfft = 1 << (2 * n_pts - 1).bit_length()
        kernel_hat = np.fft.fft(c[:, None, None] * e, n=nfft, axis=0)
        edge = a * w[:, None, None] * e
        for _ in range(2, order + 1):
            conv = np.fft.ifft(np.einsum("fij,fjk->fik", kernel_hat, np.fft.fft(term, n=nfft, axis=0)), axis=0)
            term = gamma * (conv[:n_pts] - edge @ term[0])
            total += term
    return MapTrajectory(grid, total, meta={"method": "series", "gamma": gamma, "order": order, "tol": tol})


def me_diagnostics(gen: GeneratorMapTrajectory, gamma, traj: MapTrajectory) -> dict[str, np.ndarray]:
    """Residual of the differential form of the master equation on a computed map.

    Derivatives come from finite differences and the history integral from
    the plain trapezoid rule, so the residual is O(dt^2).  Also reports the
    sizes of the history term and of the inhomogeneous ``e^{-G t} dE/dt`` term.
    """
    gamma = _rate(gamma)
    grid = traj.grid
    dt = grid.dt
    e = gen.on(grid)
    lam_dot = time_derivative(traj.maps, dt)
    e_dot = time_derivative(e, dt)
    w = np.exp(-gamma * grid.times)
    n_pts = grid.n_points
    nfft = 1 << (2 * n_pts - 1).bit_length()
    conv = np.fft.ifft(
        np.einsum("fij,fjk->fik", np.fft.fft(w[:, None, None] * e, n=nfft, axis=0),
                  np.fft.fft(lam_dot, n=nfft, axis=0)),
        axis=0,
    )[:n_pts]
    # trapezoid end corrections
    conv -= 0.5 * (e[0] @ lam_dot) + 0.5 * w[:, None, None] * (e @ lam_dot[0])
    conv[0] = 0.0
    history = gamma * dt * conv
    inhom = w[:, None, None] * e_dot
    resid = lam_dot - history - inhom
    norm = lambda x: np.linalg.norm(x, ord=2, axis=(1, 2))
    return {"residual": norm(resid), "history": norm(history), "inhomogeneous": norm(inhom)}


# --------------------------------------------------------------------------
# Markov limit


def markov_limit_generator(gen: GeneratorMapTrajectory) -> np.ndarray:
    """dE/dt at t = 0 from a one-sided fourth-order difference."""
    if gen.grid.n_points < 5:
        raise ValueError("need at least 5 generator samples near t = 0")
    f = gen.maps
    return (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * gen.grid.dt)


def lindblad_propagate(generator, grid: TimeGrid) -> MapTrajectory:
    gen = as_matrix(generator)
    maps = np.stack([expm(gen * t) for t in grid.times])
    return MapTrajectory(grid, maps, meta={"method": "lindblad"})


# --------------------------------------------------------------------------
# rival memory-kernel master equations


def _sample_kernel(kernel, grid: TimeGrid) -> np.ndarray:
    if callable(kernel):
        return np.asarray([kernel(t) for t in grid.times], dtype=float)
    k = np.asarray(kernel, dtype=float)
    if k.shape != (grid.n_points,):
        raise GridResolutionError(f"kernel has {k.size} samples, grid has {grid.n_points}")
    return k


def _kernel_me_solve(gen: np.ndarray, kmats: np.ndarray, dt: float) -> np.ndarray:
    """Trapezoid solution of dL/dt = G int_0^t K(s) L(t - s) ds, L(0) = I."""
    n_pts, dim, _ = kmats.shape
    lam = np.empty((n_pts, dim, dim), dtype=complex)
    lam[0] = np.eye(dim)
    y_prev = np.zeros((dim, dim), dtype=complex)
    lhs_inv = np.linalg.inv(np.eye(dim) - 0.25 * dt * dt * gen @ kmats[0])
    for n in range(1, n_pts):
        h = 0.5 * (kmats[n] @ lam[0])
        if n > 1:
            h = h + np.tensordot(kmats[1:n], lam[n - 1 : 0 : -1], axes=([0, 2], [0, 1]))
        h = dt * h
        lam[n] = lhs_inv @ (lam[n - 1] + 0.5 * dt * gen @ (y_prev + h))
        y_prev = 0.5 * dt * kmats[0] @ lam[n] + h
    return lam


def _rival_solve(generator, kernel, grid, with_propagator, richardson, name):
    gen = as_matrix(generator)
    if richardson and not callable(kernel):
        raise GridResolutionError("Richardson extrapolation needs the kernel as a function of time")

    def run(g: TimeGrid) -> np.ndarray:
        k = _sample_kernel(kernel, g)
        if with_propagator:
            kmats = np.stack([kv * expm(gen * t) for kv, t in zip(k, g.times)])
        else:
            kmats = k[:, None, None] * np.eye(gen.shape[0])
        return _kernel_me_solve(gen, kmats.astype(complex), g.dt)

    lam = run(grid)
    if richardson:
        lam = _richardson(lam, run(grid.refine(2)))
    return MapTrajectory(grid, lam, meta={"method": name, "richardson": richardson})


def solve_phenomenological(generator, kernel, grid: TimeGrid, richardson: bool = False) -> MapTrajectory:
    """drho/dt = L int_0^t k(s) rho(t - s) ds.  Not CPT in general."""
    return _rival_solve(generator, kernel, grid, False, richardson, "phenomenological")


def solve_shabani_lidar(generator, kernel, grid: TimeGrid, richardson: bool = False) -> MapTrajectory:
    """drho/dt = L int_0^t k(s) exp(L s) rho(t - s) ds."""
    return _rival_solve(generator, kernel, grid, True, richardson, "shabani_lidar")


# --------------------------------------------------------------------------
# certification


@dataclass
class CertificationReport:
    times: np.ndarray
    min_choi_eig: np.ndarray
    trace_dev: np.ndarray
    tol: float
    passed: bool
    first_violation_time: float | None

    def summary(self) -> dict:
        return {
            "passed": self.passed,
            "tol": self.tol,
            "min_choi_eig": float(np.min(self.min_choi_eig)),
            "max_trace_dev": float(np.max(self.trace_dev)),
            "first_violation_time": self.first_violation_time,
        }


def cpt_certify(traj: MapTrajectory, tol: float = 1e-8) -> CertificationReport:
    lmin, tdev = batched_cpt_data(traj.maps)
    bad = np.flatnonzero((lmin < -tol) | (tdev > tol))
    times = traj.grid.times
    return CertificationReport(
        times=times,
        min_choi_eig=lmin,
        trace_dev=tdev,
        tol=tol,
        passed=bad.size == 0,
        first_violation_time=float(times[bad[0]]) if bad.size else None,
    )

