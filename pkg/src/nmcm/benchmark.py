"""Two-level atom in a resonant Lorentzian bath: exact solution vs. three MEs.

The exact reduced dynamics is an amplitude-damping channel with amplitude
multiplier G(t).  The collision-model description uses the single-ancilla
family E(t) = A_{cos(Omega t)} with memory rate equal to the Lorentzian width.
"""

from __future__ import annotations

import cmath
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import decay_lindbladian, projector, trace_distance
from .solvers import (
    CertificationReport,
    GeneratorMapTrajectory,
    MapTrajectory,
    TimeGrid,
    _renewal_solve,
    _richardson,
    cpt_certify,
    generator_from_function,
    solve_cm_me,
    solve_phenomenological,
    solve_shabani_lidar,
    validate_resolution,
)

MODELS = ("exact", "cm", "phenomenological", "shabani_lidar")
REGIMES = (10.0, 0.5, 0.1)  # lambda / gamma0
DEFAULT_STATE = projector(np.array([math.sqrt(0.2), math.sqrt(0.8)]))
BACKFLOW_THRESHOLD = 1e-8


class RepeatedRootError(ArithmeticError):
    """Partial-fraction inversion met a (numerically) repeated pole."""


# --------------------------------------------------------------------------
# amplitude damping family


@dataclass(frozen=True)
class ADCParams:
    eta: complex

    def __post_init__(self):
        if abs(self.eta) > 1 + 1e-12:
            raise ValueError(f"|eta| = {abs(self.eta):.6g} exceeds 1")


@dataclass(frozen=True)
class ExcitationPreservingQubitMap:
    """Qubit map scaling the excited population by q and the coherence by c."""

    q: float
    c: complex
    tol: float = 1e-10

    def __post_init__(self):
        if not -self.tol <= self.q <= 1 + self.tol:
            raise ValueError(f"population multiplier q={self.q} outside [0, 1]")
        if abs(self.c) ** 2 > self.q + self.tol:
            raise ValueError(f"|c|^2 = {abs(self.c) ** 2:.6g} exceeds q = {self.q:.6g}: not CP")

    @property
    def superoperator(self) -> np.ndarray:
        return qubit_map_superop(self.q, self.c)

    @classmethod
    def from_superoperator(cls, m: np.ndarray, tol: float = 1e-10) -> "ExcitationPreservingQubitMap":
        m = np.asarray(m)
        q, c = float(m[3, 3].real), complex(m[2, 2])
        if np.max(np.abs(m - qubit_map_superop(q, c))) > tol:
            raise ValueError("superoperator is not in the excitation-preserving qubit family")
        return cls(q, c, tol)


def qubit_map_superop(q, c) -> np.ndarray:
    """Superoperator(s) for population multiplier q and coherence multiplier c.

    With column stacking, vec(rho) = (rho00, rho10, rho01, rho11).
    Broadcasts over array-valued q and c.
    """
    q = np.asarray(q, dtype=float)
    c = np.asarray(c, dtype=complex)
    shape = np.broadcast(q, c).shape
    m = np.zeros(shape + (4, 4), dtype=complex)
    m[..., 0, 0] = 1.0
    m[..., 0, 3] = 1.0 - q
    m[..., 1, 1] = np.conj(c)
    m[..., 2, 2] = c
    m[..., 3, 3] = q
    return m


def adc_map(params) -> np.ndarray:
    """Amplitude-damping channel A_eta: populations by |eta|^2, coherence by eta."""
    eta = params.eta if isinstance(params, ADCParams) else complex(ADCParams(complex(params)).eta)
    return qubit_map_superop(abs(eta) ** 2, eta)


# --------------------------------------------------------------------------
# Lorentzian bath


@dataclass(frozen=True)
class LorentzianParams:
    gamma0: float
    lam: float

    def __post_init__(self):
        if not (self.gamma0 > 0 and self.lam > 0):
            raise ValueError("gamma0 and lambda must both be positive")

    @classmethod
    def from_ratio(cls, ratio: float, lam: float = 1.0) -> "LorentzianParams":
        """Parameters with lambda/gamma0 = ratio."""
        return cls(gamma0=lam / ratio, lam=lam)

    @property
    def d(self) -> complex:
        return cmath.sqrt(self.lam**2 - 2 * self.gamma0 * self.lam)

    @property
    def omega(self) -> float:
        return math.sqrt(self.gamma0 * self.lam / 2)

    @property
    def memory_rate(self) -> float:
        return self.lam

    @property
    def fastest_timescale(self) -> float:
        return 2 * math.pi / max(self.omega, self.gamma0, self.lam)


def _sinhc(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 1e-4
    safe = np.where(small, 1.0, z)
    return np.where(small, 1 + z * z / 6 + z**4 / 120, np.sinh(safe) / safe)


def exact_G(params: LorentzianParams, t) -> np.ndarray:
    """Excited-state amplitude multiplier of the exactly solvable model.

    G(t) = e^{-lam t/2} [cosh(d t/2) + (lam/d) sinh(d t/2)], written with
    sinh(z)/z so the d -> 0 point is the removable limit e^{-lam t/2}(1 + lam t/2).
    The value is real for a resonant Lorentzian.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("exact_G is defined for t >= 0")
    lam = params.lam
    z = params.d * t / 2
    g = np.exp(-lam * t / 2) * (np.cosh(z) + (lam * t / 2) * _sinhc(z))
    return g.real


# --------------------------------------------------------------------------
# collision-model mapping and scalar fast paths


def cm_generator(params: LorentzianParams, grid: TimeGrid) -> GeneratorMapTrajectory:
    """E(t) = A_{cos(Omega t)}; pair with memory rate ``params.memory_rate``."""
    omega = params.omega
    return generator_from_function(
        lambda t: adc_map(math.cos(omega * t)),
        grid,
        tag="adc-cosine",
        params={"omega": omega, "gamma": params.memory_rate},
        timescale=2 * math.pi / omega,
    )


def rational_inverse_laplace(num, den, t, root_tol: float = 1e-7) -> np.ndarray:
    """Inverse Laplace transform of num(s)/den(s) by residues at simple poles.

    Coefficients are highest power first; deg num < deg den.
    """
    num = np.atleast_1d(np.asarray(num, dtype=complex))
    den = np.atleast_1d(np.asarray(den, dtype=complex))
    num = num / den[0]
    den = den / den[0]
    if len(num) >= len(den):
        raise ValueError("need a strictly proper rational function")
    roots = np.roots(den)
    scale = max(1.0, float(np.max(np.abs(roots))))
    for i in range(len(roots)):
        for j in range(i + 1, len(roots)):
            if abs(roots[i] - roots[j]) < root_tol * scale:
                raise RepeatedRootError(f"poles {roots[i]:.6g} and {roots[j]:.6g} coincide")
    dden = np.polyder(den)
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape, dtype=complex)
    for r in roots:
        out += np.polyval(num, r) / np.polyval(dden, r) * np.exp(r * t)
    return out


def cm_laplace_symbol(sector: str, omega: float, gamma: float):
    """Numerator/denominator of E(u)/(1 - gamma E(u)) at u = s + gamma."""
    if sector == "coherence":
        p = np.polynomial.Polynomial([0.0, 1.0])  # u
        q = np.polynomial.Polynomial([omega**2, 0.0, 1.0])  # u^2 + omega^2
    elif sector == "population":
        p = np.polynomial.Polynomial([2 * omega**2, 0.0, 1.0])  # u^2 + 2 omega^2
        q = np.polynomial.Polynomial([0.0, 4 * omega**2, 0.0, 1.0])  # u (u^2 + 4 omega^2)
    else:
        raise ValueError(f"unknown sector {sector!r}")
    shift = np.polynomial.Polynomial([gamma, 1.0])  # u = s + gamma
    num = p(shift)
    den = (q - gamma * p)(shift)
    return num.coef[::-1], den.coef[::-1]


def _scalar_volterra(sector: str, omega: float, gamma: float, grid: TimeGrid) -> np.ndarray:
    def run(g: TimeGrid) -> np.ndarray:
        e = np.cos(omega * g.times)
        if sector == "population":
            e = e * e
        return _renewal_solve(e.astype(complex)[:, None, None], gamma, g.dt)[:, 0, 0]

    return _richardson(run(grid), run(grid.refine(2))).real


def scalar_cm_solve(params: LorentzianParams, grid: TimeGrid, gamma: float | None = None,
                    method: str = "laplace") -> tuple[np.ndarray, np.ndarray]:
    """Population and coherence multipliers (q(t), c(t)) of the CM dynamical map.

    ``method="laplace"`` inverts the rational Laplace-domain solution exactly;
    ``method="volterra"`` time-steps the scalar equations (with Richardson
    extrapolation).  Repeated poles fall back to the Volterra path.
    """
    gamma = params.memory_rate if gamma is None else float(gamma)
    omega = params.omega
    t = grid.times
    if method == "volterra":
        return (_scalar_volterra("population", omega, gamma, grid),
                _scalar_volterra("coherence", omega, gamma, grid))
    if method != "laplace":
        raise ValueError(f"unknown method {method!r}")
    out = []
    for sector in ("population", "coherence"):
        try:
            out.append(rational_inverse_laplace(*cm_laplace_symbol(sector, omega, gamma), t).real)
        except RepeatedRootError as exc:
            warnings.warn(f"{sector}: {exc}; using the Volterra path", RuntimeWarning, stacklevel=2)
            out.append(_scalar_volterra(sector, omega, gamma, grid))
    return out[0], out[1]


# --------------------------------------------------------------------------
# non-Markovianity witness


def canonical_pairs() -> list[tuple[np.ndarray, np.ndarray]]:
    plus = np.array([1, 1]) / math.sqrt(2)
    minus = np.array([1, -1]) / math.sqrt(2)
    return [
        (projector(np.array([1, 0])), projector(np.array([0, 1]))),
        (projector(plus), projector(minus)),
    ]


def trace_distance_series(traj: MapTrajectory, rho_a, rho_b) -> np.ndarray:
    diff = traj.apply(np.asarray(rho_a) - np.asarray(rho_b))
    diff = (diff + np.conj(np.swapaxes(diff, 1, 2))) / 2
    return 0.5 * np.sum(np.abs(np.linalg.eigvalsh(diff)), axis=1)


def backflow_witness(traj: MapTrajectory, state_pairs=None,
                     threshold: float = BACKFLOW_THRESHOLD) -> list[tuple[float, float]]:
    """Time intervals where the trace distance of some pair grows.

    Growth is detected with forward differences, ``(D[i+1] - D[i]) / dt > threshold``.
    An empty list means no backflow was detected for these pairs.
    """
    pairs = canonical_pairs() if state_pairs is None else list(state_pairs)
    if not pairs:
        raise ValueError("need at least one pair of initial states")
    times = traj.grid.times
    flagged = np.zeros(len(times) - 1, dtype=bool)
    for rho_a, rho_b in pairs:
        if trace_distance(rho_a, rho_b) < 1e-12:
            raise ValueError("state pair consists of identical states")
        dist = trace_distance_series(traj, rho_a, rho_b)
        flagged |= np.diff(dist) / traj.grid.dt > threshold

    intervals = []
    i = 0
    while i < flagged.size:
        if flagged[i]:
            j = i
            while j + 1 < flagged.size and flagged[j + 1]:
                j += 1
            intervals.append((float(times[i]), float(times[j + 1])))
            i = j + 1
        else:
            i += 1
    return intervals


def local_maxima(x: np.ndarray, prominence: float = 0.0) -> np.ndarray:
    """Indices of interior local maxima whose topographic prominence exceeds ``prominence``."""
    x = np.asarray(x, dtype=float)
    idx = []
    n = x.size
    i = 1
    while i < n - 1:
        if x[i] > x[i - 1]:
            j = i
            while j + 1 < n and x[j + 1] == x[i]:
                j += 1
            if j + 1 < n and x[j + 1] < x[i]:
                peak = x[i]
                left = i - 1
                lmin = peak
                while left >= 0 and x[left] <= peak:
                    lmin = min(lmin, x[left])
                    left -= 1
                right = j + 1
                rmin = peak
                while right < n and x[right] <= peak:
                    rmin = min(rmin, x[right])
                    right += 1
                if peak - max(lmin, rmin) > prominence:
                    idx.append(i)
            i = j + 1
        else:
            i += 1
    return np.array(idx, dtype=int)


# --------------------------------------------------------------------------
# benchmark runner


@dataclass
class ModelSeries:
    trajectory: MapTrajectory
    population_norm: np.ndarray
    coherence_abs_norm: np.ndarray
    certification: CertificationReport
    backflow: list[tuple[float, float]]


@dataclass
class BenchmarkResult:
    params: LorentzianParams
    grid: TimeGrid
    initial_state: np.ndarray
    models: dict[str, ModelSeries] = field(default_factory=dict)

    def rows(self) -> list[tuple]:
        """(t, model, population_norm, coherence_abs_norm, min_choi_eig, trace_dev), sorted by model then t."""
        out = []
        for name in sorted(self.models):
            s = self.models[name]
            cert = s.certification
            for i, t in enumerate(self.grid.times):
                out.append((t, name, s.population_norm[i], s.coherence_abs_norm[i],
                            cert.min_choi_eig[i], cert.trace_dev[i]))
        return out


def default_workers() -> int:
    env = os.environ.get("NMCM_THREADS")
    if env:
        n = int(env)
        if n < 1:
            raise ValueError("NMCM_THREADS must be a positive integer")
        return n
    return os.cpu_count() or 1


def model_trajectory(name: str, params: LorentzianParams, grid: TimeGrid,
                     cm_solver: str = "scalar") -> MapTrajectory:
    if name == "exact":
        return MapTrajectory(grid, adc_map_series(exact_G(params, grid.times)), meta={"method": "exact"})
    if name == "cm":
        if cm_solver == "scalar":
            q, c = scalar_cm_solve(params, grid)
            return MapTrajectory(grid, qubit_map_superop(q, c), meta={"method": "cm-laplace"})
        return solve_cm_me(cm_generator(params, grid), params.memory_rate, grid, richardson=True)
    lind = decay_lindbladian(params.gamma0)
    lam = params.lam
    kernel = lambda t: lam * math.exp(-lam * t)
    if name == "phenomenological":
        return solve_phenomenological(lind, kernel, grid, richardson=True)
    if name == "shabani_lidar":
        return solve_shabani_lidar(lind, kernel, grid, richardson=True)
    raise ValueError(f"unknown model {name!r}; choose from {', '.join(MODELS)}")


def adc_map_series(eta: np.ndarray) -> np.ndarray:
    eta = np.asarray(eta)
    return qubit_map_superop(np.abs(eta) ** 2, eta)


def run_benchmark(params: LorentzianParams, grid: TimeGrid, models=MODELS,
                  initial_state: np.ndarray | None = None, tol: float = 1e-8,
                  max_workers: int | None = None, cm_solver: str = "scalar") -> BenchmarkResult:
    """Normalized population/coherence series and CPT data for each requested model."""
    models = list(models)
    if not models:
        raise ValueError("no models requested")
    unknown = [m for m in models if m not in MODELS]
    if unknown:
        raise ValueError(f"unknown model(s) {unknown}; choose from {', '.join(MODELS)}")
    validate_resolution(grid, params.memory_rate, params.fastest_timescale)
    rho0 = DEFAULT_STATE if initial_state is None else np.asarray(initial_state, dtype=complex)
    pop0, coh0 = rho0[1, 1].real, abs(rho0[0, 1])
    if pop0 <= 0 or coh0 <= 0:
        raise ValueError("initial state needs nonzero excited population and coherence")

    def work(name: str) -> tuple[str, ModelSeries]:
        traj = model_trajectory(name, params, grid, cm_solver)
        states = traj.apply(rho0)
        return name, ModelSeries(
            trajectory=traj,
            population_norm=states[:, 1, 1].real / pop0,
            coherence_abs_norm=np.abs(states[:, 0, 1]) / coh0,
            certification=cpt_certify(traj, tol),
            backflow=backflow_witness(traj),
        )

    workers = max_workers or default_workers()
    if workers > 1 and len(models) > 1:
        with ThreadPoolExecutor(max_workers=min(workers, len(models))) as pool:
            results = dict(pool.map(work, models))
    else:
        results = dict(work(m) for m in models)
    return BenchmarkResult(params, grid, rho0, {name: results[name] for name in sorted(results)})
