import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.signal import find_peaks, residue

from nmcm.benchmark import (
    DEFAULT_STATE,
    ADCParams,
    ExcitationPreservingQubitMap,
    LorentzianParams,
    RepeatedRootError,
    adc_map,
    backflow_witness,
    canonical_pairs,
    cm_laplace_symbol,
    exact_G,
    local_maxima,
    qubit_map_superop,
    rational_inverse_laplace,
    run_benchmark,
    scalar_cm_solve,
)
from nmcm.core import cpt_check, decay_lindbladian, kraus_to_superop
from nmcm.solvers import TimeGrid, lindblad_propagate, solve_cm_me
from oracles import pseudomode_amplitude


def test_adc_map_matches_kraus():
    eta = 0.6
    kraus = [np.diag([1, eta]), np.array([[0, math.sqrt(1 - eta * eta)], [0, 0]])]
    np.testing.assert_allclose(adc_map(eta), kraus_to_superop(kraus), atol=1e-15)
    np.testing.assert_allclose(adc_map(ADCParams(eta)), adc_map(eta))
    with pytest.raises(ValueError):
        ADCParams(1.2)


@given(st.floats(min_value=-1, max_value=1), st.floats(min_value=-math.pi, max_value=math.pi))
def test_adc_is_cpt(r, phase):
    assert cpt_check(adc_map(r * np.exp(1j * phase)), tol=1e-12).is_cpt


def test_excitation_preserving_map_round_trip():
    m = ExcitationPreservingQubitMap(0.5, 0.3 + 0.2j)
    back = ExcitationPreservingQubitMap.from_superoperator(m.superoperator)
    assert back.q == pytest.approx(0.5) and back.c == pytest.approx(0.3 + 0.2j)
    np.testing.assert_allclose(qubit_map_superop(0.5, 0.3 + 0.2j), m.superoperator)
    with pytest.raises(ValueError):
        ExcitationPreservingQubitMap.from_superoperator(np.ones((4, 4)))


def test_lorentzian_params():
    p = LorentzianParams.from_ratio(0.1)
    assert p.gamma0 == pytest.approx(10.0) and p.lam == 1.0
    assert p.omega == pytest.approx(math.sqrt(5.0))
    assert p.memory_rate == 1.0
    with pytest.raises(ValueError):
        LorentzianParams(-1.0, 1.0)


@pytest.mark.parametrize("gamma0, lam", [(1.0, 4.0), (0.1, 1.0), (10.0, 1.0), (2.0, 1.0)])
def test_exact_G_matches_pseudomode_ode(gamma0, lam):
    t = np.linspace(0, 8, 81)
    ref = pseudomode_amplitude(gamma0, lam, t)
    np.testing.assert_allclose(exact_G(LorentzianParams(gamma0, lam), t), ref.real, atol=1e-10)
    assert np.max(np.abs(ref.imag)) < 1e-10


def test_exact_G_reference_value():
    # frozen from the pseudomode ODE oracle
    assert exact_G(LorentzianParams(1.0, 4.0), 1.0) == pytest.approx(0.665143, abs=1e-6)
    # critical point d = 0 has the removable limit e^{-lam t/2}(1 + lam t / 2)
    t = np.array([0.0, 0.7, 3.0])
    np.testing.assert_allclose(exact_G(LorentzianParams(0.5, 1.0), t), np.exp(-t / 2) * (1 + t / 2), rtol=1e-12)
    with pytest.raises(ValueError):
        exact_G(LorentzianParams(1.0, 1.0), -1.0)


@pytest.mark.parametrize("sector", ["population", "coherence"])
@pytest.mark.parametrize("omega, gamma", [(math.sqrt(5), 1.0), (math.sqrt(0.05), 1.0), (2.0, 0.3)])
def test_inverse_laplace_matches_scipy_residues(sector, omega, gamma):
    num, den = cm_laplace_symbol(sector, omega, gamma)
    r, p, _ = residue(num.real, den.real)
    t = np.linspace(0, 10, 51)
    ref = sum(ri * np.exp(pi * t) for ri, pi in zip(r, p))
    np.testing.assert_allclose(rational_inverse_laplace(num, den, t), ref, atol=1e-10)


def test_inverse_laplace_repeated_root_and_fallback():
    with pytest.raises(RepeatedRootError):
        rational_inverse_laplace([1.0], [1.0, 2.0, 1.0], [0.0, 1.0])
    # coherence symbol has a double pole when gamma^2 = 4 omega^2
    params = LorentzianParams(2.0, 1.0)  # omega = 1
    grid = TimeGrid(5.0, 501)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        q, c = scalar_cm_solve(params, grid, gamma=2.0)
    assert any("Volterra" in str(w.message) for w in caught)
    q_v, c_v = scalar_cm_solve(params, grid, gamma=2.0, method="volterra")
    np.testing.assert_allclose(c, c_v, atol=1e-12)


@pytest.mark.parametrize("ratio", [10.0, 0.5, 0.1])
def test_scalar_laplace_matches_superoperator_solver(ratio):
    params = LorentzianParams.from_ratio(ratio)
    grid = TimeGrid(10.0, 2001)
    q, c = scalar_cm_solve(params, grid)
    from nmcm.benchmark import cm_generator

    traj = solve_cm_me(cm_generator(params, grid), params.memory_rate, grid, richardson=True)
    np.testing.assert_allclose(traj.maps[:, 3, 3].real, q, atol=1e-8)
    np.testing.assert_allclose(traj.maps[:, 2, 2].real, c, atol=1e-8)
    q_v, c_v = scalar_cm_solve(params, grid, method="volterra")
    np.testing.assert_allclose(q_v, q, atol=1e-9)


def test_lindblad_has_no_backflow():
    traj = lindblad_propagate(decay_lindbladian(1.0), TimeGrid(5.0, 501))
    assert backflow_witness(traj) == []


def test_backflow_witness_on_oscillating_map():
    grid = TimeGrid(10.0, 1001)
    from nmcm.solvers import MapTrajectory

    traj = MapTrajectory(grid, qubit_map_superop(np.cos(grid.times) ** 2, np.cos(grid.times)))
    intervals = backflow_witness(traj)
    # |cos t| grows on (pi/2, pi), (3pi/2, 2pi), ...
    assert len(intervals) == 3
    assert intervals[0][0] == pytest.approx(math.pi / 2, abs=0.02)
    assert intervals[0][1] == pytest.approx(math.pi, abs=0.02)
    with pytest.raises(ValueError):
        backflow_witness(traj, state_pairs=[(DEFAULT_STATE, DEFAULT_STATE)])
    with pytest.raises(ValueError):
        backflow_witness(traj, state_pairs=[])
    assert len(canonical_pairs()) == 2


@settings(max_examples=30)
@given(st.lists(st.floats(min_value=-10, max_value=10), min_size=3, max_size=60),
       st.floats(min_value=0.0, max_value=2.0))
def test_local_maxima_matches_scipy(x, prominence):
    x = np.array(x)
    ours = local_maxima(x, prominence)
    peaks, props = find_peaks(x, prominence=(None, None))
    ref = peaks[props["prominences"] > prominence]
    np.testing.assert_array_equal(ours, ref)


def test_run_benchmark_shapes_and_errors():
    params = LorentzianParams.from_ratio(0.5)
    grid = TimeGrid(10.0, 2001)
    res = run_benchmark(params, grid, models=["cm", "exact"], max_workers=2)
    assert list(res.models) == ["cm", "exact"]
    rows = res.rows()
    assert len(rows) == 2 * grid.n_points
    assert rows[0][1] == "cm" and rows[-1][1] == "exact"
    assert res.models["cm"].population_norm[0] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        run_benchmark(params, grid, models=["bogus"])
    with pytest.raises(ValueError):
        run_benchmark(params, grid, models=[])
    with pytest.raises(ValueError):
        run_benchmark(params, TimeGrid(10.0, 101))
    with pytest.raises(ValueError):
        run_benchmark(params, grid, models=["cm"], initial_state=np.diag([1.0, 0.0]))


def test_worker_count_does_not_change_results(monkeypatch):
    params = LorentzianParams.from_ratio(0.5)
    grid = TimeGrid(10.0, 2001)
    monkeypatch.setenv("NMCM_THREADS", "1")
    a = run_benchmark(params, grid)
    monkeypatch.setenv("NMCM_THREADS", "4")
    b = run_benchmark(params, grid)
    for name in a.models:
        np.testing.assert_array_equal(a.models[name].population_norm, b.models[name].population_norm)


def test_lambda_over_gamma0_10_models_track_exact_solution():
    params = LorentzianParams.from_ratio(10.0)
    grid = TimeGrid(10.0, 2001)
    res = run_benchmark(params, grid)
    window = grid.times <= 5.0
    exact = res.models["exact"].population_norm
    for name, s in res.models.items():
        assert np.max(np.abs(s.population_norm - exact)[window]) <= 0.02, name


def test_markovian_regime_approaches_exponential():
    # at lam/gamma0 = 100 all four models sit within 0.02 of e^{-gamma0 t}
    params = LorentzianParams.from_ratio(100.0)
    grid = TimeGrid(10.0, 2001)
    res = run_benchmark(params, grid)
    window = grid.times <= 5.0
    target = np.exp(-params.gamma0 * grid.times)
    for name, s in res.models.items():
        assert np.max(np.abs(s.population_norm - target)[window]) <= 0.02, name


def test_initial_slip_at_lambda_over_gamma0_10():
    # the exact population itself departs from e^{-gamma0 t} by more than 0.02 here
    params = LorentzianParams.from_ratio(10.0)
    t = np.linspace(0, 5, 501)
    dev = np.max(np.abs(exact_G(params, t) ** 2 - np.exp(-params.gamma0 * t)))
    assert 0.06 < dev < 0.08


def test_population_period_is_pi_over_omega():
    # population of the CM generator follows cos^2, so peaks recur every pi/Omega
    params = LorentzianParams.from_ratio(0.1)
    grid = TimeGrid(10.0, 2001)
    q, _ = scalar_cm_solve(params, grid)
    spacing = np.diff(grid.times[local_maxima(q, 1e-6)])
    assert np.all(np.abs(spacing / (math.pi / params.omega) - 1) < 0.1)
    exact_peaks = local_maxima(exact_G(params, grid.times) ** 2, 1e-6)
    d = abs(params.d)
    np.testing.assert_allclose(np.diff(grid.times[exact_peaks]), 2 * math.pi / d, atol=2 * grid.dt)
