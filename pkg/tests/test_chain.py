import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nmcm.chain import (
    CollisionChainConfig,
    ResourceLimitError,
    map_Ej,
    partial_swap_map,
    reduced_map_recursion,
    reduced_recursion,
    simulate_full_chain,
    simulate_recursive_joint,
    swap_identity_residuals,
    system_marginal,
    verify_delta_recursion,
    _ej_maps,
)
from nmcm.core import (
    apply_superop,
    cpt_check,
    haar_unitary,
    random_density_matrix,
    random_pure_state,
    trace_distance,
)
from oracles import dense_chain, ptrace_loops_fast

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def random_config(seed, n, p, d_a=2):
    rng = np.random.default_rng(seed)
    return CollisionChainConfig(
        n_steps=n,
        p=p,
        tau=0.3,
        sa_unitary=haar_unitary(2 * d_a, rng),
        system_init=random_density_matrix(2, rng),
        ancilla_init=random_pure_state(d_a, rng),
    )


def marginals(cfg, states):
    return [system_marginal(cfg, s.joint) for s in states]


@pytest.mark.parametrize("p", [0.0, 0.4, 1.0])
def test_full_chain_matches_dense_oracle(p):
    cfg = random_config(11, 4, p)
    ours = marginals(cfg, simulate_full_chain(cfg))
    ref = dense_chain(cfg.sa_unitary, cfg.system_init, cfg.ancilla_init, 4, p)
    for a, b in zip(ours, ref):
        assert trace_distance(a, b) < 1e-12


def test_qutrit_ancillas_match_dense_oracle():
    cfg = random_config(5, 3, 0.6, d_a=3)
    ref = dense_chain(cfg.sa_unitary, cfg.system_init, cfg.ancilla_init, 3, 0.6)
    for rho, exp in zip(reduced_recursion(cfg), ref):
        assert trace_distance(rho, exp) < 1e-12


@settings(max_examples=20, deadline=None)
@given(seeds, st.integers(min_value=1, max_value=6), st.floats(min_value=0.0, max_value=1.0))
def test_three_paths_agree(seed, n, p):
    cfg = random_config(seed, n, p)
    full = marginals(cfg, simulate_full_chain(cfg))
    joint = marginals(cfg, simulate_recursive_joint(cfg))
    red = reduced_recursion(cfg)
    assert len(full) == len(joint) == len(red) == n + 1
    for a, b, c in zip(full, joint, red):
        assert trace_distance(a, b) < 1e-10
        assert trace_distance(b, c) < 1e-10


def test_joint_state_is_valid_density_matrix():
    cfg = random_config(2, 4, 0.5)
    for s in simulate_recursive_joint(cfg):
        w = np.linalg.eigvalsh(s.joint)
        assert w.min() > -1e-12 and abs(np.trace(s.joint) - 1) < 1e-12


def test_partial_swap_map_endpoints():
    assert np.allclose(partial_swap_map(0.0), np.eye(16))
    rng = np.random.default_rng(0)
    a, b = random_density_matrix(2, rng), random_density_matrix(2, rng)
    out = apply_superop(partial_swap_map(1.0), np.kron(a, b))
    np.testing.assert_allclose(out, np.kron(b, a), atol=1e-14)
    assert cpt_check(partial_swap_map(0.3)).is_cpt


def test_swap_identities():
    cfg = random_config(9, 3, 0.5)
    r1, r2 = swap_identity_residuals(cfg, 1)
    assert r1 < 1e-12 and r2 < 1e-12


def test_ej_is_dilation_of_unitary_power():
    cfg = random_config(4, 3, 0.5)
    rho = random_density_matrix(2, np.random.default_rng(1))
    u3 = np.linalg.matrix_power(cfg.sa_unitary, 3)
    joint = u3 @ np.kron(rho, np.outer(cfg.ancilla_init, cfg.ancilla_init.conj())) @ u3.conj().T
    np.testing.assert_allclose(apply_superop(map_Ej(3, cfg), rho), ptrace_loops_fast(joint, [2, 2]), atol=1e-13)
    np.testing.assert_allclose(map_Ej(0, cfg), np.eye(4))
    with pytest.raises(ValueError):
        map_Ej(-1, cfg)


def test_limits():
    cfg1 = random_config(21, 5, 1.0)
    np.testing.assert_allclose(reduced_recursion(cfg1)[-1], apply_superop(map_Ej(5, cfg1), cfg1.system_init),
                               atol=1e-12)
    cfg0 = random_config(21, 5, 0.0)
    e1 = map_Ej(1, cfg0)
    np.testing.assert_allclose(reduced_recursion(cfg0)[-1],
                               apply_superop(np.linalg.matrix_power(e1, 5), cfg0.system_init), atol=1e-12)


def test_map_recursion_is_cpt_and_consistent():
    cfg = random_config(8, 7, 0.45)
    maps = reduced_map_recursion(cfg)
    states = reduced_recursion(cfg)
    for m, rho in zip(maps, states):
        assert cpt_check(m, tol=1e-10).is_cpt
        np.testing.assert_allclose(apply_superop(m, cfg.system_init), rho, atol=1e-13)


@settings(max_examples=15, deadline=None)
@given(seeds, st.integers(min_value=3, max_value=9), st.floats(min_value=0.0, max_value=1.0))
def test_difference_recursion(seed, n, p):
    assert verify_delta_recursion(random_config(seed, n, p)).max_deviation < 1e-12


def test_difference_recursion_literal_exponent_disagrees():
    # weight p^(n-1) on the E_{n-1}[rho_1] term does not reproduce the differences
    cfg = random_config(3, 6, 0.6)
    e = _ej_maps(cfg, 6)
    rho = [r.reshape(-1, order="F") for r in reduced_recursion(cfg)]
    n, p = 6, 0.6
    delta = [None] + [rho[k] - rho[k - 1] for k in range(1, n + 1)]
    lhs = delta[n]
    rest = (p ** (n - 1) * e[n] - p ** (n - 2) * e[n - 1]) @ rho[0]
    rest = rest + sum((1 - p) * p ** (j - 1) * (e[j] @ delta[n - j]) for j in range(1, n - 1))
    good = rest + (1 - p) * p ** (n - 2) * (e[n - 1] @ rho[1])
    literal = rest + (1 - p) * p ** (n - 1) * (e[n - 1] @ rho[1])
    assert np.max(np.abs(good - lhs)) < 1e-12
    assert np.max(np.abs(literal - lhs)) > 1e-3


def test_resource_cap():
    cfg = CollisionChainConfig.exchange(12, 0.5, 0.1, max_dim=1024)
    with pytest.raises(ResourceLimitError):
        simulate_full_chain(cfg)
    assert len(reduced_recursion(cfg)) == 13


@pytest.mark.parametrize(
    "kw",
    [dict(n_steps=0), dict(p=1.5), dict(p=-0.1), dict(tau=0.0)],
)
def test_config_validation(kw):
    base = dict(n_steps=3, p=0.5, tau=0.1)
    base.update(kw)
    with pytest.raises(ValueError):
        CollisionChainConfig.exchange(**base)


def test_config_rejects_bad_operators():
    rho = np.diag([0.5, 0.5])
    with pytest.raises(ValueError):
        CollisionChainConfig(2, 0.5, 0.1, np.eye(4) * 1.1, rho, np.array([1, 0]))
    with pytest.raises(ValueError):
        CollisionChainConfig(2, 0.5, 0.1, np.eye(6), rho, np.array([1, 0]))
    with pytest.raises(ValueError):
        CollisionChainConfig(2, 0.5, 0.1, np.eye(4), rho, np.array([1, 1]))


def test_exchange_chain_gives_cosine_amplitude_damping():
    g, tau = 1.3, 0.2
    cfg = CollisionChainConfig.exchange(4, 0.5, tau, g=g)
    for j in range(5):
        m = map_Ej(j, cfg)
        c = math.cos(g * j * tau)
        assert m[3, 3].real == pytest.approx(c * c, abs=1e-13)
        assert abs(m[2, 2]) == pytest.approx(abs(c), abs=1e-13)
