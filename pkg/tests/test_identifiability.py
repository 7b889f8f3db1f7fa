import math

import numpy as np
import pytest

from scpnm.datagen import sample_simplex
from scpnm.errors import ParameterError, RankError
from scpnm.identifiability import (
    build_counterexample,
    build_g,
    check_bound,
    is_dense,
    numerical_rank,
    sigma_min,
    solve_tau,
)


def test_g_of_identity():
    G = build_g(np.eye(3))
    np.testing.assert_array_equal(G.data, [[1, 0, 1], [0, 1, 1], [0, 0, 1]])
    assert G.row_index == ((0, 0), (1, 1), (0, 1))
    assert numerical_rank(G) == 3


def test_sigma_min_of_identity_g():
    # Gram matrix of [[1,0,1],[0,1,1],[0,0,1]] has eigenvalues 1 and 2 +- sqrt(3).
    assert sigma_min(build_g(np.eye(3))) == pytest.approx(math.sqrt(2 - math.sqrt(3)), abs=1e-12)
    assert sigma_min(np.zeros((3, 3))) == 0.0
    G = build_g(np.random.default_rng(0).normal(size=(5, 4))).data
    assert sigma_min(G[::-1]) == pytest.approx(sigma_min(G), rel=1e-12)


def test_g_degenerate_and_scaling():
    A = np.random.default_rng(1).normal(size=(4, 4))
    A[:, 1] = A[:, 3]
    G = build_g(A).data
    zero_rows = [r for r, (i, j) in enumerate(build_g(A).row_index) if 1 in (i, j)]
    assert len(zero_rows) == 3 and np.all(G[zero_rows] == 0)
    B = np.random.default_rng(2).normal(size=(3, 3))
    np.testing.assert_allclose(build_g(2 * B).data, 4 * build_g(B).data, rtol=1e-15)
    with pytest.raises(ParameterError):
        build_g(np.eye(2))


def test_check_bound():
    assert check_bound(3, 3)
    assert not check_bound(4, 3)
    assert check_bound(6, 4)
    assert not check_bound(2, 2)


def test_generic_full_rank():
    rng = np.random.default_rng(20)
    shapes = [(M, K) for K in (3, 4, 5) for M in range(K, K * (K - 1) // 2 + 1)]
    for t in range(200):
        M, K = shapes[t % len(shapes)]
        assert numerical_rank(build_g(rng.normal(size=(M, K)))) == M


def test_tau_examples():
    np.testing.assert_allclose(solve_tau(np.eye(3)), 1.0)
    np.testing.assert_allclose(solve_tau(2 * np.eye(3)), 0.5)
    A = np.random.default_rng(3).normal(size=(5, 3))
    assert np.max(np.abs(A.T @ solve_tau(A) - 1)) <= 1e-10
    with pytest.raises(RankError):
        solve_tau(np.ones((3, 3)))


def test_tau_density_for_square_mixing():
    rng = np.random.default_rng(4)
    worst = min(np.min(np.abs(solve_tau(rng.normal(size=(3, 3))))) for _ in range(200))
    assert worst > 0
    assert not is_dense(np.array([1.0, 0.0]))


def test_counterexample_soundness():
    A = np.random.default_rng(5).normal(size=(4, 3))
    ce = build_counterexample(A, seed=1)
    G = build_g(A).data
    assert np.max(np.abs(G @ ce.iota)) <= 1e-10
    S = sample_simplex(3, 10_000, 0.0, seed=2)
    assert ce.constraint_error(S) < 1e-8
    assert np.max(np.abs(ce.h_second())) >= 1e-3
    lo, hi = A.min(axis=1), A.max(axis=1)
    for m in np.flatnonzero(ce.iota):
        assert ce.c[m] <= lo[m] or ce.c[m] >= hi[m]
        y = np.linspace(lo[m], hi[m], 2001)
        slope = ce.h_prime(np.tile(y, (4, 1)))[m]
        assert np.all(slope > 0) or np.all(slope < 0)


def test_counterexample_requires_null_space():
    with pytest.raises(ParameterError):
        build_counterexample(np.random.default_rng(0).normal(size=(3, 3)))
