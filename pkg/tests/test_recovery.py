import itertools

import numpy as np
import pytest

from scpnm.datagen import inject_pure_samples, sample_simplex
from scpnm.errors import ParameterError, RankError
from scpnm.metrics import permutation_mse
from scpnm.recovery import project_abundances, project_simplex, spa_vertices, unmix

rng = np.random.default_rng(1)


def simplex_volume(V):
    E = V[:, 1:] - V[:, :1]
    return np.sqrt(max(np.linalg.det(E.T @ E), 0.0))


def test_spa_picks_vertices():
    K = 3
    A = np.diag([2.0, 1.5, 3.0])
    S, idx = inject_pure_samples(sample_simplex(K, 60, 0.02, 2), 1, seed=4)
    F = A @ S
    picks = spa_vertices(F, K)
    assert sorted(picks) == sorted(idx)
    best = max(itertools.combinations(range(F.shape[1]), K), key=lambda c: simplex_volume(F[:, c]))
    assert sorted(best) == sorted(picks)


def test_spa_k1_and_ties():
    F = rng.random((3, 10))
    F[:, 6] *= 5
    assert list(spa_vertices(F, 1)) == [6]
    V = np.eye(3)
    F = np.hstack([V[:, [0]], V[:, [0]], V[:, [1]], V[:, [1]], V[:, [2]], np.full((3, 1), 1 / 3)])
    assert sorted(spa_vertices(F, 3)) == [0, 2, 4]


def test_spa_permutation_invariance():
    S, _ = inject_pure_samples(sample_simplex(4, 80, 0.01, 3), 1, seed=1)
    F = rng.normal(size=(4, 4)) @ S
    perm = rng.permutation(F.shape[1])
    a = set(spa_vertices(F, 4))
    b = set(perm[spa_vertices(F[:, perm], 4)])
    assert a == b


def test_spa_collapse():
    with pytest.raises(RankError):
        spa_vertices(np.outer([1.0, 2.0], np.ones(5)), 2)


def test_project_simplex():
    V = rng.normal(size=(4, 100)) * 3
    P = project_simplex(V)
    assert np.all(P >= 0) and np.max(np.abs(P.sum(axis=0) - 1)) <= 1e-12
    S = sample_simplex(4, 20, 0, 0)
    np.testing.assert_allclose(project_simplex(S), S, atol=1e-15)


def test_abundances_consistent_system():
    A = rng.normal(size=(5, 3))
    S = sample_simplex(3, 300, 0, 5)
    Shat = project_abundances(A @ S, A)
    assert np.max(np.abs(Shat - S)) <= 1e-8
    np.testing.assert_allclose(project_abundances(A, A), np.eye(3), atol=1e-10)
    with pytest.raises(RankError):
        project_abundances(A @ S, np.ones((5, 3)))


def test_abundances_match_grid_oracle():
    A = rng.normal(size=(3, 3))
    F = A @ sample_simplex(3, 5, 0, 9) + 0.05 * rng.normal(size=(3, 5))
    Shat = project_abundances(F, A)
    assert np.all(Shat >= -1e-12) and np.max(np.abs(Shat.sum(axis=0) - 1)) <= 1e-8
    t = np.arange(0, 1001) / 1000
    s1, s2 = np.meshgrid(t, t)
    keep = s1 + s2 <= 1 + 1e-12
    G = np.vstack([s1[keep], s2[keep], 1 - s1[keep] - s2[keep]])
    for col in range(F.shape[1]):
        err = np.sum((A @ G - F[:, [col]]) ** 2, axis=0)
        best = G[:, np.argmin(err)]
        assert np.max(np.abs(best - Shat[:, col])) <= 2e-3


def test_unmix_separable():
    S, _ = inject_pure_samples(sample_simplex(3, 500, 0, 7), 1, seed=2)
    A = rng.normal(size=(4, 3))
    res = unmix(A @ S, 3)
    assert permutation_mse(S, res.Shat) <= 1e-8
    assert res.Ahat.shape == (4, 3) and res.vertex_indices.shape == (3,)


def test_unmix_k_too_large():
    with pytest.raises(ParameterError):
        unmix(rng.random((3, 2)), 3)
