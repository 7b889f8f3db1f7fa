import itertools

import numpy as np
import pytest

from scpnm.datagen import sample_simplex
from scpnm.errors import DomainError, RankError
from scpnm.metrics import (
    affinity_report,
    cross_derivative_fd,
    curvature_residual,
    dominant_rows,
    permutation_mse,
    second_derivative_fd,
    subspace_distance,
)
from scpnm.nonlinearity import DistortionBank, benchmark_bank

rng = np.random.default_rng(0)


def test_subspace_distance_examples():
    S = sample_simplex(3, 200, 0, 1)
    assert subspace_distance(S, S) <= 1e-12
    D = np.diag([2.0, -0.5, 3.0])
    A = rng.normal(size=(3, 3))
    assert subspace_distance(S, D @ A @ S) <= 1e-10
    Q, _ = np.linalg.qr(rng.normal(size=(12, 6)))
    assert subspace_distance(Q[:, :3].T, Q[:, 3:].T) == pytest.approx(1.0, abs=1e-12)


def test_subspace_distance_rank_error():
    with pytest.raises(RankError):
        subspace_distance(np.ones((2, 5)), rng.normal(size=(2, 5)))


def test_dominant_rows():
    S = sample_simplex(3, 100, 0, 2)
    F = rng.normal(size=(5, 3)) @ S
    assert subspace_distance(S, dominant_rows(F, 3)) <= 1e-10


def brute_force_mse(S, Shat):
    U = S / np.linalg.norm(S, axis=1, keepdims=True)
    V = Shat / np.linalg.norm(Shat, axis=1, keepdims=True)
    K, N = S.shape
    return min(np.mean(np.sum((U - V[list(p)]) ** 2, axis=1)) for p in itertools.permutations(range(K)))


def test_permutation_mse():
    S = sample_simplex(3, 50, 0, 3)
    assert permutation_mse(S, S) == 0.0
    Shat = S[[2, 0, 1]] * np.array([[0.5], [3.0], [7.0]])
    assert permutation_mse(S, Shat) <= 1e-12
    a, b = rng.random((3, 40)), rng.random((3, 40))
    assert permutation_mse(a, b) == pytest.approx(brute_force_mse(a, b), rel=1e-12)
    assert permutation_mse(a, b) == pytest.approx(permutation_mse(b, a), rel=1e-12)
    with pytest.raises(DomainError):
        permutation_mse(np.zeros((2, 3)), np.ones((2, 3)))


def test_second_difference_exact_on_cubics():
    assert second_derivative_fd(lambda z: z**2, 0.3, 0.1) == pytest.approx(2.0, abs=1e-12)
    assert abs(second_derivative_fd(lambda z: 4 * z - 1, 2.0, 0.1)) <= 1e-12 * 10
    cubic = lambda z: 2 * z**3 - z**2 + 5
    for z in (-1.0, 0.0, 0.7):
        assert second_derivative_fd(cubic, z, 0.05) == pytest.approx(12 * z - 2, abs=1e-9)
    # quartic: truncation error is exactly d^2 * 12 / 12 * 1 for z^4 at z=1
    assert second_derivative_fd(lambda z: z**4, 1.0, 0.1) == pytest.approx(12.02, abs=1e-10)


def test_cross_difference():
    assert cross_derivative_fd(lambda x, y: x * y, (0.3, -2.0), (0.5, 0.01)) == pytest.approx(1.0, abs=1e-12)
    assert abs(cross_derivative_fd(lambda x, y: np.sin(x) + y**3, (0.2, 0.4), (1e-2, 1e-2))) <= 1e-10
    assert cross_derivative_fd(lambda x, y: x**2 * y**2, (1.0, 1.0), (0.1, 0.1)) == pytest.approx(4.0, abs=1e-10)


class PlantedEncoder:
    """f_m = slope_m * g_m^{-1} + intercept_m, computed through the exact inverse."""

    def __init__(self, g, slope, intercept, power=1):
        self.g, self.slope, self.intercept, self.power = g, slope, intercept, power

    def __call__(self, X):
        Y = np.vstack([gm.invert(X[m]) for m, gm in enumerate(self.g)])
        return self.slope[:, None] * Y**self.power + self.intercept[:, None]


def test_affinity_plant_and_recover():
    g = benchmark_bank(3)
    A = np.array([[0.8, -0.3, 0.5], [0.1, 0.9, -0.6], [-0.4, 0.2, 0.7]])
    S = sample_simplex(3, 2000, 0, 4)
    slope, icpt = np.array([0.5, -2.0, 1.5]), np.array([0.1, 0.3, -0.2])
    rep = affinity_report(PlantedEncoder(g, slope, icpt), g, A, S)
    assert np.all(rep.r2 >= 1 - 1e-10)
    np.testing.assert_allclose(rep.slope, slope, rtol=1e-7)
    np.testing.assert_allclose(rep.intercept, icpt, atol=1e-7)
    assert rep.sum_intercepts == pytest.approx(0.2, abs=1e-6)


def test_affinity_identity():
    g = DistortionBank.identity(3)
    rep = affinity_report(lambda X: X, g, np.eye(3), sample_simplex(3, 500, 0, 5))
    np.testing.assert_allclose(rep.slope, 1.0, rtol=1e-12)
    np.testing.assert_allclose(rep.intercept, 0.0, atol=1e-12)
    np.testing.assert_allclose(rep.r2, 1.0)
    assert len(rep.rows()) == 3


def test_curvature_planted():
    g = DistortionBank.identity(3)
    A = np.eye(3)
    grid = sample_simplex(3, 200, 0.05, 6)
    assert curvature_residual(lambda X: 2 * X + 1, g, A, grid) <= 1e-8
    # y^2 per channel: h'' = 2 on every channel, so the mean of ||h''||^2 is 4M
    assert curvature_residual(lambda X: X**2, g, A, grid) == pytest.approx(12.0, rel=1e-6)
    with pytest.raises(DomainError):
        curvature_residual(lambda X: X, g, A, np.eye(3))
