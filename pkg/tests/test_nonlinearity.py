import math

import numpy as np
import pytest

from scpnm.errors import DomainError, ParameterError
from scpnm.nonlinearity import (
    Custom,
    Distortion,
    DistortionBank,
    ExpScale,
    Identity,
    SigmoidAffine,
    TanhAffine,
    derivative,
    evaluate,
    invert,
    is_monotone,
    benchmark_bank,
    random_bank,
)

rng = np.random.default_rng(2024)
Y100 = rng.uniform(-3, 3, 100)


def test_eval_examples():
    assert evaluate(SigmoidAffine(5, 0.3), 0.0) == pytest.approx(2.5, abs=1e-15)
    assert evaluate(TanhAffine(-3, -0.2), 0.0) == 0.0
    assert evaluate(ExpScale(0.4), 1.0) == pytest.approx(0.4 * math.e, rel=1e-15)
    assert evaluate(ExpScale(0.4), 1.0) == pytest.approx(1.0873127313836, abs=1e-12)


def test_derivative_examples():
    assert derivative(Identity(), 3.7, 1) == 1.0
    assert derivative(SigmoidAffine(5, 0.3), 0.0, 1) == pytest.approx(1.55, abs=1e-15)


@pytest.mark.parametrize("g", [*benchmark_bank(5), Custom([-6, 0, 1, 6], [-3, 0, 4, 5])])
def test_derivatives_match_central_differences(g):
    h = 1e-5
    fd1 = (g(Y100 + h) - g(Y100 - h)) / (2 * h)
    np.testing.assert_allclose(g.derivative(Y100, 1), fd1, rtol=1e-6, atol=1e-9)
    if g.kind != "Custom":
        d1 = lambda y: g.derivative(y, 1)
        fd2 = (d1(Y100 + h) - d1(Y100 - h)) / (2 * h)
        np.testing.assert_allclose(g.derivative(Y100, 2), fd2, rtol=1e-6, atol=1e-8)


def test_invert_identity():
    assert invert(Identity(), 0.7) == 0.7


@pytest.mark.parametrize("g", list(benchmark_bank(5)))
def test_invert_round_trip(g):
    y = invert(g, g(Y100))
    np.testing.assert_allclose(y, Y100, atol=1e-9)
    x = g(Y100)
    assert np.all(np.abs(g(y) - x) <= 1e-12 * np.maximum(1, np.abs(x)))


def test_invert_outside_bracket_is_domain_error():
    g = SigmoidAffine(5, 0.3)
    with pytest.raises(DomainError):
        invert(g, g(7.0), bracket=(-6, 6))
    with pytest.raises(DomainError):
        invert(g, 1.0, bracket=(0, 1))


def test_benchmark_bank_is_monotone_on_working_interval():
    for g in benchmark_bank(5):
        assert is_monotone(g)
    for g in random_bank(20, seed=3):
        assert is_monotone(g)


def test_non_monotone_parameters_rejected():
    with pytest.raises(ParameterError):
        TanhAffine(5.0, -0.3)  # slope changes sign near |y| = 2.09
    with pytest.raises(ParameterError):
        SigmoidAffine(1.0, -0.1)
    SigmoidAffine(1.0, -0.3)  # |b| > |a|/4 keeps one sign
    with pytest.raises(ParameterError):
        ExpScale(0.0)
    with pytest.raises(ParameterError):
        Distortion("Cubic", (1.0,))


def test_custom_table_interpolates_and_extrapolates():
    g = Custom([0, 1, 2], [0, 2, 3])
    np.testing.assert_allclose(g([0.5, 1.5, -1, 3]), [1.0, 2.5, -2.0, 4.0])
    assert invert(g, 2.5, (0, 2)) == pytest.approx(1.5, abs=1e-12)
    with pytest.raises(ParameterError):
        Custom([0, 1, 2], [0, 2, 1])


def test_bank_apply_and_serialization():
    bank = benchmark_bank(3)
    Y = rng.standard_normal((3, 10))
    X = bank(Y)
    for m in range(3):
        np.testing.assert_array_equal(X[m], bank[m](Y[m]))
    assert DistortionBank.from_list(bank.to_list()) == bank
    with pytest.raises(ParameterError):
        bank(Y[:2])
