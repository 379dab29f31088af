import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairbandit.numerics import (InvalidInputError, SingularSystemError, batch_fit,
                                 interval_halfwidth, normal_quantile, ols_fit,
                                 predictive_variance, rng_stream)


def erf_cdf(z):
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def bisect_quantile(p):
    lo, hi = -40.0, 40.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if erf_cdf(mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# frozen from bisect_quantile
Q975 = 1.9599639845400536
Q0025 = -2.807033768343808


def test_ols_identity_design():
    np.testing.assert_allclose(ols_fit([[1, 0], [0, 1]], [3, 5]), [3, 5], atol=1e-12)


def test_ols_normal_equation_hand_solve():
    # X^T X = 14, X^T Y = 28
    np.testing.assert_allclose(ols_fit([[1], [2], [3]], [2, 4, 6]), [2.0], atol=1e-12)


def test_ols_ridge_underdetermined():
    np.testing.assert_allclose(ols_fit([[1, 1]], [2], ridge=1e-6), [1.0, 1.0], atol=1e-5)


def test_ols_errors():
    with pytest.raises(InvalidInputError):
        ols_fit([[1, 0], [0, 1]], [1, 2, 3])
    with pytest.raises(SingularSystemError):
        ols_fit([[1, 1]], [2], ridge=0.0)
    with pytest.raises(InvalidInputError):
        ols_fit([[1.0]], [1.0], ridge=-1.0)


def test_ols_recovers_truth_on_square_designs():
    rng = np.random.default_rng(11)
    for _ in range(100):
        d = int(rng.integers(1, 6))
        X = rng.normal(size=(d, d)) + 3 * np.eye(d)
        beta = rng.normal(size=d)
        got = ols_fit(X, X @ beta)
        oracle = np.linalg.solve(X.T @ X, X.T @ (X @ beta))
        np.testing.assert_allclose(got, beta, atol=1e-8)
        np.testing.assert_allclose(got, oracle, atol=1e-8)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_ols_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(12, 3))
    Y = rng.normal(size=12)
    perm = rng.permutation(12)
    np.testing.assert_allclose(ols_fit(X, Y, 1e-6), ols_fit(X[perm], Y[perm], 1e-6), atol=1e-9)


def test_predictive_variance_examples():
    assert predictive_variance([[1, 0], [0, 1]], [1, 0], 1.0, 0.0) == pytest.approx(1.0)
    assert predictive_variance([[1, 0], [0, 1], [1, 0], [0, 1]], [1, 0], 1.0, 0.0) == pytest.approx(0.5)
    assert predictive_variance([[1, 0]], [0, 0], 1.0, 0.0) == 0.0
    with pytest.raises(InvalidInputError):
        predictive_variance([[1, 0]], [1, 0, 0], 1.0, 1e-6)


def test_batch_fit_matches_scalar_kernels():
    rng = np.random.default_rng(3)
    grams, xtys, xs, expect_b, expect_v = [], [], [], [], []
    for _ in range(6):
        X = rng.random((8, 3))
        Y = rng.normal(size=8)
        x = rng.random(3)
        grams.append(X.T @ X)
        xtys.append(X.T @ Y)
        xs.append(x)
        expect_b.append(ols_fit(X, Y, 1e-6))
        expect_v.append(predictive_variance(X, x, 1.0, 1e-6))
    coef, quad = batch_fit(np.array(grams), np.array(xtys), np.array(xs), 1e-6)
    np.testing.assert_allclose(coef, expect_b, rtol=1e-9)
    np.testing.assert_allclose(quad, expect_v, rtol=1e-9)


def test_quantile_examples():
    assert normal_quantile(0.5) == 0.0
    assert normal_quantile(0.975) == pytest.approx(Q975, abs=1e-8)
    assert normal_quantile(0.0025) == pytest.approx(Q0025, abs=1e-8)
    assert bisect_quantile(0.975) == pytest.approx(Q975, abs=1e-12)


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5])
def test_quantile_domain(p):
    with pytest.raises(InvalidInputError):
        normal_quantile(p)


def test_quantile_inverts_cdf_on_log_grid():
    lower = np.logspace(-6, math.log10(0.5), 200)
    grid = np.concatenate([lower, 1.0 - lower])
    worst = max(abs(erf_cdf(normal_quantile(p)) - p) for p in grid)
    assert worst <= 1e-8


def test_quantile_matches_bisection_oracle():
    for p in np.linspace(0.001, 0.999, 61):
        assert abs(normal_quantile(p) - bisect_quantile(p)) <= 1e-9


@settings(max_examples=200, deadline=None)
@given(st.floats(0.5, 1.0, exclude_max=True))
def test_quantile_antisymmetric(q):
    # 1 - q is exact for q in [0.5, 1)
    assert normal_quantile(q) == -normal_quantile(1.0 - q)


def test_halfwidth_examples():
    assert interval_halfwidth(0.0, 0.01) == 0.0
    assert interval_halfwidth(1.0, 0.0025) == pytest.approx(-Q0025, abs=1e-8)
    assert interval_halfwidth(4.0, 0.0025) == pytest.approx(-2 * Q0025, abs=1e-8)
    with pytest.raises(InvalidInputError):
        interval_halfwidth(1.0, 0.5)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 100), st.floats(0, 100), st.floats(1e-9, 0.49), st.floats(1e-9, 0.49))
def test_halfwidth_monotone(v1, v2, p1, p2):
    (va, vb), (pa, pb) = sorted((v1, v2)), sorted((p1, p2))
    assert interval_halfwidth(va, pa) <= interval_halfwidth(vb, pa)
    assert interval_halfwidth(va, pa) >= interval_halfwidth(va, pb)


def test_halfwidth_two_sided_coverage():
    # P(|N(0, 4)| > width) = 2 * tail
    width = interval_halfwidth(4.0, 0.01)
    assert 2 * (1 - erf_cdf(width / 2.0)) == pytest.approx(0.02, abs=1e-10)


def test_rng_stream_reproducible():
    a = rng_stream(42, "slate", trial=3).random(10**6)
    b = rng_stream(42, "slate", trial=3).random(10**6)
    assert np.array_equal(a, b)


def test_rng_streams_distinct():
    a = rng_stream(42, "slate").random(10**4)
    b = rng_stream(42, "noise").random(10**4)
    c = rng_stream(42, "slate", trial=1).random(10**4)
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.05
    assert abs(np.corrcoef(a, c)[0, 1]) < 0.05
    assert not np.array_equal(a, c)
