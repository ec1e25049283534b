import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose
from scipy import stats

from impulse_weights.errors import DegenerateSample, InsufficientData, RankDeficient
from impulse_weights.numcore import (Dataset, ecdf, kde, kde_deriv, local_linear, newey_west_lags,
                                     ols, residualize, rng_stream, silverman_bandwidth)


def _sandwich(X, e, lags=None):
    # per-observation loop, kept deliberately naive
    n, k = X.shape
    bread = np.linalg.inv(X.T @ X)
    meat = np.zeros((k, k))
    for i in range(n):
        meat += np.outer(X[i], X[i]) * e[i] ** 2
    if lags:
        for lag in range(1, lags + 1):
            w = 1 - lag / (lags + 1)
            for t in range(lag, n):
                g = np.outer(X[t], X[t - lag]) * e[t] * e[t - lag]
                meat += w * (g + g.T)
    return bread @ meat @ bread * n / (n - k)


def test_ols_exact_line():
    fit = ols([-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0])
    assert fit["x1"] == pytest.approx(2.0)
    assert_allclose(fit.resid, 0.0, atol=1e-14)


def test_ols_intercept_only():
    fit = ols([1.0, 1.0, 1.0])
    assert fit["const"] == pytest.approx(1.0)
    assert fit.r2 == 0.0


def test_ols_square_on_three_points():
    fit = ols([1.0, 0.0, 1.0], [-1.0, 0.0, 1.0])
    assert fit["x1"] == pytest.approx(0.0, abs=1e-14)
    assert fit["const"] == pytest.approx(2.0 / 3.0)


def test_ols_hc1_matches_naive_sandwich():
    rs = rng_stream(3)
    x = rs.normal(200)
    y = 1 + 2 * x + rs.normal(200) * (1 + np.abs(x))
    fit = ols(y, x)
    X = np.column_stack([np.ones(200), x])
    assert_allclose(fit.vcov, _sandwich(X, fit.resid), rtol=1e-10)


def test_ols_newey_west_matches_naive_loop():
    rs = rng_stream(4)
    e = rs.normal(150)
    x = np.convolve(rs.normal(152), [1, 0.5, 0.3], mode="valid")
    y = 0.5 * x + e + 0.6 * np.r_[0.0, e[:-1]]
    fit = ols(y, x, se="nw", lags=4)
    X = np.column_stack([np.ones(150), x])
    assert_allclose(fit.vcov, _sandwich(X, fit.resid, lags=4), rtol=1e-10)
    assert ols(y, x, se="nw").lags == newey_west_lags(150) == 3


def test_ols_classical_se():
    x = np.array([0.0, 1.0, 2.0, 3.0])
    y = np.array([0.0, 1.0, 1.0, 3.0])
    fit = ols(y, x, se="classical")
    # slope 0.9, residuals (0.1, 0.2, -0.7, 0.4), s2 = 0.7 / 2, Sxx = 5
    assert fit["x1"] == pytest.approx(0.9)
    assert fit.se_of("x1") == pytest.approx(math.sqrt(0.35 / 5))


def test_ols_errors():
    with pytest.raises(RankDeficient):
        ols([1.0, 2.0, 3.0, 4.0], np.column_stack([[1.0, 2, 3, 4], [2.0, 4, 6, 8]]))
    with pytest.raises(InsufficientData):
        ols([1.0, 2.0], [0.0, 1.0])
    with pytest.raises(ValueError):
        ols([1.0, 2.0, 3.0], [0.0, 1.0, 2.0], se="bogus")


@settings(max_examples=60, deadline=None)
@given(st.integers(5, 60), st.integers(1, 3), st.integers(0, 2 ** 31))
def test_ols_residual_orthogonality(n, k, seed):
    rs = rng_stream(seed)
    X = rs.normal((n, k)) * rs.uniform(k) * 10
    y = rs.normal(n) * 100 + X.sum(axis=1)
    try:
        fit = ols(y, X)
    except (RankDeficient, InsufficientData):
        return
    Xd = np.column_stack([np.ones(n), X])
    scale = np.abs(Xd).max(axis=0) * np.abs(y).max()
    assert np.all(np.abs(Xd.T @ fit.resid) / n <= 1e-8 * scale)
    ev = np.linalg.eigvalsh(fit.vcov)
    assert np.allclose(fit.vcov, fit.vcov.T) and ev.min() >= -1e-12 * max(ev.max(), 1e-300)


def test_residualize_examples():
    w = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
    assert_allclose(residualize(w, w), 0.0, atol=1e-14)
    # w^2 has mean 2 and no covariance with w on this grid
    assert_allclose(residualize(w + w ** 2, w), [2.0, -1.0, -2.0, -1.0, 2.0], atol=1e-13)
    t = np.array([1.0, -1.0, -1.0, 1.0])
    c = np.array([1.0, 1.0, -1.0, -1.0])
    assert_allclose(residualize(t + 5.0, c), t, atol=1e-14)


def test_residualize_mean_and_orthogonality():
    rs = rng_stream(5)
    W = rs.normal((300, 2))
    y = rs.normal(300) + W @ [1.0, -2.0] + 4
    r = residualize(y, W)
    assert abs(r.mean()) <= 1e-10
    assert_allclose(W.T @ (r - r.mean()) / 300, 0.0, atol=1e-10)


def test_kde_point_mass_is_the_kernel():
    kd = kde(np.full(10, 1.5), bandwidth=1.0)
    pts = np.linspace(-2, 5, 15)
    assert_allclose(kd.density(pts), stats.norm.pdf(pts - 1.5), rtol=1e-12)
    assert_allclose(kde_deriv(kd, pts), -(pts - 1.5) * stats.norm.pdf(pts - 1.5), rtol=1e-12)


def test_kde_normal_sample():
    x = rng_stream(6).normal(10_000)
    kd = kde(x)
    assert abs(kd.density([0.0])[0] - 0.3989) <= 0.03
    sym = np.r_[x, -x]
    assert abs(kde(sym).derivative([0.0])[0]) <= 0.02


def test_kde_normalization_by_quadrature():
    x = rng_stream(7).normal(400) ** 3
    kd = kde(x)
    h = kd.bandwidth
    grid = np.linspace(x.min() - 5 * h, x.max() + 5 * h, 400_001)
    mass = np.trapezoid(kd.density(grid), grid)
    assert abs(mass - 1.0) <= 1e-6
    assert np.all(kd.density(grid) >= 0)


def test_kde_matches_direct_formula_on_both_paths():
    rs = rng_stream(8)
    for n, m in ((300, 200), (6000, 3000)):  # second case exceeds the direct budget
        x = rs.normal(n) * 2 + 1
        pts = np.linspace(-6, 8, m)
        kd = kde(x)
        u = (pts[:, None] - x[None, :]) / kd.bandwidth
        f = stats.norm.pdf(u).mean(axis=1) / kd.bandwidth
        df = (-u * stats.norm.pdf(u)).mean(axis=1) / kd.bandwidth ** 2
        assert_allclose(kd.density(pts), f, rtol=1e-6, atol=1e-9)
        assert_allclose(kd.derivative(pts), df, rtol=1e-5, atol=1e-8)


def test_kde_leave_one_out():
    x = rng_stream(9).normal(50)
    kd = kde(x, 0.4)
    for i in (0, 17, 49):
        rest = np.delete(x, i)
        u = (x[i] - rest) / 0.4
        assert kd.density(leave_one_out=True)[i] == pytest.approx(stats.norm.pdf(u).mean() / 0.4)
        assert kd.derivative(leave_one_out=True)[i] == pytest.approx(
            (-u * stats.norm.pdf(u)).mean() / 0.16)


def test_kde_errors_and_bandwidth():
    with pytest.raises(DegenerateSample):
        kde(np.ones(20))
    x = np.arange(10.0)
    assert silverman_bandwidth(x) == pytest.approx(1.06 * np.std(x) * 10 ** -0.2)


def test_local_linear_is_exact_on_lines():
    x = rng_stream(10).normal(500)
    level, slope = local_linear(x, 3 - 2 * x, np.array([-1.0, 0.0, 1.5]), 0.3)
    assert_allclose(slope, -2.0, rtol=1e-9)
    assert_allclose(level, [5.0, 3.0, 0.0], atol=1e-9)


def test_ecdf_examples():
    s = [1.0, 2.0, 2.0, 4.0]
    assert ecdf(s, 0.5) == 0.0
    assert ecdf(s, 4.0) == 1.0
    assert ecdf(s, 2.0) == 0.75
    assert ecdf(s, 1.999) == 0.25


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=50),
       st.floats(-1e6, 1e6), st.floats(-1e6, 1e6))
def test_ecdf_monotone(sample, a, b):
    lo, hi = min(a, b), max(a, b)
    F = ecdf(sample)
    assert 0.0 <= F(lo) <= F(hi) <= 1.0


def test_rng_determinism_and_moments():
    a, b = rng_stream(11, 2), rng_stream(11, 2)
    assert np.array_equal(a.uniform(100), b.uniform(100))
    assert not np.array_equal(rng_stream(11, 3).uniform(100), rng_stream(11, 2).uniform(100))
    assert np.array_equal(rng_stream(1).child(4).normal(5), rng_stream(1, (0, 4)).normal(5))
    u = rng_stream(12).uniform(100_000)
    assert abs(u.mean() - 0.5) <= 0.01 and u.min() > 0 and u.max() < 1
    z = rng_stream(13).normal(100_000)
    assert abs(z.var() - 1.0) <= 0.03
    e = rng_stream(14).exponential(100_000)
    assert abs(e.mean() - 1.0) <= 0.01
    bern = rng_stream(15).bernoulli(0.3, 100_000)
    assert set(np.unique(bern)) == {0.0, 1.0} and abs(bern.mean() - 0.3) <= 0.01


def test_dataset_checks_lengths():
    with pytest.raises(ValueError):
        Dataset({"a": [1.0, 2.0], "b": [1.0]})
    ds = Dataset({"a": [1, 2, 3]})
    assert ds.n == 3 and ds.columns == ["a"]
    assert ds.with_column("b", [0, 0, 0]).select(["b"]) == Dataset({"b": [0, 0, 0]})
