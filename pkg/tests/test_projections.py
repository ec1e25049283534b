import warnings

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import integrate, stats

from impulse_weights.errors import HorizonTooLong, NegativeWeightRisk, StateDegenerate, WeakNormalizer
from impulse_weights.numcore import Dataset, ols, residualize, rng_stream
from impulse_weights.projections import (add_lags, local_projection, partially_linear_projection,
                                         proxy_projection, quadratic_projection,
                                         state_dependent_projection)
from impulse_weights.weights import observed_weights


def _within(est, target, se, k=3.0):
    return abs(est - target) <= k * se


def test_linear_dgp_recovers_slope():
    rs = rng_stream(31)
    x = rs.normal(10_000)
    r = local_projection(Dataset({"x": x, "y": 2 * x + rs.normal(10_000)}), "y", "x")[0]
    assert _within(r.beta_h, 2.0, r.se)
    assert r.n == 10_000 and r.h == 0


def test_unrelated_outcome_at_longer_horizons():
    rs = rng_stream(32)
    ds = Dataset({"x": rs.normal(5000), "y": rs.normal(5000)})
    for r in local_projection(ds, "y", "x", horizons=[0, 2, 5]):
        assert _within(r.beta_h, 0.0, r.se)
        assert r.n == 5000 - r.h


def test_cubic_outcome_gives_fourth_moment():
    x = rng_stream(33).normal(20_000)
    r = local_projection(Dataset({"x": x, "y": x ** 3}), "y", "x")[0]
    assert _within(r.beta_h, 3.0, r.se)


def test_frisch_waugh_and_weight_report():
    rs = rng_stream(34)
    n = 800
    W = rs.normal((n, 2))
    x = W @ [0.5, -1.0] + rs.normal(n)
    y = np.r_[0.0, 0.0, np.tanh(x[:-2])] + W[:, 0] + rs.normal(n)
    ds = Dataset({"x": x, "y": y, "w1": W[:, 0], "w2": W[:, 1]})
    r = local_projection(ds, "y", "x", ["w1", "w2"], horizons=[2])[0]
    xt = residualize(x[:-2], W[:-2])
    assert r.beta_h == pytest.approx(ols(y[2:], xt)["x1"], abs=1e-10)
    direct = observed_weights(xt).weight_fn
    assert_allclose(r.weight_report.weight_fn.values, direct.values, atol=1e-14)
    assert r.weight_report.total_mass == pytest.approx(1.0, abs=1e-10)


def test_representation_on_discrete_support():
    rs = rng_stream(35)
    x = rs.integers(0, 5, 3000).astype(float)
    y = np.exp(x / 2) + rs.normal(3000)
    r = local_projection(Dataset({"x": x, "y": y}), "y", "x")[0]
    fn = r.weight_report.weight_fn
    # the report describes the demeaned shock, whose knots are the support minus the mean
    assert_allclose(fn.knots + x.mean(), np.unique(x), atol=1e-12)
    ghat = np.array([y[x == k].mean() for k in np.unique(x)])
    assert r.beta_h == pytest.approx(fn.integrate_against(ghat), abs=1e-10)


def test_horizon_too_long():
    ds = Dataset({"x": np.arange(5.0), "y": np.arange(5.0) ** 2})
    with pytest.raises(HorizonTooLong):
        local_projection(ds, "y", "x", horizons=[3])
    with pytest.raises(ValueError):
        local_projection(ds, "y", "x", horizons=[-1])


def test_quadratic_exact_square():
    x = rng_stream(36).normal(2000)
    q = quadratic_projection(Dataset({"x": x, "y": x ** 2}), "y", "x")
    assert q.beta2 == pytest.approx(1.0, abs=1e-12)
    assert q.beta1 == pytest.approx(0.0, abs=1e-12)
    assert_allclose(q.derivative_fn([-1.0, 2.0]), [-2.0, 4.0], atol=1e-11)


def test_quadratic_cubic_outcome():
    x = rng_stream(37).normal(50_000)
    q = quadratic_projection(Dataset({"x": x, "y": x ** 3}), "y", "x")
    assert _within(q.beta2, 0.0, q.se[2])
    assert _within(q.beta1, 3.0, q.se[1])


def test_quadratic_moments_of_smooth_function():
    # oracles by quadrature against the normal density
    x = rng_stream(38).normal(100_000)
    q = quadratic_projection(Dataset({"x": x, "y": np.tanh(x)}), "y", "x")
    phi = stats.norm.pdf
    d1 = integrate.quad(lambda v: phi(v) / np.cosh(v) ** 2, -12, 12)[0]
    d2 = integrate.quad(lambda v: -2 * np.tanh(v) / np.cosh(v) ** 2 * phi(v), -12, 12)[0]
    assert _within(q.beta1, d1, q.se[1])
    assert _within(2 * q.beta2, d2, 2 * q.se[2])


def test_sign_reversal_for_increasing_function():
    x = rng_stream(39).normal(100_000)
    q = quadratic_projection(Dataset({"x": x, "y": stats.norm.cdf(x - 1)}), "y", "x")
    assert q.derivative_fn(-3.0) < 0
    lo, hi = q.sign_reversal_region
    assert lo == -np.inf and hi > -3.0
    assert q.derivative_fn(hi) == pytest.approx(0.0, abs=1e-12)
    assert _within(q.beta1, 0.2197, q.se[1]) and _within(2 * q.beta2, 0.1098, 2 * q.se[2])


def test_sign_reversal_region_analytic():
    from impulse_weights.projections import QuadLpResult
    z = np.zeros(3)
    assert QuadLpResult(0, 1.0, 0.5, z, np.eye(3)).sign_reversal_region == (-np.inf, -1.0)
    assert QuadLpResult(0, 1.0, -0.25, z, np.eye(3)).sign_reversal_region == (2.0, np.inf)
    assert QuadLpResult(0, 1.0, 0.0, z, np.eye(3)).sign_reversal_region is None
    se = QuadLpResult(0, 1.0, 0.5, z, np.diag([1.0, 4.0, 1.0])).derivative_se(1.0)
    assert se == pytest.approx(np.sqrt(4.0 + 4.0))


def _state_data(seed, b0, b1, n=20_000):
    rs = rng_stream(seed)
    s = rs.bernoulli(0.4, n)
    x = rs.normal(n)
    w = rs.normal(n)
    y = np.where(s == 1, b1, b0) * x + 0.5 * w + rs.normal(n)
    return Dataset({"x": x, "y": y, "s": s, "w": w})


def test_state_dependent_same_dgp():
    res = state_dependent_projection(_state_data(40, 1.0, 1.0), "y", "x", "s", ["w"])
    a, b = res[0.0][0], res[1.0][0]
    assert abs(a.beta_h - b.beta_h) <= 3 * np.hypot(a.se, b.se)


def test_state_dependent_different_slopes_and_subsamples():
    ds = _state_data(41, 2.0, -1.0)
    res = state_dependent_projection(ds, "y", "x", "s", ["w"])
    assert _within(res[0.0][0].beta_h, 2.0, res[0.0][0].se)
    assert _within(res[1.0][0].beta_h, -1.0, res[1.0][0].se)
    for lev in (0.0, 1.0):
        sub = ds.take(ds["s"] == lev)
        direct = local_projection(sub, "y", "x", ["w"])[0]
        assert res[lev][0].beta_h == direct.beta_h
        assert res[lev][0].se == direct.se


def test_state_degenerate():
    ds = _state_data(42, 1.0, 1.0, n=100).with_column("s", np.ones(100))
    with pytest.raises(StateDegenerate):
        state_dependent_projection(ds, "y", "x", "s")


def test_partial_cell_means():
    rs = rng_stream(43)
    n = 20_000
    w = rs.integers(0, 3, n).astype(float)
    x = rs.normal(n) * (1 + w) + w
    y = 1.5 * x + np.sin(3 * w) + rs.normal(n)
    r = partially_linear_projection(Dataset({"y": y, "x": x, "w": w}), "y", "x", ["w"],
                                    pi_spec="cell_means")
    assert _within(r.beta, 1.5, r.se)
    assert np.all(r.covariate.pooled.values >= -1e-15)
    assert r.weight_report.total_mass == pytest.approx(1.0, abs=1e-10)


def _square_propensity_oracles(s):
    """Slope of x (1 + w) on x after a linear control in w, for
    w ~ U(0, 1), x = w^2 + v, sd(v) = s, computed two ways."""
    # linear projection of w^2 on w is w - 1/6
    res = lambda w: w * w - w + 1 / 6  # noqa: E731
    q = lambda f: integrate.quad(f, 0, 1, epsabs=1e-13)[0]  # noqa: E731
    var = q(lambda w: res(w) ** 2) + s * s
    direct = (q(lambda w: res(w) * w * w * (1 + w)) + s * s * q(lambda w: 1 + w)) / var
    cond_x2 = lambda w: w ** 4 + s * s  # noqa: E731
    weighted = q(lambda w: (cond_x2(w) - (w - 1 / 6) * w * w) * (1 + w)) / var
    return direct, weighted


def test_partial_linear_controls_with_curved_propensity():
    s = 0.03
    direct, weighted = _square_propensity_oracles(s)
    assert direct == pytest.approx(weighted, rel=1e-10)
    assert not 1.0 <= direct <= 2.0  # marginal effects all lie in [1, 2]
    rs = rng_stream(44)
    n = 100_000
    w = rs.uniform(n)
    x = w * w + s * rs.normal(n)
    ds = Dataset({"y": x * (1 + w), "x": x, "w": w})
    with pytest.warns(NegativeWeightRisk):
        r = partially_linear_projection(ds, "y", "x", ["w"])
    assert _within(r.beta, direct, r.se)
    assert r.r2_flexible - r.r2_linear > 0.01


def test_partial_orthogonal_controls_equal_no_controls():
    rs = rng_stream(45)
    x = rs.normal(500)
    w = residualize(rs.normal(500), x)
    y = x + x ** 2 + w + rs.normal(500)
    ds = Dataset({"y": y, "x": x, "w": w})
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NegativeWeightRisk)
        r = partially_linear_projection(ds, "y", "x", ["w"])
    assert r.beta == pytest.approx(local_projection(ds, "y", "x")[0].beta_h, abs=1e-8)


def test_partial_user_basis():
    rs = rng_stream(46)
    w = rs.uniform(2000)
    x = w * w + rs.normal(2000)
    ds = Dataset({"y": 2 * x + rs.normal(2000), "x": x, "w": w})
    r = partially_linear_projection(ds, "y", "x", ["w"], pi_spec="user_basis",
                                    basis=lambda W: np.column_stack([W, W ** 2]))
    fit = ols(ds["y"], np.column_stack([x, w, w * w]))
    assert r.beta == pytest.approx(fit["x1"], abs=1e-12)


def test_proxy_equals_projection_when_proxy_is_shock():
    rs = rng_stream(47)
    x = rs.normal(1000)
    ds = Dataset({"x": x, "y": np.tanh(x) + rs.normal(1000)})
    p = proxy_projection(ds, "y", "x")[0]
    lp = local_projection(ds, "y", "x")[0]
    assert p.beta_h == pytest.approx(lp.beta_h, abs=1e-12)
    # heteroskedasticity-robust without the small-sample factor n / (n - 2)
    assert p.se * np.sqrt(1000 / 998) == pytest.approx(lp.se, rel=1e-10)


def test_proxy_ratio_recovers_relative_effect():
    rs = rng_stream(48)
    n = 20_000
    x = rs.normal(n)
    ds = Dataset({"x": x, "z": x + rs.normal(n), "y": 2 * x + rs.normal(n)})
    r = proxy_projection(ds, "y", "z", normalization_outcome="x", shock="x")[0]
    assert _within(r.beta_h, 2.0, r.se)
    assert r.normalizer == pytest.approx(0.5, abs=0.03)
    assert r.weight_report.total_mass == pytest.approx(np.var(x) / np.var(ds["z"]) * 1.0, rel=0.05)


def test_proxy_ratio_se_matches_monte_carlo_spread():
    est, ses = [], []
    for rep in range(300):
        rs = rng_stream(49, rep)
        x = rs.normal(400)
        ds = Dataset({"x": x, "z": x + rs.normal(400), "y": 2 * x + rs.normal(400) * (1 + x * x)})
        r = proxy_projection(ds, "y", "z", normalization_outcome="x")[0]
        est.append(r.beta_h)
        ses.append(r.se)
    ratio = np.mean(ses) / np.std(est)
    assert 0.85 <= ratio <= 1.15


def test_narrative_proxy_sign():
    rs = rng_stream(50)
    x = rs.normal(20_000)
    z = (x >= 0.5).astype(float) - (x <= -0.5).astype(float)
    ds = Dataset({"x": x, "z": z, "y": np.tanh(x) + rs.normal(20_000)})
    r = proxy_projection(ds, "y", "z", shock="x")[0]
    assert r.beta_h > 3 * r.se
    assert np.all(r.weight_report.weight_fn.values >= 0)


def test_weak_normalizer_warns():
    rs = rng_stream(51)
    ds = Dataset({"x": rs.normal(500), "z": rs.normal(500), "y": rs.normal(500)})
    with pytest.warns(WeakNormalizer):
        proxy_projection(ds, "y", "z", normalization_outcome="x")


def test_add_lags():
    ds = Dataset({"y": np.arange(6.0), "x": 10 + np.arange(6.0)})
    out, names = add_lags(ds, ["y", "x"], 2)
    assert names == ["y_lag1", "y_lag2", "x_lag1", "x_lag2"]
    assert_allclose(out["y"], [2, 3, 4, 5])
    assert_allclose(out["y_lag2"], [0, 1, 2, 3])
    assert_allclose(out["x_lag1"], [11, 12, 13, 14])
