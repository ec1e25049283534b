import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy import stats

from impulse_weights.errors import (AsymmetricRLaw, CellTooSmall, DegenerateVariance,
                                    InsufficientData, RequiresLatent, WeakIdentification)
from impulse_weights.lab import (DgpSpec, generate, hetero_iv_estimate, hetero_weights,
                                 rank1_stat, split_uniform, symmetric_twin)
from impulse_weights.lab.dgp import DrawSet
from impulse_weights.lab.hetero import twin_outcomes
from impulse_weights.numcore import Dataset, RngStream


def test_iv_ratio_matches_direct_covariances():
    d = generate(DgpSpec("hetero_rigobon"), 3000, 2).observed
    r = hetero_iv_estimate(d)
    z = (d["d"] - d["d"].mean()) * d["y1"]
    direct = np.cov(d["y2"], z)[0, 1] / np.cov(d["y1"], z)[0, 1]
    assert_allclose(r.estimates[1], direct, rtol=1e-12)
    assert r.estimates[0] == 1.0 and r.se[0] == 0.0
    assert r.estimate("y2") == r.estimates[1]


def test_iv_ratio_recovers_linear_effect():
    r = hetero_iv_estimate(generate(DgpSpec("hetero_rigobon"), 50000, 3))
    assert abs(r.estimates[1] - 2.0) <= 3 * r.se[1]


def test_iv_ratio_se_matches_monte_carlo_spread():
    spec = DgpSpec("hetero_rigobon")
    est, se = [], []
    for s in range(300):
        r = hetero_iv_estimate(generate(spec, 2000, 1000 + s))
        est.append(r.estimates[1])
        se.append(r.se[1])
    ratio = np.std(est) / np.mean(se)
    assert 0.85 < ratio < 1.15


def test_multiplicative_design_gives_spurious_effect():
    r = hetero_iv_estimate(generate(DgpSpec("multiplicative"), 50000, 4))
    assert abs(r.estimates[1]) >= 5 * r.se[1]


def test_even_first_outcome_gives_zero_effect():
    spec = DgpSpec("hetero_rigobon", {"psi": ["square", {"poly": [0, 2]}]})
    r = hetero_iv_estimate(generate(spec, 50000, 5))
    assert abs(r.estimates[1]) <= 3 * r.se[1]


def test_iv_warnings_and_errors():
    spec = DgpSpec("hetero_rigobon", {"sigma": {"0": 1.0, "1": 1.0}})
    with pytest.warns(WeakIdentification):
        hetero_iv_estimate(generate(spec, 5000, 1))
    d = Dataset({"d": np.ones(50), "y1": np.arange(50.0), "y2": np.arange(50.0)})
    with pytest.raises(DegenerateVariance):
        hetero_iv_estimate(d)
    with pytest.raises(InsufficientData):
        hetero_iv_estimate(Dataset({"d": np.r_[0.0, 1, 0], "y1": np.ones(3), "y2": np.ones(3)}))
    with pytest.raises(ValueError):
        hetero_iv_estimate(Dataset({"d": np.r_[0.0, 1] * 10, "y1": np.ones(20)}))


def _normal_pair(n, seed):
    return generate(DgpSpec("hetero_rigobon"), n, seed)


def test_weights_integral_is_sample_covariance():
    d = _normal_pair(5000, 6)
    hw = hetero_weights(d)
    x, dd = d.latent["x"], d.latent["d"]
    a = x * (dd - dd.mean())
    a = a - a.mean()
    assert_allclose(hw.weight_fn.integral(-np.inf, np.inf), np.mean(x * a), rtol=1e-10)


def test_weights_summation_by_parts_identity():
    d = _normal_pair(4000, 7)
    hw = hetero_weights(d)
    x, dd = d.latent["x"], d.latent["d"]
    a = x * (dd - dd.mean())
    a = a - a.mean()
    fn = hw.weight_fn
    for psi in (np.tanh, lambda v: v ** 3, np.cos):
        lhs = np.mean(psi(x) * a)
        rhs = float(np.sum(fn.values * np.diff(psi(fn.knots))))
        assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-12)


def test_weights_normal_regimes_integral_and_overlay():
    n = 200_000
    d = _normal_pair(n, 8)
    hw = hetero_weights(d)
    x, dd = d.latent["x"], d.latent["d"]
    q = x * x * (dd - dd.mean())
    assert abs(hw.weight_fn.integral(-np.inf, np.inf) - 3 * 0.25) <= 3 * q.std() / math.sqrt(n)
    grid = np.linspace(-3, 3, 13)
    closed = 0.25 * (4 * stats.norm.pdf(grid, scale=2) - stats.norm.pdf(grid))
    assert_allclose(hw.overlay(grid), closed, rtol=1e-10, atol=1e-14)
    assert np.all(closed > 0)
    se = hw.weight_fn.se_at(grid)
    assert np.all(np.abs(hw(grid) - closed) <= 4 * se)


def test_weights_turn_negative_with_exponential_regime():
    spec = DgpSpec("hetero_rigobon", {"x_laws": {"0": {"dist": "normal"},
                                                 "1": {"dist": "exponential_centered"}}})
    d = generate(spec, 200_000, 9)
    hw = hetero_weights(d)
    target = -0.25 * stats.norm.pdf(2.0)
    assert_allclose(hw.overlay(-2.0), target, rtol=1e-12)
    v, se = hw(-2.0), hw.weight_fn.se_at(-2.0)
    assert abs(v - target) <= 3 * se
    assert v < -3 * se


def test_weights_se_against_direct_influence():
    d = _normal_pair(600, 10)
    hw = hetero_weights(d)
    x, dd = d.latent["x"], d.latent["d"]
    n = x.shape[0]
    b = dd - dd.mean()
    for k in (50, 300, 550):
        knot = np.sort(np.unique(x))[k]
        ind = (x >= knot).astype(float)
        w = x * b
        om = np.mean((ind - ind.mean()) * w)
        # influence of cov(ind, psi1 (D - mean D)) including the mean of D
        c = np.mean((ind - ind.mean()) * x)
        psi = (ind - ind.mean()) * (w - w.mean()) - om - c * b
        assert_allclose(hw(knot), om, rtol=1e-9, atol=1e-15)
        assert_allclose(hw.weight_fn.se_at(knot), np.sqrt(np.mean(psi ** 2) / n), rtol=1e-8)


def test_constant_regime_gives_zero_weights():
    d = _normal_pair(500, 11)
    lat = d.latent.with_column("d", np.ones(500))
    hw = hetero_weights(DrawSet(d.observed, lat, d.seed, d.spec))
    assert_array_equal(hw.weight_fn.values, 0.0)
    assert hw.regime_var == 0.0


def test_weights_need_latent_additive_design():
    with pytest.raises(RequiresLatent):
        hetero_weights(generate(DgpSpec("multiplicative"), 100, 1))
    with pytest.raises(RequiresLatent):
        hetero_weights(generate(DgpSpec("linear_static"), 100, 1))
    with pytest.raises(RequiresLatent):
        hetero_weights(_normal_pair(100, 1).observed)


def test_split_uniform_properties():
    u = RngStream(5, 0).uniform(200_000)
    tau, parts = split_uniform(u, 3)
    assert set(np.unique(tau)) == {-1.0, 1.0}
    assert abs(tau.mean()) <= 4 / math.sqrt(u.shape[0])
    for p in parts:
        assert np.all((p > 0) & (p < 1))
        assert stats.kstest(p[:20000], "uniform").pvalue > 0.001
    mat = np.corrcoef(np.vstack([tau, *parts]))
    assert np.max(np.abs(mat - np.eye(4))) <= 4 / math.sqrt(u.shape[0])
    t2, p2 = split_uniform(u, 3)
    assert_array_equal(t2, tau)


def test_split_uniform_bits_by_hand():
    # leading bit 1, then 52 bits alternating between two parts
    bits = (1 << 52) | int("10" * 26, 2)
    u = np.array([bits / 2.0 ** 53])
    tau, (a, b) = split_uniform(u, 2)
    assert tau[0] == 1.0
    assert a[0] == ((1 << 26) - 1 + 0.5) / 2 ** 26
    assert b[0] == 0.5 / 2 ** 26


def test_twin_matches_observed_law_and_is_even():
    d = _normal_pair(20000, 12)
    tw = symmetric_twin(d)
    assert tw.evenness_exact
    assert all(r.passed for r in tw.ks.values())
    assert tw.passed
    assert abs(tw.odd_slope) <= 3 * tw.odd_slope_se
    for gap in tw.cov_gap.values():
        assert gap.shape == (2, 2)


def test_twin_map_ignores_sign_of_shock():
    d = _normal_pair(1000, 13)
    ut = RngStream(1, 2).uniform(1000)
    flipped = DrawSet(d.observed, d.latent.with_column("x", -d.latent["x"]), d.seed, d.spec)
    assert_array_equal(twin_outcomes(d, ut), twin_outcomes(flipped, ut))


def test_twin_conditional_mean_is_even_in_bins():
    d = _normal_pair(20000, 14)
    tw = symmetric_twin(d)
    x = d.latent["x"]
    y = tw.twin["y2"]
    edges = np.quantile(x, np.linspace(0, 1, 41))
    idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, 39)
    mids = np.array([x[idx == j].mean() for j in range(40)])
    means = np.array([y[idx == j].mean() for j in range(40)])
    from impulse_weights.numcore import ols
    fit = ols(means, np.column_stack([mids, np.abs(mids)]), se="hc1")
    assert abs(fit.coef[1]) <= 3 * fit.se[1]


def test_twin_rejects_asymmetric_shock():
    spec = DgpSpec("hetero_rigobon", {"r_law": {"dist": "exponential_centered"}})
    with pytest.raises(AsymmetricRLaw):
        symmetric_twin(generate(spec, 200, 1))


def test_rank1_linear_and_nonlinear():
    lin = DgpSpec("hetero_rigobon", {"psi": ["identity", {"poly": [0, 2]}, {"poly": [0, -0.5]}]})
    r = rank1_stat(generate(lin, 50000, 15))
    assert r.ratio <= 0.05 and not r.degenerate
    nl = DgpSpec("multiplicative", {"gamma": ["identity", "identity", "identity"]})
    r2 = rank1_stat(generate(nl, 50000, 16))
    assert r2.ratio >= 0.2


def test_rank1_difference_matrix():
    d = generate(DgpSpec("hetero_rigobon"), 2000, 17).observed
    r = rank1_stat(d)
    Y = np.column_stack([d["y1"], d["y2"]])
    s1 = d["d"] == 1
    diff = np.cov(Y[s1].T, bias=True) - np.cov(Y[~s1].T, bias=True)
    assert_allclose(r.delta_cov, diff, rtol=1e-10)
    assert_allclose(sorted(np.abs(r.eigenvalues)), sorted(np.abs(np.linalg.eigvalsh(diff))))
    assert abs(r.eigenvalues[0]) >= abs(r.eigenvalues[1])


def test_rank1_flags_homoskedastic_design():
    spec = DgpSpec("hetero_rigobon", {"sigma": {"0": 1.0, "1": 1.0}})
    assert rank1_stat(generate(spec, 20000, 18)).degenerate


def test_rank1_errors():
    d = Dataset({"d": np.r_[np.zeros(10), np.ones(100)], "y1": np.arange(110.0),
                 "y2": np.arange(110.0) ** 2})
    with pytest.raises(CellTooSmall):
        rank1_stat(d)
    with pytest.raises(ValueError):
        rank1_stat(Dataset({"d": np.arange(60.0) % 3, "y1": np.ones(60), "y2": np.ones(60)}))
