import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy import special

from impulse_weights.amde import jackknife_se
from impulse_weights.errors import DegenerateCovariance
from impulse_weights.lab import (DgpSpec, excess_kurtosis, generate, ica2d, recovered_effect,
                                 shock_effect)
from impulse_weights.numcore import RngStream


def _mixed(n, seed, angle=30.0):
    rs = RngStream(seed, 0)
    s1 = (rs.uniform(n) - 0.5) * math.sqrt(12)
    s2 = rs.child(1).generator.laplace(0, 1 / math.sqrt(2), n)
    th = math.radians(angle)
    R = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
    A = R @ np.diag([1.0, 0.5])
    Y = np.column_stack([s1, s2]) @ A.T
    return Y[:, 0], Y[:, 1], np.column_stack([s1, s2])


def test_recovers_sources_of_linear_mixture():
    y1, y2, S = _mixed(20000, 1)
    r = ica2d(y1, y2)
    C = np.abs(np.corrcoef(r.components.T, S.T)[:2, 2:])
    match = C.argmax(axis=1)
    assert sorted(match) == [0, 1]
    assert np.all(C.max(axis=1) >= 0.95)


def test_components_are_white():
    y1, y2, _ = _mixed(5000, 2)
    r = ica2d(y1, y2)
    c = r.components
    assert_allclose(c.T @ c / c.shape[0], np.eye(2), atol=1e-10)


def test_profile_grid_and_determinism():
    y1, y2, _ = _mixed(3000, 3)
    r = ica2d(y1, y2, grid_step_deg=0.5)
    assert r.angles.shape == (180,) and r.profile.shape == (180,)
    assert 0.0 <= r.angle < 90.0
    assert r.profile.argmax() == int(round(r.angle / 0.5))
    r2 = ica2d(y1.copy(), y2.copy(), grid_step_deg=0.5)
    assert r2.angle == r.angle
    assert_array_equal(r2.unmixing, r.unmixing)


def test_profile_matches_direct_kurtosis():
    y1, y2, _ = _mixed(2000, 4)
    r = ica2d(y1, y2, grid_step_deg=15.0)
    Z = np.column_stack([y1 - y1.mean(), y2 - y2.mean()]) @ r.whitening.T
    for k, deg in enumerate(r.angles):
        th = math.radians(deg)
        a = math.cos(th) * Z[:, 0] + math.sin(th) * Z[:, 1]
        b = -math.sin(th) * Z[:, 0] + math.cos(th) * Z[:, 1]
        direct = abs(np.mean(a ** 4) - 3) + abs(np.mean(b ** 4) - 3)
        assert_allclose(r.profile[k], direct, rtol=1e-10)


def test_singular_covariance():
    x = RngStream(5, 0).normal(100)
    with pytest.raises(DegenerateCovariance):
        ica2d(x, 2 * x)
    with pytest.raises(DegenerateCovariance):
        ica2d(x, np.ones(100))


def test_cubic_example_aligns_with_observed_variables():
    d = generate(DgpSpec("ica_rotation"), 20000, 6).observed
    r = ica2d(d["y1"], d["y2"])
    assert r.alignment_ratio(d["y1"], d["y2"]) <= 0.05


def test_alignment_ratio_by_hand():
    r = ica2d(*_mixed(1000, 7)[:2])
    r.unmixing = np.array([[0.1, 2.0], [1.0, 0.3]])
    y1 = np.array([0.0, 2.0, 0.0, 2.0])
    y2 = np.array([0.0, 0.0, 4.0, 4.0])
    # scaled by sds (1, 2): [[0.1, 4], [1, 0.6]]; swapped rows [[1, 0.6], [0.1, 4]]
    assert_allclose(r.alignment_ratio(y1, y2), max(0.6 / 1.0, 0.1 / 4.0))


def test_excess_kurtosis_values():
    rs = RngStream(8, 0)
    assert_allclose(excess_kurtosis(np.array([-1.0, 1.0])), -2.0)
    assert abs(excess_kurtosis(rs.uniform(400_000)) + 1.2) < 0.02
    assert abs(excess_kurtosis(rs.normal(400_000))) < 0.05


def test_log_chi_square_kurtosis_oracle():
    # cumulants of log chi2_1 are polygamma(r - 1, 1/2)
    oracle = special.polygamma(3, 0.5) / special.polygamma(1, 0.5) ** 2
    assert_allclose(oracle, 4.0, rtol=1e-12)
    y1 = generate(DgpSpec("ica_box_muller"), 1_000_000, 9).observed["y1"]
    est = excess_kurtosis(y1)
    se = jackknife_se(lambda idx: excess_kurtosis(y1[idx]), y1.shape[0], 20)
    assert est > 3
    assert abs(est - oracle) <= 4 * se


def test_shock_effect_on_observed_variable_is_regression_slope():
    rs = RngStream(10, 0)
    a = rs.normal(1000)
    b = 0.7 * a + rs.child(1).normal(1000)
    est, se = shock_effect(a, b, a)
    assert_allclose(est, np.cov(a, b)[0, 1] / np.var(a, ddof=1), rtol=1e-12)
    assert 0 < se < 0.1


def test_box_muller_recovered_effect_is_projection_not_structural():
    d = generate(DgpSpec("ica_box_muller"), 20000, 11).observed
    y1, y2 = d["y1"], d["y2"]
    est, se = recovered_effect(y1, y2)
    proj = np.cov(y1, y2)[0, 1] / np.var(y1, ddof=1)
    assert abs(est - proj) <= 3 * se
    assert abs(est - 1.0) >= 5 * se
