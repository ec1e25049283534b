import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy import stats

from impulse_weights.lab import (dcor_test, distance_correlation, energy_distance, energy_test,
                                 independence_battery, ks_two_sample)
from impulse_weights.lab.independence import (KS_C95, distance_correlation_naive,
                                              energy_distance_naive)
from impulse_weights.numcore import RngStream

small = st.lists(st.integers(-5, 5), min_size=3, max_size=40)


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_dcor_fast_matches_naive(data):
    xs = data.draw(small)
    ys = data.draw(st.lists(st.floats(-10, 10), min_size=len(xs), max_size=len(xs)))
    x, y = np.array(xs, float), np.array(ys, float)
    assert_allclose(distance_correlation(x, y), distance_correlation_naive(x, y), atol=1e-9)


def test_dcor_continuous_samples():
    rs = RngStream(2, 0)
    x = rs.normal(300)
    y = np.sin(3 * x) + 0.3 * rs.normal(300)
    assert_allclose(distance_correlation(x, y), distance_correlation_naive(x, y), rtol=1e-10)


def test_dcor_of_identical_and_affine_samples_is_one():
    x = RngStream(3, 0).normal(500)
    assert_allclose(distance_correlation(x, x), 1.0, rtol=1e-12)
    assert_allclose(distance_correlation(x, 3 - 2 * x), 1.0, rtol=1e-12)
    assert distance_correlation(x, np.ones(500)) == 0.0


def test_dcor_permutation_level():
    reps = 60
    ok = 0
    for r in range(reps):
        rs = RngStream(100 + r, 0)
        p = dcor_test(rs.normal(200), rs.child(1).normal(200), permutations=199, seed=r).pvalue
        ok += p >= 0.05
    assert ok >= 0.9 * reps


def test_dcor_detects_dependence_pearson_misses():
    rs = RngStream(4, 0)
    x = rs.normal(2000)
    y = x * x + 0.1 * rs.child(1).normal(2000)
    assert dcor_test(x, y, permutations=99, seed=1).pvalue <= 0.01
    b = independence_battery(x, y, permutations=99, seed=1)
    assert abs(b.pearson) < 0.1
    assert b.reject


def test_battery_passes_independent_samples():
    rs = RngStream(5, 0)
    b = independence_battery(rs.normal(3000), rs.child(1).exponential(3000), seed=2)
    assert not b.reject
    assert b.moment_corr.shape == (3, 3) and b.moment_p.shape == (3, 3)
    assert_allclose(b.moment_corr[0, 0], b.pearson)
    assert b.min_p == min(b.moment_p.min(), b.dcor_p)


def test_battery_moment_grid_by_hand():
    rs = RngStream(6, 0)
    a, b = rs.normal(500), rs.child(1).normal(500)
    res = independence_battery(a, b, permutations=9)
    sa, sb = (a - a.mean()) / a.std(), (b - b.mean()) / b.std()
    assert_allclose(res.moment_corr[1, 2], np.corrcoef(sa ** 2, sb ** 3)[0, 1], rtol=1e-12)
    z = abs(res.moment_corr[1, 2]) * math.sqrt(500)
    assert_allclose(res.moment_p[1, 2], 2 * stats.norm.sf(z), rtol=1e-10)


def test_energy_1d_is_exact():
    rs = RngStream(7, 0)
    a, b = rs.normal(150), rs.child(1).normal(120) + 0.5
    assert_allclose(energy_distance(a, b), energy_distance_naive(a, b), rtol=1e-10)


def test_energy_2d_slices_approximate_euclidean():
    rs = RngStream(8, 0)
    a = rs.normal((200, 2))
    b = rs.child(1).normal((180, 2)) * np.array([1.0, 2.0])
    exact = energy_distance_naive(a, b)
    assert_allclose(energy_distance(a, b), exact, rtol=0.01)
    assert_allclose(energy_distance(a, b, directions=720), exact, rtol=1e-3)


def test_energy_3d_random_directions():
    rs = RngStream(9, 0)
    a = rs.normal((150, 3))
    b = rs.child(1).normal((150, 3)) + np.array([0.5, 0.0, -0.5])
    assert_allclose(energy_distance(a, b, directions=4000), energy_distance_naive(a, b), rtol=0.03)


def test_energy_test_same_and_shifted():
    rs = RngStream(10, 0)
    a, b = rs.normal((1500, 2)), rs.child(1).normal((1500, 2))
    assert energy_test(a, b, permutations=99, seed=1).passed
    r = energy_test(a, b + 0.3, permutations=99, seed=1)
    assert not r.passed and r.pvalue <= 0.02


def test_ks_against_scipy_and_critical_value():
    rs = RngStream(11, 0)
    a, b = rs.normal(400), rs.child(1).normal(300)
    r = ks_two_sample(a, b)
    assert_allclose(r.statistic, stats.ks_2samp(a, b).statistic)
    assert_allclose(r.critical, 1.3581 * math.sqrt(700 / (400 * 300)), rtol=1e-4)
    assert_allclose(KS_C95, 1.35810, rtol=1e-4)
    assert r.passed
    assert not ks_two_sample(a, b + 1.0).passed


@pytest.mark.parametrize("seed", range(3))
def test_energy_null_is_exchangeable(seed):
    rs = RngStream(seed, 3)
    a = rs.uniform(400)
    r = energy_test(a, rs.child(1).uniform(400), permutations=49, seed=seed)
    assert r.null.shape == (49,) and np.all(r.null >= -1e-12)
