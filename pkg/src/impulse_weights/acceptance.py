"""End-to-end acceptance checks.

Each ``criterion_k(seed)`` returns a list of :class:`EstimandReport` rows.
Monte Carlo checks compare an estimate with an oracle at a stated number
of standard errors; identities are checked at fixed numerical tolerances;
criteria with a time budget add a runtime row.
"""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special, stats

from .amde import RieszSpec, discrete_treatment_effect, orthogonal_ad, weighted_outcome_estimate
from .errors import NegativeWeightRisk
from .lab import (DgpSpec, EstimandReport, excess_kurtosis, factor_reconstruct, generate,
                  hetero_iv_estimate, hetero_weights, ica2d, independence_battery,
                  mte_reduced_form, rank1_stat, symmetric_twin)
from .lab.ica import recovered_effect
from .lab.report import check, within
from .numcore import Dataset, RngStream, ols
from .projections import local_projection, partially_linear_projection, quadratic_projection
from .weights import (covariate_weights, is_hump, narrative_weights,
                      observed_weights, proxy_weights, weight_integral)

TITLES = {
    1: "weights integrate to one on 100 random samples",
    2: "observed weights are nonnegative and hump-shaped",
    3: "normal shock: weights match the density; cubic response slope",
    4: "quadratic projection sign reversal",
    5: "proxy weight scaling law and narrative plateau",
    6: "covariate weights",
    7: "Riesz representer estimators",
    8: "heteroskedasticity-based IV",
    9: "symmetric twin",
    10: "rank-one restriction",
    11: "ICA counterexamples",
    12: "factor reconstruction",
    13: "reduced form under endogeneity",
    14: "verify runs end to end within the time budget",
}
VERIFY_BUDGET = 300.0


def _seed(seed: int, crit: int, j: int = 0) -> int:
    return int(np.random.SeedSequence([seed, crit, j]).generate_state(1)[0])


def _stream(seed, crit, j=0) -> RngStream:
    return RngStream(_seed(seed, crit, j))


def _runtime(name, t0, limit) -> EstimandReport:
    dt = time.perf_counter() - t0
    return check(name, dt, limit, dt < limit, "wall-clock seconds below budget", limit)


def _sigmas(name, est, oracle, se, k, method):
    return within(name, est, oracle, k * se, f"{method}; {k} SE = {k * se:.3g}")


# --------------------------------------------------------------------------
# 1-2: finite-sample identities


def random_samples(seed: int, count: int = 100):
    """Mixed continuous and discrete samples of sizes 10, 100 and 1000."""
    rs = _stream(seed, 1)
    out = []
    j = 0
    while len(out) < count:
        g = rs.child(j)
        j += 1
        n = (10, 100, 1000)[len(out) % 3]
        kind = len(out) % 4
        if kind == 0:
            x = g.normal(n)
        elif kind == 1:
            x = g.integers(0, 5, n).astype(float)
        elif kind == 2:
            x = np.round(g.normal(n) * 2.0, 1)
        else:
            x = -np.log(g.uniform(n)) ** 2
        if np.ptp(x) > 0:
            out.append(x)
    return out


def criterion_1(seed: int) -> list:
    t0 = time.perf_counter()
    samples = random_samples(seed)
    step = max(abs(observed_weights(x, se=None).weight_fn.integral() - 1.0) for x in samples)
    clip = max(abs(weight_integral(x) - 1.0) for x in samples)
    return [
        check("c1.step_integral_max_error", step, 0.0, step <= 1e-10, "|integral - 1|", 1e-10),
        check("c1.clip_slope_max_error", clip, 0.0, clip <= 1e-10, "|slope of X on X - 1|", 1e-10),
        _runtime("c1.runtime", t0, 1.0),
    ]


def criterion_2(seed: int) -> list:
    samples = random_samples(seed)
    neg = hump = 0
    for x in samples:
        rep = observed_weights(x, se=None)
        neg += int(np.any(rep.weight_fn.values < 0))
        hump += int(not is_hump(rep.weight_fn, rep.mean_of_X))
    return [
        check("c2.negative_samples", neg, 0, neg == 0, "samples with any negative weight", 0),
        check("c2.non_hump_samples", hump, 0, hump == 0, "samples violating the hump shape", 0),
    ]


# --------------------------------------------------------------------------
# 3-4: normal shocks


def criterion_3(seed: int) -> list:
    t0 = time.perf_counter()
    x = _stream(seed, 3).normal(100_000)
    fn = observed_weights(x).weight_fn
    grid = np.linspace(-2, 2, 4001)
    sup = float(np.max(np.abs(fn(grid) - stats.norm.pdf(grid))))
    r = local_projection(Dataset({"x": x, "y": x ** 3}), "y", "x", weights=False)[0]
    return [
        check("c3.sup_weight_minus_density", sup, 0.0, sup <= 0.02,
              "sup over [-2, 2] of |weight - normal density|", 0.02),
        _sigmas("c3.cubic_slope", r.beta_h, 3.0, r.se, 3, "E[X^4] = 3"),
        _runtime("c3.runtime", t0, 5.0),
    ]


def quad_oracles():
    """``E[g'(X)]`` and ``E[g''(X)]`` for ``g = Phi(x - 1)``, ``X ~ N(0, 1)``, by quadrature."""
    d1 = integrate.quad(lambda v: stats.norm.pdf(v - 1) * stats.norm.pdf(v), -np.inf, np.inf)[0]
    d2 = integrate.quad(lambda v: -(v - 1) * stats.norm.pdf(v - 1) * stats.norm.pdf(v),
                        -np.inf, np.inf)[0]
    return d1, d2


def criterion_4(seed: int) -> list:
    t0 = time.perf_counter()
    x = _stream(seed, 4).normal(200_000)
    y = stats.norm.cdf(x - 1.0)
    q = quadratic_projection(Dataset({"x": x, "y": y}), "y", "x")
    d1, d2 = quad_oracles()
    return [
        _sigmas("c4.beta1", q.beta1, d1, q.se[1], 3, "quadrature of E[g'(X)]"),
        _sigmas("c4.two_beta2", 2 * q.beta2, d2, 2 * q.se[2], 3, "quadrature of E[g''(X)]"),
        check("c4.derivative_at_minus3", float(q.derivative_fn(-3.0)), 0.0,
              q.derivative_fn(-3.0) < 0, "implied derivative negative while g is increasing"),
        _runtime("c4.runtime", t0, 10.0),
    ]


# --------------------------------------------------------------------------
# 5: proxies


def criterion_5(seed: int) -> list:
    rs = _stream(seed, 5)
    x = rs.child(0).normal(2000)
    z = x + rs.child(1).normal(2000)
    a, b = 3.7, -2.3
    zt = a + b * z
    base = proxy_weights(x, z, se=None).weight_fn.values
    tr = proxy_weights(x, zt, se=None).weight_fn.values
    factor = b * np.var(z) / np.var(zt)
    eq = float(np.max(np.abs(tr - factor * base)))
    out = [check("c5.affine_scaling_max_error", eq, 0.0, eq <= 1e-10,
                 "proxy weights of a + b z vs scaled weights of z", 1e-10)]

    d = generate(DgpSpec("narrative", {"c1": 0.5, "c2": 0.5}), 100_000, _seed(seed, 5, 2))
    xs, zs = d.latent["x"], d.observed["z"]
    fn = proxy_weights(xs, zs).weight_fn
    closed = narrative_weights(lambda v: np.clip((np.asarray(v) + 1) / 2, 0, 1), 0.5, 0.5)
    grid = np.linspace(-0.9, 0.9, 19)
    dev = np.abs(fn(grid) - closed(grid) / 0.5) / fn.se_at(grid)
    worst = float(dev.max())
    out.append(check("c5.narrative_max_abs_t", worst, 0.0, worst <= 3.0,
                     "max over 19 points of |empirical - closed form| / pointwise SE", 3.0))
    # weight(b) - weight(a) is minus the slope of 1{a <= X < b} on Z
    lo, hi = -0.45, 0.45
    fit = ols(((xs >= lo) & (xs < hi)).astype(float), zs)
    out.append(_sigmas("c5.plateau_flatness", -fit.coef[1], 0.0, fit.se[1], 3,
                       "weight difference across the middle branch"))
    return out


# --------------------------------------------------------------------------
# 6: covariates


def criterion_6(seed: int) -> list:
    rs = _stream(seed, 6)
    n = 20_000
    w = (rs.child(0).uniform(n) < 0.4).astype(float)
    x = rs.child(1).normal(n) * (1 + w) + 3 * w
    cw = covariate_weights(x, w)
    err = abs(cw.pooled.integral() - 1.0)
    out = [check("c6.pooled_integral_error", err, 0.0, err <= 1e-10, "|pooled integral - 1|", 1e-10)]

    p = np.where(w == 1, 0.7, 0.2)
    xb = (rs.child(2).uniform(n) < p).astype(float)
    y = xb + 2 * w + rs.child(3).normal(n)
    de = discrete_treatment_effect(y, xb, cells=w)
    out.append(_sigmas("c6.unit_effect_discrete", de.beta, 1.0, de.se, 3, "constant unit effect"))
    pl = partially_linear_projection(Dataset({"y": y, "x": xb, "w": w}), "y", "x", ["w"],
                                     pi_spec="cell_means")
    out.append(_sigmas("c6.unit_effect_cell_means", pl.beta, 1.0, pl.se, 3, "constant unit effect"))

    xa = np.tile([0.0, 1.0, 2.0], 50)
    ya = rs.child(4).normal(xa.shape[0]) + xa ** 2
    da = discrete_treatment_effect(ya, xa)
    ok = np.array_equal(da.step_weights, [0.5, 0.5])
    out.append(check("c6.three_point_weights", float(da.step_weights[0]), 0.5, ok,
                     "weights on steps 1 and 2 equal (1/2, 1/2) exactly", 0.0))
    gap = abs(da.beta - da.fe_beta)
    out.append(check("c6.three_point_equals_ols", gap, 0.0, gap <= 1e-12,
                     "weighted step effects vs OLS slope", 1e-12))
    return out


# --------------------------------------------------------------------------
# 7: Riesz representers


def criterion_7(seed: int) -> list:
    t0 = time.perf_counter()
    rs = _stream(seed, 7)
    n = 100_000
    x = rs.child(0).normal(n)
    e = rs.child(1).normal(n)
    out = []
    r = weighted_outcome_estimate(x + e, x, RieszSpec("density_weighted"))
    out.append(_sigmas("c7.density_weighted_linear", r.theta_hat, 1 / (2 * math.sqrt(math.pi)),
                       r.se, 3, "integral of the squared normal density"))
    r = weighted_outcome_estimate(x ** 2 + e, x, RieszSpec("score"))
    out.append(_sigmas("c7.score_square", r.theta_hat, 0.0, r.se, 3, "E[2X] = 0"))

    xd = rs.child(2).integers(0, 6, 5000).astype(float)
    yd = np.sin(xd) + rs.child(3).normal(5000)
    alpha = np.cos(xd) + 0.3 * xd ** 2
    rd = weighted_outcome_estimate(yd, xd, RieszSpec("custom", alpha=alpha), se=False)
    ghat = np.array([yd[xd == v].mean() for v in rd.implied_weight_fn.knots])
    gap = abs(rd.theta_hat - rd.implied_weight_fn.integrate_against(ghat))
    out.append(check("c7.discrete_identity", gap, 0.0, gap <= 1e-10,
                     "mean(alpha Y) vs sum of step weights times steps of group means", 1e-10))

    y = x + 0.5 * x ** 2 + e
    zero2 = lambda v: (np.zeros_like(v), np.zeros_like(v))  # noqa: E731
    zero1 = lambda v: np.zeros_like(v)  # noqa: E731
    for tag, kw in (("both_fitted", {}), ("g_zero", {"g_override": zero2}),
                    ("alpha_zero", {"alpha_override": zero1})):
        r = orthogonal_ad(y, x, **kw)
        out.append(_sigmas(f"c7.orthogonal_{tag}", r.theta_hat, 1.0, r.se, 3,
                           "E[g'(X)] = 1 for g = x + x^2 / 2"))
    out.append(_runtime("c7.runtime", t0, 60.0))
    return out


# --------------------------------------------------------------------------
# 8-10: heteroskedasticity


def criterion_8(seed: int) -> list:
    t0 = time.perf_counter()
    n = 200_000
    out = []
    d = generate(DgpSpec("hetero_rigobon"), n, _seed(seed, 8, 0))
    r = hetero_iv_estimate(d)
    out.append(_sigmas("c8.linear_ratio", r.estimates[1], 2.0, r.se[1], 3, "theta2 / theta1"))

    d = generate(DgpSpec("hetero_rigobon", {"psi": ["square", {"poly": [0, 2]}]}), n,
                 _seed(seed, 8, 1))
    r = hetero_iv_estimate(d)
    out.append(_sigmas("c8.symmetric_ratio", r.estimates[1], 0.0, r.se[1], 3,
                       "weights integrate to zero though the slope is 2"))

    spec = DgpSpec("hetero_rigobon", {"x_laws": {"0": {"dist": "normal"},
                                                 "1": {"dist": "exponential_centered"}}})
    d = generate(spec, n, _seed(seed, 8, 2))
    hw = hetero_weights(d)
    v, s = hw(-2.0), hw.weight_fn.se_at(-2.0)
    oracle = -0.25 * stats.norm.pdf(2.0)
    out.append(check("c8.negative_weight_at_minus2", v, 0.0, v + 3 * s < 0,
                     "weight at -2 below zero by at least 3 SE", 3 * s))
    out.append(_sigmas("c8.weight_at_minus2", v, oracle, s, 3, "-var(D) phi(2)"))

    d = generate(DgpSpec("multiplicative"), n, _seed(seed, 8, 3))
    r = hetero_iv_estimate(d)
    t = abs(r.estimates[1]) / r.se[1]
    out.append(check("c8.multiplicative_t", t, 0.0, t >= 5,
                     "|ratio| / SE, true conditional-mean effect is 0", 5.0))
    out.append(_runtime("c8.runtime", t0, 30.0))
    return out


def criterion_9(seed: int) -> list:
    d = generate(DgpSpec("hetero_rigobon"), 40_000, _seed(seed, 9))
    tw = symmetric_twin(d)
    out = []
    for (lev, name), r in sorted(tw.ks.items()):
        out.append(check(f"c9.ks_d{lev:g}_{name}", r.statistic, 0.0, r.passed,
                         "two-sample KS below the 95% critical value", r.critical))
    out.append(check("c9.evenness_exact", float(tw.evenness_exact), 1.0, tw.evenness_exact,
                     "twin outcome identical at x and -x", 0.0))
    out.append(_sigmas("c9.twin_odd_slope", tw.odd_slope, 0.0, tw.odd_slope_se, 3,
                       "slope on x given |x| in the twin"))
    return out


def criterion_10(seed: int) -> list:
    n = 50_000
    lin = DgpSpec("hetero_rigobon", {"psi": ["identity", {"poly": [0, 2]}, {"poly": [0, -0.5]}]})
    r = rank1_stat(generate(lin, n, _seed(seed, 10, 0)))
    nl = DgpSpec("multiplicative", {"gamma": ["identity", "identity", "identity"]})
    r2 = rank1_stat(generate(nl, n, _seed(seed, 10, 1)))
    return [
        check("c10.linear_ratio", r.ratio, 0.0, r.ratio <= 0.05, "|l2| / |l1| at most", 0.05),
        check("c10.nonlinear_ratio", r2.ratio, 0.0, r2.ratio >= 0.2, "|l2| / |l1| at least", 0.2),
    ]


# --------------------------------------------------------------------------
# 11-13: non-Gaussianity, factors, endogeneity


def log_chi2_excess_kurtosis() -> float:
    """Excess kurtosis of ``log`` of a chi-square(1) variable."""
    return float(special.polygamma(3, 0.5) / special.polygamma(1, 0.5) ** 2)


def criterion_11(seed: int) -> list:
    t0 = time.perf_counter()
    n = 100_000
    d = generate(DgpSpec("ica_box_muller"), n, _seed(seed, 11, 0))
    y1, y2 = d.observed["y1"], d.observed["y2"]
    out = []
    b = independence_battery(y1, y2, seed=_seed(seed, 11, 1))
    out.append(check("c11.battery_min_p", b.min_p, 0.0, not b.reject,
                     "smallest p-value times 10 tests at or above 0.05", 0.005))
    k = excess_kurtosis(y1)
    out.append(check("c11.kurtosis_y1", k, log_chi2_excess_kurtosis(), k > 3,
                     "excess kurtosis above 3", 3.0))
    res = ica2d(y1, y2)
    ratio = res.alignment_ratio(y1, y2)
    out.append(check("c11.box_muller_alignment", ratio, 0.0, ratio <= 0.05,
                     "unmixing off/on-diagonal ratio", 0.05))
    est, se = recovered_effect(y1, y2)
    out.append(_sigmas("c11.recovered_effect", est, 0.0, se, 3,
                       "cov(Y2, Y1) / var(Y1) = 0 for independent outcomes, jackknife SE"))
    t = abs(est - 1.0) / se
    out.append(check("c11.distance_from_true_effect", t, 0.0, t >= 5,
                     "|estimate - 1| / SE, true effect of X on Y2 is 1", 5.0))
    d4 = generate(DgpSpec("ica_rotation"), n, _seed(seed, 11, 2))
    r4 = ica2d(d4.observed["y1"], d4.observed["y2"])
    ratio4 = r4.alignment_ratio(d4.observed["y1"], d4.observed["y2"])
    out.append(check("c11.cubic_alignment", ratio4, 0.0, ratio4 <= 0.05,
                     "unmixing off/on-diagonal ratio, Y2 = (X - U)^3", 0.05))
    out.append(_runtime("c11.runtime", t0, 30.0))
    return out


def criterion_12(seed: int) -> list:
    rs = _stream(seed, 12)
    n = 20_000
    g = rs.normal((n, 2))
    y = Dataset({"y1": g[:, 0], "y2": 0.8 * g[:, 0] + 0.6 * g[:, 1]})
    f = factor_reconstruct(y, seed=_seed(seed, 12, 1))
    e = f.energy
    return [check("c12.energy_distance", e.statistic, 0.0, e.passed,
                  "below the 95th percentile of 99 permutations", e.null_q95)]


def criterion_13(seed: int) -> list:
    n = 100_000
    out = []
    cases = [("linear", {"psi": "identity"}), ("square", {"psi": "square"}),
             ("irrelevant", {"psi": "identity", "first_stage": 0.0})]
    for j, (tag, params) in enumerate(cases):
        d = generate(DgpSpec("mte_iv", params), n, _seed(seed, 13, j))
        m = mte_reduced_form(d, name=f"c13.{tag}_vs_oracle")
        out.append(m.report)
        if tag == "linear":
            out.append(_sigmas("c13.linear_vs_one", m.beta, 1.0, m.se, 3, "unit effect"))
            fs = ols(d.observed["x"], d.observed["z"])
            out.append(_sigmas("c13.linear_weight_integral", m.weight_integral, 1.0, fs.se[1], 3,
                               "weights integrate to the first-stage coefficient"))
        if tag == "irrelevant":
            out.append(_sigmas("c13.irrelevant_vs_zero", m.beta, 0.0, m.se, 3, "no first stage"))
    return out


CRITERIA = {k: globals()[f"criterion_{k}"] for k in range(1, 14)}


@dataclass
class CriterionRun:
    number: int
    title: str
    reports: list
    seconds: float

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports)


def run_criterion(k: int, seed: int) -> CriterionRun:
    t0 = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NegativeWeightRisk)
        reps = CRITERIA[k](seed)
    return CriterionRun(k, TITLES[k], reps, time.perf_counter() - t0)


def run_all(seed: int = 1, progress=None) -> list:
    """Run criteria 1 to 13, then add the overall runtime check."""
    t0 = time.perf_counter()
    runs = []
    for k in sorted(CRITERIA):
        r = run_criterion(k, seed)
        runs.append(r)
        if progress:
            progress(r)
    total = time.perf_counter() - t0
    rep = check("c14.verify_runtime", total, VERIFY_BUDGET, total < VERIFY_BUDGET,
                "wall-clock seconds for criteria 1-13", VERIFY_BUDGET)
    runs.append(CriterionRun(14, TITLES[14], [rep], total))
    if progress:
        progress(runs[-1])
    return runs
