"""Weights attached to linear estimands of a nonlinear response.

A slope ``cov(Y, X) / var(X)`` averages the marginal effect ``g'(x)`` with
weights ``cov(1{X >= x}, X) / var(X)``.  In a sample that weight is the OLS
slope of the indicator ``1{X >= x}`` on ``X``, a step function that only
changes at sample points.  The same construction with a proxy ``Z`` in place
of ``X`` gives the proxy weights, and with ``X`` demeaned within cells of a
discrete control gives the covariate-adjusted weights.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import CellTooSmall, DegenerateVariance, InsufficientData
from .numcore import as_array, newey_west_lags

Z95 = 1.959963984540054


@dataclass
class StepWeightFunction:
    """Left-open, right-closed step function on sorted distinct knots.

    ``values[i]`` is the weight on ``(knots[i], knots[i+1]]``; the function
    is zero outside ``(knots[0], knots[-1]]``.  ``normalizer`` records what
    the raw indicator covariances were divided by.
    """

    knots: np.ndarray
    values: np.ndarray
    pointwise_se: np.ndarray | None = None
    normalizer: float = 1.0

    def __post_init__(self):
        self.knots = np.asarray(self.knots, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape[0] != max(self.knots.shape[0] - 1, 0):
            raise ValueError("need one value per interval between knots")
        if self.pointwise_se is not None:
            self.pointwise_se = np.asarray(self.pointwise_se, dtype=float)

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.knots)

    def _index(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.knots, x, side="left") - 1
        inside = (x > self.knots[0]) & (x <= self.knots[-1]) if self.knots.size else np.zeros_like(x, bool)
        return np.where(inside, idx, -1)

    def __call__(self, x):
        idx = self._index(x)
        out = np.where(idx >= 0, self.values[np.maximum(idx, 0)] if self.values.size else 0.0, 0.0)
        return float(out) if np.ndim(out) == 0 else out

    def se_at(self, x):
        if self.pointwise_se is None:
            raise ValueError("no standard errors attached")
        idx = self._index(x)
        out = np.where(idx >= 0, self.pointwise_se[np.maximum(idx, 0)], 0.0)
        return float(out) if np.ndim(out) == 0 else out

    def integral(self, lo: float = -np.inf, hi: float = np.inf) -> float:
        """Integral of the step function over ``[lo, hi]``."""
        if self.values.size == 0 or hi <= lo:
            return 0.0
        a = np.clip(self.knots[:-1], lo, hi)
        b = np.clip(self.knots[1:], lo, hi)
        return float(np.dot(self.values, b - a))

    def positive_mass(self) -> float:
        return float(np.dot(np.clip(self.values, 0.0, None), self.widths))

    def negative_mass(self) -> float:
        return float(np.dot(np.clip(self.values, None, 0.0), self.widths))

    def integrate_against(self, g) -> float:
        """``sum_i values[i] * (g(knots[i+1]) - g(knots[i]))``.

        This is the integral of the weights against ``dg``.  ``g`` may be a
        callable or an array of values at the knots.
        """
        gv = g(self.knots) if callable(g) else np.asarray(g, dtype=float)
        if gv.shape != self.knots.shape:
            raise ValueError("g must give one value per knot")
        return float(np.dot(self.values, np.diff(gv)))

    def ci(self, level_z: float = Z95):
        if self.pointwise_se is None:
            raise ValueError("no standard errors attached")
        return self.values - level_z * self.pointwise_se, self.values + level_z * self.pointwise_se

    def scaled(self, factor: float) -> "StepWeightFunction":
        se = None if self.pointwise_se is None else np.abs(factor) * self.pointwise_se
        return StepWeightFunction(self.knots, self.values * factor, se, self.normalizer / factor)


@dataclass
class WeightReport:
    """A weight function with summary masses.

    ``positive_mass`` is the weight placed on positive shock values (the
    integral over x > 0); ``negative_mass`` is the total of the negative
    parts of the weights anywhere.
    """

    weight_fn: StepWeightFunction
    total_mass: float
    positive_mass: float
    mean_of_X: float
    negative_mass: float = 0.0
    tail_signs: tuple[int, int] = (0, 0)
    meta: dict = field(default_factory=dict)

    @property
    def has_negative(self) -> bool:
        return bool(np.any(self.weight_fn.values < 0))


def _report(fn: StepWeightFunction, mean_x: float, **meta) -> WeightReport:
    vals = fn.values
    tails = (int(np.sign(vals[0])), int(np.sign(vals[-1]))) if vals.size else (0, 0)
    return WeightReport(fn, fn.integral(), fn.integral(0.0, np.inf), mean_x,
                        fn.negative_mass(), tails, dict(meta))


# --------------------------------------------------------------------------
# upper-tail sums over sorted support


def _groups(x):
    order = np.argsort(x, kind="stable")
    xs = x[order]
    knots, first = np.unique(xs, return_index=True)
    return order, knots, first


def _grouped(a, order, first):
    return np.add.reduceat(a[order], first) if first.size else np.zeros(0)


def _upper(g):
    # sum over groups l >= j
    return np.cumsum(g[::-1])[::-1]


def _indicator_se(x, c, groups, slope, mode, lags):
    """Pointwise SE of the slope of 1{X >= knot} on a regressor with centred values ``c``.

    HC1 uses running sums over the sorted support, so all knots cost
    O(n log n).  Newey-West falls back to chunked direct sums.
    """
    order, knots, first = groups
    n = x.shape[0]
    C2 = float(c @ c)
    if mode == "hc1":
        C3 = float(np.sum(c ** 3))
        C4 = float(np.sum(c ** 4))
        A0 = _upper(_grouped(np.ones(n), order, first))[1:]
        A2 = _upper(_grouped(c * c, order, first))[1:]
        A3 = _upper(_grouped(c ** 3, order, first))[1:]
        p = A0 / n
        b = slope
        meat = (1 - 2 * p) * A2 + p * p * C2 - 2 * b * (A3 - p * C3) + b * b * C4
        meat = np.clip(meat, 0.0, None)
        return np.sqrt(n / (n - 2) * meat) / C2
    if mode == "nw":
        L = newey_west_lags(n) if lags is None else int(lags)
        out = np.empty(knots.shape[0] - 1)
        step = max(1, 2_000_000 // n)
        for s in range(1, knots.shape[0], step):
            ks = knots[s:s + step]
            bs = slope[s - 1:s - 1 + ks.shape[0]]
            D = (x[:, None] >= ks[None, :]).astype(float)
            p = D.mean(axis=0)
            u = c[:, None] * (D - p - c[:, None] * bs)
            meat = np.sum(u * u, axis=0)
            for lag in range(1, min(L, n - 1) + 1):
                meat += 2 * (1 - lag / (L + 1.0)) * np.sum(u[lag:] * u[:-lag], axis=0)
            out[s - 1:s - 1 + ks.shape[0]] = np.sqrt(np.clip(n / (n - 2) * meat, 0, None)) / C2
        return out
    if mode in (None, "none"):
        return None
    raise ValueError(f"unknown se mode {mode!r}")


def _check(x, need=3):
    x = as_array(x)
    if x.shape[0] < need:
        raise InsufficientData(f"need at least {need} observations, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite values")
    return x


def observed_weights(x, se: str | None = "hc1", lags: int | None = None) -> WeightReport:
    """Weights of the slope of Y on the shock ``x``.

    Value on ``(x_(i), x_(i+1)]`` is the OLS slope of ``1{X >= x_(i+1)}`` on
    ``X``.  Mass points use ``>=``.  The result is nonnegative, rises up to
    the sample mean and falls after it, and integrates to one; the running
    sums are arranged so these hold exactly in floating point.

    Parameters
    ----------
    x : array-like
    se : {"hc1", "nw", None}
        Pointwise standard errors of each interval's value.
    lags : int, optional
        Newey-West lag when ``se="nw"``.
    """
    x = _check(x)
    n = x.shape[0]
    xbar = x.mean()
    c = x - xbar
    v = float(c @ c) / n
    if not v > 0:
        raise DegenerateVariance("shock has zero variance")
    groups = _groups(x)
    order, knots, first = groups
    g = _grouped(c, order, first)
    # below the mean accumulate |c| from the bottom, above it from the top;
    # every step adds a term of one sign, so monotonicity and sign are exact
    below = knots <= xbar
    S = np.empty_like(g)
    lo = np.concatenate([[0.0], np.cumsum(-g)[:-1]])
    S[below] = lo[below]
    up = ~below
    if up.any():
        S[up] = _upper(g[up])
    values = (S / n)[1:] / v
    sev = _indicator_se(x, c, groups, values, se, lags)
    fn = StepWeightFunction(knots, values, sev, v)
    return _report(fn, float(xbar), kind="observed", n=n, se_mode=se)


def weight_integral(x, lo: float = -np.inf, hi: float = np.inf) -> float:
    """Integral of the observed weights over ``[lo, hi]``.

    Equals the slope of ``clip(X, lo, hi)`` on ``X``, exactly in finite
    samples.
    """
    x = _check(x, 2)
    if np.isnan(lo) or np.isnan(hi):
        raise ValueError("bounds must not be NaN")
    if lo > hi:
        raise ValueError("lo must not exceed hi")
    v = float(np.dot(x - x.mean(), x - x.mean()))
    if not v > 0:
        raise DegenerateVariance("shock has zero variance")
    m = np.clip(x, lo, hi)
    if m.max() == m.min():
        return 0.0
    return float(np.dot(m - m.mean(), x - x.mean()) / v)


def proxy_weights(x, z, se: str | None = "hc1", lags: int | None = None) -> WeightReport:
    """Weights of the reduced-form slope of Y on a proxy ``z``.

    Value at knot ``k`` is ``cov(1{X >= k}, Z) / var(Z)``, the slope of the
    indicator on ``Z``.  These can be negative; the report carries the
    negative mass and the signs of the two tail intervals.
    """
    x = _check(x)
    z = _check(z)
    if x.shape != z.shape:
        raise ValueError("x and z differ in length")
    n = x.shape[0]
    c = z - z.mean()
    v = float(c @ c) / n
    if not v > 0:
        raise DegenerateVariance("proxy has zero variance")
    groups = _groups(x)
    order, knots, first = groups
    S = _upper(_grouped(c, order, first))
    values = (S / n)[1:] / v
    sev = _indicator_se(x, c, groups, values, se, lags)
    fn = StepWeightFunction(knots, values, sev, v)
    return _report(fn, float(x.mean()), kind="proxy", n=n, se_mode=se)


def indicator_covariances(x, a) -> StepWeightFunction:
    """Unnormalized ``(1/n) sum_{X_i >= k} (a_i - mean(a))`` on the support of ``x``."""
    x = as_array(x)
    a = as_array(a)
    order, knots, first = _groups(x)
    S = _upper(_grouped(a - a.mean(), order, first))
    return StepWeightFunction(knots, (S / x.shape[0])[1:], None, 1.0)


def narrative_weights(F: Callable, c1: float, c2: float) -> Callable:
    """Closed-form ``cov(1{X >= x}, Z)`` for ``Z = 1{X >= c2} - 1{X <= -c1}``.

    ``F`` is the CDF of the shock (analytic or empirical).  Divide by
    ``var(Z)`` to compare with :func:`proxy_weights`.
    """
    if not -c1 < c2:
        raise ValueError("need -c1 < c2")
    Fl = float(F(-c1))
    Fh = float(F(c2))

    def cov_fn(x):
        x = np.asarray(x, dtype=float)
        Fx = np.asarray(F(x), dtype=float)
        low = Fx * (2.0 - Fh - Fl)
        mid = Fx * (1.0 - Fh - Fl) + Fl
        high = (1.0 - Fx) * (Fh + Fl)
        out = np.where(x <= -c1, low, np.where(x < c2, mid, high))
        return float(out) if out.ndim == 0 else out

    return cov_fn


def narrative_proxy(x, c1: float, c2: float) -> np.ndarray:
    x = as_array(x)
    return (x >= c2).astype(float) - (x <= -c1).astype(float)


@dataclass
class CovariateWeights:
    """Weights for a slope with discrete controls entered as cell dummies.

    ``pooled`` lives on the scale of ``x`` and integrates to one.
    ``centered`` is the same average expressed in deviations from the cell
    means, which coincides with :func:`observed_weights` of the demeaned
    shock.  ``cells`` holds one within-cell function per non-degenerate
    cell, normalized by its own variance.
    """

    pooled: StepWeightFunction
    centered: StepWeightFunction
    cells: dict
    cell_probs: dict
    cell_variances: dict
    residual_variance: float
    report: WeightReport


def covariate_weights(x, cells, se: str | None = "hc1") -> CovariateWeights:
    """Pooled covariate-adjusted weights with the cell mean as the shock forecast.

    Raises
    ------
    CellTooSmall
        A cell has fewer than three observations.
    DegenerateVariance
        The shock is constant within every cell.
    """
    x = _check(x)
    labels = np.asarray(cells)
    if labels.shape[0] != x.shape[0]:
        raise ValueError("x and cells differ in length")
    uniq, inv, counts = np.unique(labels, return_inverse=True, return_counts=True)
    if np.any(counts < 3):
        bad = uniq[counts < 3]
        raise CellTooSmall(f"cells with fewer than 3 observations: {list(bad)}")
    n = x.shape[0]
    means = np.bincount(inv, weights=x) / counts
    xt = x - means[inv]
    v = float(xt @ xt) / n
    if not v > 0:
        raise DegenerateVariance("shock is constant within every cell")
    per_cell, probs, vars_ = {}, {}, {}
    for j, lab in enumerate(uniq):
        key = lab.item() if hasattr(lab, "item") else lab
        sel = inv == j
        probs[key] = counts[j] / n
        cv = float(np.mean(xt[sel] ** 2))
        vars_[key] = cv
        if cv > 0:
            per_cell[key] = observed_weights(x[sel], se=None).weight_fn
    rep = proxy_weights(x, xt, se=se)
    pooled = rep.weight_fn
    centered = observed_weights(xt, se=se).weight_fn
    return CovariateWeights(pooled, centered, per_cell, probs, vars_, v, rep)


def is_hump(fn: StepWeightFunction, center: float) -> bool:
    """Exact check: nonnegative, nondecreasing up to ``center``, nonincreasing after."""
    vals = fn.values
    if np.any(vals < 0):
        return False
    right = fn.knots[1:]
    left_part = vals[right <= center]
    right_part = vals[right > center]
    return bool(np.all(np.diff(left_part) >= 0) and np.all(np.diff(right_part) <= 0))
