"""Average marginal derivative effects through Riesz representers.

For a representer ``alpha`` with ``E[alpha(X)] = 0`` the moment
``E[alpha(X) Y]`` equals ``integral of w(x) g'(x) dx`` with
``w(x) = E[1{X >= x} alpha(X)]``.  Each variant below picks an ``alpha``:

* ``linear``: ``(x - mean) / var``, the OLS slope;
* ``score``: ``-f'/f``, the unweighted average derivative;
* ``density_weighted``: ``-2 f'`` (leave-one-out), derivative weighted by the density;
* ``delta_change``: ``-(f(x) - f(x - delta)) / (delta f(x))``, the average
  effect of shifting every unit by ``delta`` (leave-one-out densities);
* ``custom``: user supplied values or function.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import (BandwidthDegenerate, DegenerateDensity, DegenerateVariance,
                     InsufficientData, MissingStep)
from .numcore import as_array, kde, local_linear, ols, silverman_bandwidth, var
from .weights import StepWeightFunction, indicator_covariances

VARIANTS = ("linear", "score", "density_weighted", "delta_change", "custom")
DENSITY_FLOOR = 1e-12
_KERNEL_PEAK = 1.0 / math.sqrt(2.0 * math.pi)
# share of floored density values beyond which the score is declared unusable
MAX_FLOOR_SHARE = 0.05
JACKKNIFE_GROUPS = 20


@dataclass
class RieszSpec:
    """Choice of representer.

    ``bandwidth`` fixes the KDE bandwidth for the density-based variants;
    otherwise ``bandwidth_rule`` decides: ``"undersmoothed"`` uses
    ``1.06 sd n^(-1/3)``, ``"silverman"`` uses ``1.06 sd n^(-1/5)``.
    """

    variant: str = "linear"
    delta: float | None = None
    alpha: Callable | np.ndarray | None = None
    bandwidth: float | None = None
    bandwidth_rule: str = "undersmoothed"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.variant == "delta_change" and not (self.delta and self.delta > 0):
            raise ValueError("delta_change needs delta > 0")
        if self.variant == "custom" and self.alpha is None:
            raise ValueError("custom variant needs alpha")
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")


@dataclass
class AmdeResult:
    theta_hat: float
    variant: str
    implied_weight_fn: StepWeightFunction | None
    se: float
    n: int
    bandwidths: dict = field(default_factory=dict)
    flooring_count: int = 0
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"variant": self.variant, "theta": self.theta_hat, "se": self.se, "n": self.n,
                "bandwidths": dict(self.bandwidths), "flooring_count": int(self.flooring_count)}


def density_bandwidth(x, rule: str = "undersmoothed") -> float:
    x = as_array(x)
    sd = math.sqrt(var(x))
    if rule == "silverman":
        h = silverman_bandwidth(x)
    elif rule == "undersmoothed":
        h = 1.06 * sd * x.shape[0] ** (-1.0 / 3.0)
    else:
        raise ValueError(f"unknown bandwidth rule {rule!r}")
    if not h > 0:
        raise BandwidthDegenerate("shock has zero variance")
    return h


def _floor(f):
    bad = f < DENSITY_FLOOR
    return np.where(bad, DENSITY_FLOOR, f), int(bad.sum())


def _check_floor(count, n):
    if count > MAX_FLOOR_SHARE * n:
        raise DegenerateDensity(f"density estimate floored at {count} of {n} points")


def representer(x, spec: RieszSpec, points=None):
    """Raw representer values (not demeaned).

    With ``points`` the density is fitted on ``x`` and evaluated there
    (cross-fitting); otherwise at the sample itself.  Returns
    ``(alpha, info)`` with the bandwidth and flooring count.
    """
    x = as_array(x)
    info = {"bandwidth": None, "flooring_count": 0}
    at = x if points is None else as_array(points)
    v = spec.variant
    if v == "linear":
        s2 = var(x)
        if not s2 > 0:
            raise DegenerateVariance("shock has zero variance")
        return (at - x.mean()) / s2, info
    if v == "custom":
        a = spec.alpha(at) if callable(spec.alpha) else as_array(spec.alpha)
        if a.shape != at.shape:
            raise ValueError("custom alpha must give one value per point")
        return a, info
    h = spec.bandwidth or density_bandwidth(x, spec.bandwidth_rule)
    info["bandwidth"] = h
    kd = kde(x, h)
    own = points is None
    if v == "score":
        f, cnt = _floor(kd.density(None if own else at))
        _check_floor(cnt, at.shape[0])
        info["flooring_count"] = cnt
        return -kd.derivative(None if own else at) / f, info
    if v == "density_weighted":
        return -2.0 * kd.derivative(None if own else at, leave_one_out=own), info
    # delta_change: the ratio f(x - d) / f(x) is most sensitive in the tails,
    # where a point's own kernel inflates f(x); drop it from both densities
    # and keep the denominator at least one kernel height
    d = float(spec.delta)
    n = x.shape[0]
    f = kd.density(at)
    f_shift = kd.density(at - d)
    m = n
    if own:
        m = n - 1
        f = (f * n - _KERNEL_PEAK / h) / m
        f_shift = (f_shift * n - _KERNEL_PEAK * math.exp(-0.5 * (d / h) ** 2) / h) / m
    lowest = max(DENSITY_FLOOR, _KERNEL_PEAK / (m * h))
    low = f < lowest
    cnt = int(low.sum())
    _check_floor(cnt, at.shape[0])
    info["flooring_count"] = cnt
    f = np.where(low, lowest, f)
    return -(f - f_shift) / (d * f), info


def jackknife_se(estimator: Callable[[np.ndarray], float], n: int,
                 groups: int = JACKKNIFE_GROUPS) -> float:
    """Delete-d jackknife with ``groups`` contiguous blocks (d = n / groups)."""
    if n < 2 * groups:
        groups = max(2, n // 2)
    edges = np.linspace(0, n, groups + 1).astype(int)
    idx = np.arange(n)
    reps = np.array([estimator(np.concatenate([idx[: edges[j]], idx[edges[j + 1]:]]))
                     for j in range(groups)])
    return float(np.sqrt((groups - 1) / groups * np.sum((reps - reps.mean()) ** 2)))


def _theta(y, x, spec):
    a, info = representer(x, spec)
    a = a - a.mean()
    return float(np.mean(a * y)), a, info


def weighted_outcome_estimate(y, x, spec: RieszSpec, se: bool = True) -> AmdeResult:
    """``mean(alpha(X_i) Y_i)`` with the representer demeaned in sample.

    The implied weights ``(1/n) sum_{X_i >= k} alpha_i`` come back as a step
    function.  Standard errors: HC1 for ``linear`` (identical to the OLS
    slope), delete-d jackknife otherwise.
    """
    y = as_array(y)
    x = as_array(x)
    if x.shape != y.shape:
        raise ValueError("x and y differ in length")
    if x.shape[0] < 3:
        raise InsufficientData("need at least three observations")
    theta, a, info = _theta(y, x, spec)
    wfn = indicator_covariances(x, a)
    s = float("nan")
    if se:
        if spec.variant == "linear":
            s = ols(y, x).se[1]
        elif spec.variant == "custom" and not callable(spec.alpha):
            alpha = as_array(spec.alpha)
            s = jackknife_se(lambda i: _theta(y[i], x[i], RieszSpec("custom", alpha=alpha[i]))[0],
                             x.shape[0])
        else:
            s = jackknife_se(lambda i: _theta(y[i], x[i], spec)[0], x.shape[0])
    return AmdeResult(theta, spec.variant, wfn, float(s), x.shape[0],
                      {"density": info["bandwidth"]}, info["flooring_count"])


def delta_change_estimate(y, x, delta: float, bandwidth: float | None = None,
                          se: bool = True) -> AmdeResult:
    """Average effect of moving every shock up by ``delta``, per unit of ``delta``."""
    return weighted_outcome_estimate(y, x, RieszSpec("delta_change", delta=delta,
                                                     bandwidth=bandwidth), se=se)


@dataclass
class DiscreteEffect:
    beta: float
    se: float
    steps: np.ndarray
    step_weights: np.ndarray
    fe_beta: float


def discrete_treatment_effect(y, x, cells=None) -> DiscreteEffect:
    """Weighted average of unit-step effects for an integer-valued treatment.

    Step ``s`` gets weight ``E[1{X >= s}(X - E[X|W])]``, normalized to sum
    to one; within a cell the step effect is the difference of cell means
    at ``s`` and ``s - 1``, with cell support gaps bridged linearly.  The
    result equals the fixed-effects regression slope, whose HC1 error is
    reported.

    Raises
    ------
    MissingStep
        The pooled support skips an integer.
    """
    y = as_array(y)
    x = as_array(x)
    if np.any(x != np.round(x)):
        raise ValueError("treatment must be integer valued")
    support = np.unique(x)
    if support.shape[0] < 2:
        raise DegenerateVariance("treatment takes a single value")
    if np.any(np.diff(support) != 1):
        raise MissingStep(f"support has gaps: {support.tolist()}")
    labels = np.zeros(x.shape[0], dtype=int) if cells is None else \
        np.unique(np.asarray(cells), return_inverse=True)[1].reshape(-1)
    steps = support[1:]
    n = x.shape[0]
    num = 0.0
    wsum = np.zeros(steps.shape[0])
    for c in np.unique(labels):
        sel = labels == c
        xc, yc = x[sel], y[sel]
        dev = xc - xc.mean()
        vals = np.unique(xc)
        gbar = np.array([yc[xc == v].mean() for v in vals])
        # g on the full integer grid, linear between observed values
        ggrid = np.interp(support, vals, gbar)
        w = np.array([np.sum(dev[xc >= s]) for s in steps]) / n
        w[steps <= vals[0]] = 0.0  # sums of deviations vanish up to fp
        w[steps > vals[-1]] = 0.0
        num += float(w @ np.diff(ggrid))
        wsum += w
    total = wsum.sum()
    if not total > 0:
        raise DegenerateVariance("treatment is constant within every cell")
    beta = num / total
    if cells is None:
        fit = ols(y, x)
    else:
        D = np.column_stack([labels == c for c in np.unique(labels)[1:]]).astype(float) \
            if np.unique(labels).shape[0] > 1 else None
        fit = ols(y, x if D is None else np.column_stack([x, D]))
    return DiscreteEffect(float(beta), float(fit.se[1]), steps, wsum / total, float(fit.coef[1]))


def _ll_bandwidth(x):
    x = as_array(x)
    h = 1.5 * silverman_bandwidth(x)
    if not h > 0:
        raise BandwidthDegenerate("shock has zero variance")
    return h


def regression_plugin_ad(y, x, weight_target="density", bandwidth: float | None = None,
                         grid: int = 2001) -> float:
    """Average of a local-linear derivative estimate under target weights.

    ``weight_target`` is ``"density"`` (KDE of the shock), a
    :class:`StepWeightFunction`, or a callable weight.  The local-linear fit
    uses a Gaussian kernel with 1.5 times the Silverman bandwidth.
    """
    y = as_array(y)
    x = as_array(x)
    if x.shape[0] < 50:
        raise InsufficientData("plug-in estimate needs at least 50 observations")
    h = bandwidth or _ll_bandwidth(x)
    if isinstance(weight_target, StepWeightFunction):
        k = weight_target.knots
        mids = 0.5 * (k[:-1] + k[1:])
        _, d = local_linear(x, y, mids, h)
        return float(np.sum(weight_target.values * d * np.diff(k)))
    t = np.linspace(x.min(), x.max(), grid)
    _, d = local_linear(x, y, t, h)
    if isinstance(weight_target, str):
        if weight_target != "density":
            raise ValueError(f"unknown weight target {weight_target!r}")
        w = kde(x).density(t)
    else:
        w = np.asarray(weight_target(t), dtype=float)
    return float(np.trapezoid(w * d, t))


def _crossfit(y, x, folds, g_override, alpha_override, rule, bandwidth):
    n = x.shape[0]
    idx = np.arange(n)
    psi = np.empty(n)
    floors = 0
    hs = {"regression": [], "density": []}
    for k in range(folds):
        ev = idx % folds == k
        tr = ~ev
        xe = x[ev]
        if g_override is None:
            h = _ll_bandwidth(x[tr])
            hs["regression"].append(h)
            g, dg = local_linear(x[tr], y[tr], xe, h)
        else:
            g, dg = g_override(xe)
        if alpha_override is None:
            spec = RieszSpec("score", bandwidth=bandwidth, bandwidth_rule=rule)
            a, info = representer(x[tr], spec, points=xe)
            floors += info["flooring_count"]
            hs["density"].append(info["bandwidth"])
        else:
            a = np.asarray(alpha_override(xe), dtype=float)
        a = a - a.mean()
        psi[ev] = dg + a * (y[ev] - g)
    return psi, floors, hs


def orthogonal_ad(y, x, folds: int = 2, g_override: Callable | None = None,
                  alpha_override: Callable | None = None, se: bool = True,
                  bandwidth_rule: str = "undersmoothed",
                  density_bandwidth_value: float | None = None) -> AmdeResult:
    """Cross-fitted doubly robust average derivative.

    Score: ``g'(X) + alpha(X) (Y - g(X))`` with ``g`` a local-linear fit and
    ``alpha = -f'/f`` from a KDE, both fitted on the other fold (folds split
    by index modulo ``folds``).  ``g_override(x) -> (g, g')`` and
    ``alpha_override(x) -> alpha`` replace a nuisance, which is how the
    double-robustness checks corrupt one of them.  ``se`` is the delete-d
    jackknife; the plain score-variance error is in ``extra["se_score"]``.
    """
    y = as_array(y)
    x = as_array(x)
    n = x.shape[0]
    if n < 100:
        raise InsufficientData("orthogonal estimate needs at least 100 observations")
    if folds < 2:
        raise ValueError("need at least two folds")
    psi, floors, hs = _crossfit(y, x, folds, g_override, alpha_override,
                                bandwidth_rule, density_bandwidth_value)
    theta = float(psi.mean())
    se_score = float(psi.std() / math.sqrt(n))
    s = float("nan")
    if se:
        s = jackknife_se(lambda i: float(_crossfit(y[i], x[i], folds, g_override, alpha_override,
                                                   bandwidth_rule,
                                                   density_bandwidth_value)[0].mean()), n)
    bw = {k: (float(np.mean(v)) if v else None) for k, v in hs.items()}
    return AmdeResult(theta, "orthogonal", None, s, n, bw, floors, {"se_score": se_score})
