"""Local projections and their weight decompositions."""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (DegenerateVariance, HorizonTooLong, InsufficientData,
                     StateDegenerate, WeakNormalizer, NegativeWeightRisk)
from .numcore import Dataset, as_array, newey_west_lags, ols, residualize
from .weights import (Z95, CovariateWeights, WeightReport, covariate_weights,
                      observed_weights, proxy_weights)


@dataclass
class LpResult:
    h: int
    beta_h: float
    se: float
    weight_report: WeightReport | None
    controls: tuple = ()
    n: int = 0

    @property
    def ci(self):
        return self.beta_h - Z95 * self.se, self.beta_h + Z95 * self.se


@dataclass
class QuadLpResult:
    beta0: float
    beta1: float
    beta2: float
    se: np.ndarray
    vcov: np.ndarray
    h: int = 0
    n: int = 0

    def derivative_fn(self, x):
        """Implied marginal effect ``beta1 + 2 beta2 x``."""
        return self.beta1 + 2.0 * self.beta2 * np.asarray(x, dtype=float)

    def derivative_se(self, x):
        x = np.asarray(x, dtype=float)
        v = self.vcov
        return np.sqrt(v[1, 1] + 4 * x * v[1, 2] + 4 * x * x * v[2, 2])

    @property
    def sign_reversal_region(self) -> tuple[float, float] | None:
        """Interval of shock sizes where the implied effect has the opposite
        sign to ``beta1``; None when there is none."""
        b1, b2 = self.beta1, self.beta2
        if b2 == 0.0 or b1 == 0.0:
            return None
        root = -b1 / (2.0 * b2)
        if (b1 > 0) == (b2 > 0):
            return (-np.inf, root)
        return (root, np.inf)


def _controls_matrix(data: Dataset, controls, rows):
    if not controls:
        return None
    return np.column_stack([data[c][rows] for c in controls])


def _align(data: Dataset, outcome: str, shock: str, controls, h: int):
    n = data.n
    if h < 0:
        raise ValueError("horizon must be nonnegative")
    k = 2 + len(controls)
    if n - h <= k:
        raise HorizonTooLong(f"horizon {h} leaves {n - h} rows for {k} regressors")
    y = data[outcome][h:]
    x = data[shock][: n - h]
    W = _controls_matrix(data, controls, slice(0, n - h))
    return y, x, W


def add_lags(data: Dataset, columns: Sequence[str], k: int) -> tuple[Dataset, list[str]]:
    """Append ``k`` lags of each column and drop the first ``k`` rows."""
    if k <= 0:
        return data, []
    if data.n <= k:
        raise InsufficientData("not enough rows for the requested lags")
    cols = {c: data[c][k:] for c in data.columns}
    names = []
    for c in columns:
        for j in range(1, k + 1):
            name = f"{c}_lag{j}"
            cols[name] = data[c][k - j: data.n - j]
            names.append(name)
    return Dataset(cols), names


def local_projection(data: Dataset, outcome: str, shock: str, controls: Sequence[str] = (),
                     horizons: Sequence[int] = (0,), se: str = "hc1",
                     lags: int | None = None, weights: bool = True) -> list[LpResult]:
    """Slope of ``outcome[t+h]`` on ``shock[t]`` with linear controls, per horizon.

    The weight report describes the residualized shock, so the slope equals
    the weighted average of marginal effects it carries.
    """
    controls = tuple(controls)
    out = []
    for h in horizons:
        y, x, W = _align(data, outcome, shock, controls, int(h))
        X = x[:, None] if W is None else np.column_stack([x, W])
        fit = ols(y, X, se=se, lags=lags)
        rep = None
        if weights:
            xt = residualize(x, W)
            rep = observed_weights(xt, se=se, lags=lags)
        out.append(LpResult(int(h), float(fit.coef[1]), float(fit.se[1]), rep, controls, fit.n))
    return out


def quadratic_projection(data: Dataset, outcome: str, shock: str, h: int = 0,
                         controls: Sequence[str] = (), se: str = "hc1",
                         lags: int | None = None) -> QuadLpResult:
    """Regression of ``outcome[t+h]`` on ``shock[t]`` and its square."""
    y, x, W = _align(data, outcome, shock, tuple(controls), int(h))
    cols = [x, x * x] + ([] if W is None else [W])
    fit = ols(y, np.column_stack(cols), se=se, lags=lags)
    return QuadLpResult(float(fit.coef[0]), float(fit.coef[1]), float(fit.coef[2]),
                        fit.se[:3], fit.vcov[:3, :3], int(h), fit.n)


def state_dependent_projection(data: Dataset, outcome: str, shock: str, state: str,
                               controls: Sequence[str] = (), horizons: Sequence[int] = (0,),
                               se: str = "hc1", lags: int | None = None) -> dict:
    """Local projections run separately in each value of a binary state.

    The state is read at the shock date.  Returns ``{state_value: [LpResult]}``.
    """
    controls = tuple(controls)
    s_all = data[state]
    levels = np.unique(s_all)
    if levels.shape[0] != 2:
        raise StateDegenerate(f"state must take exactly two values, found {levels.shape[0]}")
    out = {lev.item(): [] for lev in levels}
    for h in horizons:
        y, x, W = _align(data, outcome, shock, controls, int(h))
        s = s_all[: data.n - int(h)]
        for lev in levels:
            sel = s == lev
            k = 2 + len(controls)
            if sel.sum() <= k + 1 or np.ptp(x[sel]) == 0:
                raise StateDegenerate(f"state {lev} has too little shock variation")
            Ws = None if W is None else W[sel]
            X = x[sel][:, None] if Ws is None else np.column_stack([x[sel], Ws])
            fit = ols(y[sel], X, se=se, lags=lags)
            rep = observed_weights(residualize(x[sel], Ws), se=se, lags=lags)
            out[lev.item()].append(LpResult(int(h), float(fit.coef[1]), float(fit.se[1]),
                                            rep, controls, fit.n))
    return out


def _poly_basis(W, degree=3):
    W = np.atleast_2d(np.asarray(W, dtype=float))
    if W.shape[0] == 1 and W.shape[1] > 1:
        W = W.T
    sd = W.std(axis=0)
    sd[sd == 0] = 1.0
    Ws = (W - W.mean(axis=0)) / sd
    cols = []
    for d in range(1, degree + 1):
        for combo in itertools.combinations_with_replacement(range(Ws.shape[1]), d):
            cols.append(np.prod(Ws[:, combo], axis=1))
    return np.column_stack(cols)


def _r2(y, B):
    X = np.column_stack([np.ones(y.shape[0]), B])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    r = y - X @ coef
    tss = np.sum((y - y.mean()) ** 2)
    return 1.0 - float(r @ r) / float(tss) if tss > 0 else 0.0


def _cell_dummies(labels):
    uniq, inv = np.unique(labels, return_inverse=True)
    D = np.zeros((labels.shape[0], uniq.shape[0] - 1))
    for j in range(1, uniq.shape[0]):
        D[:, j - 1] = inv == j
    return D


@dataclass
class PartialLpResult:
    beta: float
    se: float
    pi_spec: str
    weight_report: WeightReport
    r2_linear: float | None = None
    r2_flexible: float | None = None
    covariate: CovariateWeights | None = None
    h: int = 0
    n: int = 0
    extra: dict = field(default_factory=dict)


def partially_linear_projection(data: Dataset, outcome: str, shock: str, controls: Sequence[str],
                                pi_spec: str = "linear", basis: Callable | np.ndarray | None = None,
                                h: int = 0, se: str = "hc1", lags: int | None = None,
                                r2_gap: float = 0.01) -> PartialLpResult:
    """Slope on the shock after partialling out a class of control functions.

    ``pi_spec`` picks the class: ``"linear"`` (controls entered linearly),
    ``"cell_means"`` (one dummy per distinct control profile) or
    ``"user_basis"`` (``basis`` maps the control matrix to regressors, or is
    the regressor matrix itself).

    With ``"linear"`` the shock is also regressed on a cubic polynomial in
    the controls; if that raises R^2 by more than ``r2_gap`` a
    :class:`NegativeWeightRisk` warning is issued, because the linear
    forecast of the shock is then misspecified and weights can turn negative.
    """
    controls = tuple(controls)
    if not controls:
        raise ValueError("partially linear projection needs controls")
    y, x, W = _align(data, outcome, shock, controls, int(h))
    r2l = r2f = None
    cov_w = None
    if pi_spec == "linear":
        B = W
        r2l = _r2(x, W)
        r2f = _r2(x, _poly_basis(W))
        if r2f - r2l > r2_gap:
            warnings.warn(f"flexible controls raise the shock R^2 by {r2f - r2l:.4f} "
                          f"({r2l:.4f} -> {r2f:.4f}); weights may be negative",
                          NegativeWeightRisk, stacklevel=2)
    elif pi_spec == "cell_means":
        labels = np.unique(W, axis=0, return_inverse=True)[1].reshape(-1)
        B = _cell_dummies(labels)
        cov_w = covariate_weights(x, labels, se=se)
    elif pi_spec == "user_basis":
        if basis is None:
            raise ValueError("user_basis needs a basis")
        B = basis(W) if callable(basis) else np.asarray(basis, dtype=float)[: x.shape[0]]
    else:
        raise ValueError(f"unknown pi_spec {pi_spec!r}")
    X = np.column_stack([x, B]) if B is not None and np.size(B) else x[:, None]
    fit = ols(y, X, se=se, lags=lags)
    xt = residualize(x, B)
    if not np.dot(xt, xt) > 0:
        raise DegenerateVariance("shock is spanned by the controls")
    rep = cov_w.report if cov_w is not None else observed_weights(xt, se=se, lags=lags)
    return PartialLpResult(float(fit.coef[1]), float(fit.se[1]), pi_spec, rep, r2l, r2f,
                           cov_w, int(h), fit.n)


@dataclass
class ProxyLpResult:
    h: int
    beta_h: float
    se: float
    reduced_form: float
    reduced_form_se: float
    normalizer: float | None = None
    normalizer_se: float | None = None
    weight_report: WeightReport | None = None
    n: int = 0

    @property
    def ci(self):
        return self.beta_h - Z95 * self.se, self.beta_h + Z95 * self.se


def _slope_influence(y, z, W):
    """Slope of y on z (with controls) and per-row influence terms summing to its error."""
    zt = residualize(z, W)
    X = z[:, None] if W is None else np.column_stack([z, W])
    fit = ols(y, X, se="classical")
    return float(fit.coef[1]), zt * fit.resid / float(zt @ zt)


def _hac(phi, se, lags):
    v = float(phi @ phi)
    if se == "nw":
        L = newey_west_lags(phi.shape[0]) if lags is None else int(lags)
        for lag in range(1, min(L, phi.shape[0] - 1) + 1):
            v += 2 * (1 - lag / (L + 1.0)) * float(phi[lag:] @ phi[:-lag])
    return np.sqrt(max(v, 0.0))


def proxy_projection(data: Dataset, outcome: str, proxy: str, controls: Sequence[str] = (),
                     horizons: Sequence[int] = (0,), normalization_outcome: str | None = None,
                     shock: str | None = None, se: str = "hc1",
                     lags: int | None = None) -> list[ProxyLpResult]:
    """Reduced-form projections on a proxy, optionally rescaled.

    With ``normalization_outcome`` the horizon-h reduced form is divided by
    the horizon-0 reduced form of that variable (an LP-IV ratio) and the
    standard error comes from the delta method on stacked influence terms.
    A normalizer within two standard errors of zero triggers
    :class:`WeakNormalizer`.  If the true ``shock`` column is supplied (as in
    simulations) the proxy weights are attached.
    """
    controls = tuple(controls)
    n = data.n
    norm = None
    if normalization_outcome is not None:
        y0, z0, W0 = _align(data, normalization_outcome, proxy, controls, 0)
        b0, phi0 = _slope_influence(y0, z0, W0)
        b0_se = _hac(phi0, se, lags)
        if abs(b0) < 2 * b0_se:
            warnings.warn(f"normalizing coefficient {b0:.4g} is within 2 SE ({b0_se:.3g}) of zero",
                          WeakNormalizer, stacklevel=2)
        norm = (b0, b0_se, phi0)
    out = []
    for h in horizons:
        h = int(h)
        y, z, W = _align(data, outcome, proxy, controls, h)
        b, phi = _slope_influence(y, z, W)
        b_se = _hac(phi, se, lags)
        rep = None
        if shock is not None:
            rep = proxy_weights(data[shock][: n - h], residualize(z, W), se=None)
        if norm is None:
            out.append(ProxyLpResult(h, b, b_se, b, b_se, None, None, rep, y.shape[0]))
            continue
        b0, b0_se, phi0 = norm
        r = b / b0
        m = y.shape[0]
        comb = (phi - r * phi0[:m]) / b0
        # normalizer rows beyond the outcome sample still contribute their own variance
        tail = r * phi0[m:] / b0
        r_se = float(np.sqrt(_hac(comb, se, lags) ** 2 + float(tail @ tail)))
        out.append(ProxyLpResult(h, r, r_se, b, b_se, b0, b0_se, rep, m))
    return out
