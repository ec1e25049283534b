"""Reduced-form regression of an outcome on an instrument when the shock is
endogenous, and the latent-weight average it recovers."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import RequiresLatent
from ..numcore import ols
from .dgp import DrawSet, mte_structural
from .report import EstimandReport, within


@dataclass
class MteResult:
    beta: float
    se: float
    oracle: float
    weight_integral: float
    grid: np.ndarray
    weights: np.ndarray
    bin_probs: np.ndarray
    report: EstimandReport


def mte_reduced_form(draws: DrawSet, v_bins: int = 50, x_bins: int = 200,
                     name: str = "mte_reduced_form") -> MteResult:
    """Slope of Y on Z against a binned latent oracle.

    The oracle averages, over equiprobable bins of the latent ``V``,
    ``sum_k w_b(x_k) [Psi(x_{k+1}, v_b) - Psi(x_k, v_b)]`` where
    ``w_b(x) = mean(1{X >= x} (Z - Z_b)) / var(Z)`` within bin ``b`` and
    ``x_k`` are interval midpoints.  Centering ``Z`` within each bin removes
    the finite-sample correlation between ``Z`` and the bin.
    """
    if draws.spec is None or draws.spec.kind != "mte_iv" or "v" not in draws.latent:
        raise RequiresLatent("needs mte_iv draws with the latent V")
    obs = draws.observed
    z, x, y = obs["z"], obs["x"], obs["y"]
    v = draws.latent["v"]
    n = z.shape[0]
    fit = ols(y, z, se="hc1", names=["z"])
    beta, se = float(fit["z"]), float(fit.se_of("z"))
    vz = float(np.var(z))
    edges = np.linspace(x.min(), x.max(), x_bins + 1)
    mids = 0.5 * (edges[:-1] + edges[1:])
    order = np.argsort(v, kind="stable")
    groups = np.array_split(order, v_bins)
    W = np.zeros((v_bins, x_bins))
    probs = np.empty(v_bins)
    oracle = 0.0
    for b, idx in enumerate(groups):
        probs[b] = idx.shape[0] / n
        zb = z[idx] - z[idx].mean()
        xb = np.sort(x[idx])
        srt = zb[np.argsort(x[idx], kind="stable")]
        # sum of centred z over X >= m, for every midpoint m
        tail = np.r_[np.cumsum(srt[::-1])[::-1], 0.0]
        pos = np.searchsorted(xb, mids, side="left")
        W[b] = tail[pos] / idx.shape[0] / vz
        vbar = float(v[idx].mean())
        dpsi = np.diff(mte_structural(draws.spec, edges, np.full_like(edges, vbar)))
        oracle += probs[b] * float(W[b] @ dpsi)
    w = probs @ W
    integral = float(w @ np.diff(edges))
    rep = within(name, beta, oracle, 3 * se, "binned latent-weight oracle, 3 HC1 SE")
    return MteResult(beta, se, oracle, integral, mids, w, probs, rep)
