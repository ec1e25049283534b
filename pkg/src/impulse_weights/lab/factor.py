"""Rebuild a joint distribution from one observed column and fresh uniforms.

The first column is kept.  Each later column is drawn from its empirical
conditional quantile function given the columns already rebuilt, evaluated
at an independent uniform.  The rebuilt sample should match the observed
one in distribution even though the added uniforms are, by construction,
independent of the first column.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from ..errors import InsufficientData, TooHighDimensional
from ..numcore import Dataset, RngStream
from .dgp import DrawSet
from .independence import EnergyTest, energy_test, ks_two_sample

MAX_DIM = 4
MIN_N = 500


@dataclass
class FactorResult:
    draws: DrawSet
    energy: EnergyTest
    ks: dict
    k_neighbors: int

    @property
    def passed(self) -> bool:
        return self.energy.passed and all(r.passed for r in self.ks.values())


def conditional_quantile(cond_obs, target_obs, cond_query, u, k):
    """Quantile ``u`` of ``target`` among the ``k`` observations nearest to
    each query point in standardized conditioning coordinates.

    Order statistics are interpolated linearly at position ``u (k - 1)``.
    """
    mu = cond_obs.mean(axis=0)
    sd = cond_obs.std(axis=0)
    sd[sd == 0] = 1.0
    tree = cKDTree((cond_obs - mu) / sd)
    _, idx = tree.query((cond_query - mu) / sd, k=k)
    idx = idx.reshape(cond_query.shape[0], k)
    vals = np.sort(target_obs[idx], axis=1)
    pos = u * (k - 1)
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, k - 1)
    frac = pos - lo
    rows = np.arange(vals.shape[0])
    return vals[rows, lo] * (1 - frac) + vals[rows, hi] * frac


def factor_reconstruct(observed: Dataset, k_neighbors: int | None = None, seed: int = 0,
                       permutations: int = 99) -> FactorResult:
    cols = observed.columns
    d = len(cols)
    n = observed.n
    if d > MAX_DIM:
        raise TooHighDimensional(f"{d} columns; at most {MAX_DIM} supported")
    if d < 1 or n < MIN_N:
        raise InsufficientData(f"need at least {MIN_N} rows, got {n}")
    k = int(k_neighbors or math.ceil(math.sqrt(n)))
    k = max(1, min(k, n))
    Y = np.column_stack([observed[c] for c in cols])
    out = np.empty_like(Y)
    out[:, 0] = Y[:, 0]
    rs = RngStream(seed, 17)
    latent = {"x_tilde": Y[:, 0].copy()}
    for j in range(1, d):
        u = rs.child(j).uniform(n)
        latent[f"ubar{j}"] = u
        out[:, j] = conditional_quantile(Y[:, :j], Y[:, j], out[:, :j], u, k)
    rebuilt = Dataset({c: out[:, j] for j, c in enumerate(cols)})
    draws = DrawSet(rebuilt, Dataset(latent), int(seed), None)
    energy = energy_test(out, Y, permutations=permutations, seed=seed)
    ks = {c: ks_two_sample(out[:, j], Y[:, j]) for j, c in enumerate(cols)}
    return FactorResult(draws, energy, ks, k)
