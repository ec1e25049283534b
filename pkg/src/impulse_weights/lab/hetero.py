"""Identification through heteroskedasticity and its limits.

With a regime variable ``D`` that shifts the variance of the shock, the
instrument ``Z = (D - mean D) Y1`` gives the ratio
``cov(Yj, Z) / cov(Y1, Z)``.  In a linear model that is the relative
impulse response.  In general it is a ratio of weighted averages whose
weights ``cov(1{X >= x}, psi1(X)(D - mean D))`` need not be positive, and
for symmetric shock laws the whole ratio can be built from an even
structural function, so nothing in the observed data pins down signs.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from ..errors import (AsymmetricRLaw, CellTooSmall, DegenerateVariance, InsufficientData,
                      RequiresLatent, WeakIdentification)
from ..numcore import Dataset, RngStream, as_array, ols
from ..weights import StepWeightFunction, _grouped, _groups, _upper
from .dgp import DrawSet, Law, _gamma_specs, _regimes, make_fn, structural_outcomes, u_matrix
from .independence import ks_two_sample


def _outcome_names(data: Dataset):
    names = sorted((c for c in data.columns if c.startswith("y") and c[1:].isdigit()),
                   key=lambda c: int(c[1:]))
    if not names:
        raise ValueError("no outcome columns y1, y2, ...")
    return names


def _data(obj) -> Dataset:
    return obj.observed if isinstance(obj, DrawSet) else obj


@dataclass
class HeteroIvResult:
    outcomes: list
    estimates: np.ndarray
    se: np.ndarray
    first_cov: float
    first_cov_se: float
    n: int

    def estimate(self, name: str) -> float:
        return float(self.estimates[self.outcomes.index(name)])

    def se_of(self, name: str) -> float:
        return float(self.se[self.outcomes.index(name)])


def hetero_iv_estimate(data, outcomes=None, regime: str = "d") -> HeteroIvResult:
    """Ratio ``cov(Yj, Z) / cov(Y1, Z)`` with ``Z = (D - mean D) Y1``.

    Standard errors come from the influence function of the ratio, which
    includes the estimated mean of ``D``.  The first outcome is the
    normalizing one; its entry is 1 with zero error.

    Warns
    -----
    WeakIdentification
        ``cov(Y1, Z)`` is within two standard errors of zero.
    """
    data = _data(data)
    names = list(outcomes) if outcomes else _outcome_names(data)
    if len(names) < 2:
        raise ValueError("need at least two outcomes")
    d = data[regime]
    n = d.shape[0]
    if n < 10:
        raise InsufficientData("too few observations")
    b = d - d.mean()
    if not np.any(b != 0):
        raise DegenerateVariance("regime variable is constant")
    y1 = data[names[0]]
    z = b * y1
    zc = z - z.mean()
    y1c = y1 - y1.mean()
    c1 = float(zc @ y1c) / n
    # influence of cov(Y1, Z), including the estimated mean of D
    psi_c = zc * y1c - c1 - float(np.mean(y1c * y1)) * b
    c1_se = float(np.sqrt(np.mean(psi_c ** 2) / n))
    if abs(c1) < 2 * c1_se:
        warnings.warn(f"cov(Y1, Z) = {c1:.4g} is within 2 SE ({c1_se:.3g}) of zero",
                      WeakIdentification, stacklevel=2)
    est = np.ones(len(names))
    se = np.zeros(len(names))
    for j, name in enumerate(names[1:], start=1):
        yj = data[name]
        beta = float(zc @ (yj - yj.mean())) / n / c1
        r = yj - beta * y1
        rc = r - r.mean()
        covy1r = float(np.mean(y1c * r))
        psi = (zc * rc - covy1r * b) / c1
        est[j] = beta
        se[j] = float(np.sqrt(np.mean(psi ** 2) / n))
    return HeteroIvResult(names, est, se, c1, c1_se, n)


def _require_latent(draws):
    if not isinstance(draws, DrawSet) or "x" not in draws.latent:
        raise RequiresLatent("needs simulated draws with the latent shock")
    if draws.spec.kind not in ("hetero_rigobon", "multiplicative"):
        raise RequiresLatent("needs a heteroskedasticity design")


def _psi1(draws):
    if draws.spec.kind != "hetero_rigobon":
        raise RequiresLatent("weights need an additive design with a known first outcome map")
    return make_fn(draws.spec.params["psi"][0])


@dataclass
class HeteroWeights:
    weight_fn: StepWeightFunction
    regime_var: float
    overlay: object = None

    def __call__(self, x):
        return self.weight_fn(x)


def hetero_weights(draws: DrawSet, psi1=None) -> HeteroWeights:
    """Empirical ``cov(1{X >= x}, psi1(X)(D - mean D))`` on the latent shock.

    Pointwise standard errors come from the influence function of the
    covariance, including the estimated mean of ``D``.  For a binary regime
    with ``psi1 = identity`` and laws with known partial moments, an
    analytic overlay ``var(D) (E[X 1{X>=x} | D=1] - E[X 1{X>=x} | D=0])``
    is attached.
    """
    _require_latent(draws)
    x = draws.latent["x"]
    d = draws.latent["d"]
    n = x.shape[0]
    f = _psi1(draws) if psi1 is None else psi1
    ps = np.asarray(f(x), dtype=float)
    b = d - d.mean()
    w = ps * b
    a = w - w.mean()
    groups = _groups(x)
    order, knots, first = groups

    def up(q):
        return _upper(_grouped(q, order, first))[1:]

    om = up(a) / n
    A0 = up(np.ones(n))
    p = A0 / n
    ck = up(ps - ps.mean()) / n
    Aaa = up(a * a)
    Aab = up(a * b)
    Saa = float(a @ a)
    Sab = float(a @ b)
    Sbb = float(b @ b)
    s2 = (1 - 2 * p) * Aaa + p * p * Saa - 2 * ck * (Aab - p * Sab) + ck * ck * Sbb - n * om * om
    se = np.sqrt(np.clip(s2, 0.0, None)) / n
    fn = StepWeightFunction(knots, om, se, 1.0)
    vd = float(np.mean(b * b))
    return HeteroWeights(fn, vd, hetero_overlay(draws) if psi1 is None else None)


def hetero_overlay(draws: DrawSet):
    """Analytic weights for a binary regime with identity ``psi1``; None otherwise."""
    p = draws.spec.params
    if draws.spec.kind != "hetero_rigobon" or p["psi"][0] != "identity":
        return None
    keys, vals, probs = _regimes(p)
    if len(keys) != 2:
        return None
    laws = _regime_laws(p, keys)
    if any(abs(law.mean()) > 1e-12 for law in laws):
        return None
    vd = probs[0] * probs[1] * (vals[1] - vals[0]) ** 2

    def overlay(x):
        shape = np.shape(x)
        diff = laws[1].upper_first_moment(x) - laws[0].upper_first_moment(x)
        # scaled for D values other than {0, 1}
        out = (vd * diff / (vals[1] - vals[0])).reshape(shape)
        return float(out) if out.ndim == 0 else out

    return overlay


def _regime_laws(p, keys):
    if p.get("x_laws"):
        return [Law.from_spec(p["x_laws"][k]) for k in keys]
    r = Law.from_spec(p["r_law"])
    out = []
    for k in keys:
        s = float(p["sigma"][k])
        spec = r.to_spec()
        if r.dist == "normal":
            spec.update(loc=spec["loc"] * s, scale=spec["scale"] * s)
        elif r.dist == "uniform":
            spec.update(low=spec["low"] * s, high=spec["high"] * s)
        elif r.dist in ("laplace",):
            spec.update(loc=spec["loc"] * s, scale=spec["scale"] * s)
        else:
            spec["scale"] = spec["scale"] * s
        out.append(Law.from_spec(spec))
    return out


# --------------------------------------------------------------------------
# symmetric twin


def split_uniform(u, k: int):
    """Split one uniform into a Rademacher sign and ``k`` independent uniforms.

    The leading bit of the 53-bit mantissa gives the sign; the remaining
    52 bits are dealt round-robin into ``k`` integers.
    """
    u = np.asarray(u, dtype=float)
    bits = np.floor(u * 2.0 ** 53).astype(np.uint64)
    tau = np.where(bits >> np.uint64(52) & np.uint64(1), 1.0, -1.0)
    rest = bits & np.uint64((1 << 52) - 1)
    per = 52 // k
    outs = [np.zeros(u.shape, dtype=np.uint64) for _ in range(k)]
    for pos in range(per * k):
        bit = (rest >> np.uint64(51 - pos)) & np.uint64(1)
        j = pos % k
        outs[j] = (outs[j] << np.uint64(1)) | bit
    scale = 2.0 ** per
    return tau, [(o.astype(float) + 0.5) / scale for o in outs]


@dataclass
class TwinResult:
    twin: Dataset
    ks: dict
    evenness_exact: bool
    cov_gap: dict
    odd_slope: float
    odd_slope_se: float
    passed: bool
    extra: dict = field(default_factory=dict)


def _check_symmetric(draws):
    p = draws.spec.params
    keys, _, _ = _regimes(p)
    if p.get("x_laws"):
        for k in keys:
            if not Law.from_spec(p["x_laws"][k]).symmetric:
                raise AsymmetricRLaw(f"shock law in regime {k} is not symmetric")
    elif not Law.from_spec(p["r_law"]).symmetric:
        raise AsymmetricRLaw("shock law is not symmetric about zero")


def twin_outcomes(draws: DrawSet, ut: np.ndarray) -> np.ndarray:
    """Evaluate the even twin ``psi(|x| tau(u), U(u))`` at the latent shocks."""
    p = draws.spec.params
    _, u_dim = _gamma_specs(p)
    tau, parts = split_uniform(ut, u_dim)
    ulaw = Law.from_spec(p["u_law"])
    U = np.column_stack([ulaw.ppf(q) for q in parts])
    return structural_outcomes(draws.spec, np.abs(draws.latent["x"]) * tau, U)


def symmetric_twin(draws: DrawSet, seed: int | None = None) -> TwinResult:
    """Build an even structural function with the same observed law.

    Each unit gets a fresh uniform; its sign bit flips the shock and its
    remaining bits generate the other structural shocks.  The twin outcome
    depends on the shock only through its absolute value, and within every
    regime its joint law matches the original when the shock law is
    symmetric.  Checks: two-sample KS per outcome and regime, covariance
    gaps, and the slope on the shock in a regression of the first twin
    outcome on the shock and its absolute value.

    Raises
    ------
    AsymmetricRLaw
        Shock law is not symmetric about zero.
    """
    _require_latent(draws)
    _check_symmetric(draws)
    seed = draws.seed if seed is None else seed
    x = draws.latent["x"]
    n = x.shape[0]
    ut = RngStream(seed, 99).uniform(n)
    Yt = twin_outcomes(draws, ut)
    # exact evenness: flipping the shock leaves every twin outcome unchanged
    _, u_dim = _gamma_specs(draws.spec.params)
    tau, parts = split_uniform(ut, u_dim)
    ulaw = Law.from_spec(draws.spec.params["u_law"])
    U = np.column_stack([ulaw.ppf(q) for q in parts])
    flipped = structural_outcomes(draws.spec, np.abs(-x) * tau, U)
    even = bool(np.array_equal(flipped, Yt))

    obs = draws.observed
    names = _outcome_names(obs)
    d = obs["d"]
    ks, gaps = {}, {}
    ok = even
    for lev in np.unique(d):
        sel = d == lev
        for j, name in enumerate(names):
            r = ks_two_sample(Yt[sel, j], obs[name][sel])
            ks[(float(lev), name)] = r
            ok &= r.passed
        Ya = np.column_stack([obs[nm][sel] for nm in names])
        gaps[float(lev)] = np.cov(Yt[sel].T, bias=True) - np.cov(Ya.T, bias=True)
    fit = ols(Yt[:, 0], np.column_stack([x, np.abs(x)]))
    cols = {"d": d.copy()}
    for j, name in enumerate(names):
        cols[name] = Yt[:, j]
    return TwinResult(Dataset(cols), ks, even, gaps, float(fit.coef[1]), float(fit.se[1]),
                      bool(ok))


# --------------------------------------------------------------------------
# rank-one test


@dataclass
class Rank1Result:
    ratio: float
    eigenvalues: np.ndarray
    delta_cov: np.ndarray
    degenerate: bool
    n0: int
    n1: int
    threshold: float


def rank1_stat(data, outcomes=None, regime: str = "d", min_cell: int = 30) -> Rank1Result:
    """Second-to-first eigenvalue ratio of the regime change in outcome covariance.

    A linear model with one heteroskedastic shock makes
    ``cov(Y | D=1) - cov(Y | D=0)`` rank one.  Eigenvalues are sorted by
    absolute value.  ``degenerate`` is set when the leading eigenvalue is
    within four noise units of zero (noise unit
    ``sqrt(2 (1/n0 + 1/n1))`` times the largest eigenvalue of the pooled
    covariance), in which case the ratio carries no information.
    """
    data = _data(data)
    names = list(outcomes) if outcomes else _outcome_names(data)
    if len(names) < 2:
        raise ValueError("need at least two outcomes")
    d = data[regime]
    levels = np.unique(d)
    if levels.shape[0] != 2:
        raise ValueError("regime must be binary")
    Y = np.column_stack([data[c] for c in names])
    s0 = d == levels[0]
    s1 = ~s0
    n0, n1 = int(s0.sum()), int(s1.sum())
    if min(n0, n1) < min_cell:
        raise CellTooSmall(f"regime cells have {n0} and {n1} observations; need {min_cell}")
    S0 = np.cov(Y[s0].T, bias=True)
    S1 = np.cov(Y[s1].T, bias=True)
    dS = S1 - S0
    ev = np.linalg.eigvalsh(dS)
    ev = ev[np.argsort(-np.abs(ev))]
    pooled = np.cov(Y.T, bias=True)
    noise = math.sqrt(2 * (1 / n0 + 1 / n1)) * float(np.max(np.linalg.eigvalsh(pooled)))
    thr = 4 * noise
    degenerate = bool(abs(ev[0]) < thr)
    ratio = float(abs(ev[1]) / abs(ev[0])) if ev[0] != 0 else float("nan")
    return Rank1Result(ratio, ev, dS, degenerate, n0, n1, thr)
