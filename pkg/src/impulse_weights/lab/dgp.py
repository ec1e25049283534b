"""Data generating processes for simulations.

A :class:`DgpSpec` is a kind plus a JSON-friendly parameter dict.  Each kind
draws its latent columns from seeded streams and then computes the observed
columns from the latent ones with a pure function, so
``observe(spec, latent)`` reproduces the observed data bit for bit.

Scalar functions (outcome maps, nonlinear transforms) are given by name or
as ``{"poly": [c0, c1, ...]}``; distributions as ``{"dist": ..., ...}``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from scipy import integrate, special, stats

from ..errors import InvalidSpec
from ..numcore import Dataset, RngStream

# --------------------------------------------------------------------------
# named scalar functions


def _phi_shift(x):
    return special.ndtr(x - 1.0)


_FUNCS: dict[str, Callable] = {
    "identity": lambda x: x,
    "zero": lambda x: np.zeros_like(x),
    "square": lambda x: x * x,
    "cube": lambda x: x ** 3,
    "abs": np.abs,
    "tanh": np.tanh,
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "normal_cdf_shift": _phi_shift,
    "log1m_exp": lambda u: np.log1p(-np.exp(u)),
    "square_centered": lambda x: x * x - 1.0,
}


def make_fn(spec) -> Callable[[np.ndarray], np.ndarray]:
    """Build a vectorized function from a name, ``{"poly": [...]}`` or
    ``{"name": ..., "scale": s, "shift": t}`` (meaning ``s * f(x) + t``)."""
    if isinstance(spec, str):
        if spec not in _FUNCS:
            raise InvalidSpec(f"unknown function {spec!r}; known: {sorted(_FUNCS)}")
        return _FUNCS[spec]
    if isinstance(spec, dict):
        if "poly" in spec:
            coefs = [float(c) for c in spec["poly"]]
            return lambda x: np.polynomial.polynomial.polyval(x, coefs)
        if "name" in spec:
            f = make_fn(spec["name"])
            s = float(spec.get("scale", 1.0))
            t = float(spec.get("shift", 0.0))
            return lambda x: s * f(x) + t
    raise InvalidSpec(f"cannot interpret function spec {spec!r}")


def fn_is_even(spec) -> bool:
    if isinstance(spec, str):
        return spec in ("zero", "square", "abs", "cos", "square_centered")
    if isinstance(spec, dict) and "poly" in spec:
        return all(float(c) == 0.0 for c in spec["poly"][1::2])
    if isinstance(spec, dict) and "name" in spec:
        return fn_is_even(spec["name"])
    return False


# --------------------------------------------------------------------------
# distributions


@dataclass(frozen=True)
class Law:
    """Univariate law with sampling through an :class:`RngStream`."""

    dist: str
    params: tuple = ()

    @staticmethod
    def from_spec(spec) -> "Law":
        if isinstance(spec, str):
            spec = {"dist": spec}
        if not isinstance(spec, dict) or "dist" not in spec:
            raise InvalidSpec(f"bad law spec {spec!r}")
        d = spec["dist"]
        if d == "normal":
            p = (float(spec.get("loc", 0.0)), float(spec.get("scale", 1.0)))
        elif d == "uniform":
            p = (float(spec.get("low", -1.0)), float(spec.get("high", 1.0)))
        elif d == "laplace":
            p = (float(spec.get("loc", 0.0)), float(spec.get("scale", 1.0)))
        elif d == "t":
            p = (float(spec.get("df", 5.0)), float(spec.get("scale", 1.0)))
        elif d == "exponential_centered":
            p = (float(spec.get("scale", 1.0)),)
        elif d == "rademacher":
            p = (float(spec.get("scale", 1.0)),)
        elif d == "bernoulli":
            p = (float(spec.get("p", 0.5)),)
        else:
            raise InvalidSpec(f"unknown distribution {d!r}")
        law = Law(d, p)
        law._validate()
        return law

    def _validate(self):
        d, p = self.dist, self.params
        if d in ("normal", "laplace", "t") and not p[1] > 0:
            raise InvalidSpec(f"{d} scale must be positive")
        if d == "t" and not p[0] > 0:
            raise InvalidSpec("t df must be positive")
        if d == "uniform" and not p[1] > p[0]:
            raise InvalidSpec("uniform needs high > low")
        if d in ("exponential_centered", "rademacher") and not p[0] > 0:
            raise InvalidSpec(f"{d} scale must be positive")
        if d == "bernoulli" and not 0 < p[0] < 1:
            raise InvalidSpec("bernoulli p must lie in (0, 1)")

    def to_spec(self) -> dict:
        names = {"normal": ("loc", "scale"), "uniform": ("low", "high"), "laplace": ("loc", "scale"),
                 "t": ("df", "scale"), "exponential_centered": ("scale",),
                 "rademacher": ("scale",), "bernoulli": ("p",)}[self.dist]
        return {"dist": self.dist, **dict(zip(names, self.params))}

    @property
    def frozen(self):
        d, p = self.dist, self.params
        if d == "normal":
            return stats.norm(p[0], p[1])
        if d == "uniform":
            return stats.uniform(p[0], p[1] - p[0])
        if d == "laplace":
            return stats.laplace(p[0], p[1])
        if d == "t":
            return stats.t(p[0], scale=p[1])
        if d == "exponential_centered":
            return stats.expon(-p[0], p[0])
        if d == "bernoulli":
            return stats.bernoulli(p[0])
        return None

    @property
    def symmetric(self) -> bool:
        d, p = self.dist, self.params
        if d in ("normal", "laplace"):
            return p[0] == 0.0
        if d == "uniform":
            return p[0] == -p[1]
        return d in ("t", "rademacher")

    def sample(self, stream: RngStream, n: int) -> np.ndarray:
        g = stream.generator
        d, p = self.dist, self.params
        if d == "normal":
            return g.normal(p[0], p[1], n)
        if d == "uniform":
            return p[0] + (p[1] - p[0]) * stream.uniform(n)
        if d == "laplace":
            return g.laplace(p[0], p[1], n)
        if d == "t":
            return p[1] * g.standard_t(p[0], n)
        if d == "exponential_centered":
            return p[0] * (g.standard_exponential(n) - 1.0)
        if d == "rademacher":
            return p[0] * np.where(stream.uniform(n) < 0.5, -1.0, 1.0)
        return (stream.uniform(n) < p[0]).astype(float)

    def ppf(self, u):
        if self.dist == "rademacher":
            return self.params[0] * np.where(np.asarray(u) < 0.5, -1.0, 1.0)
        return self.frozen.ppf(u)

    def cdf(self, x):
        if self.dist == "rademacher":
            s = self.params[0]
            x = np.asarray(x, dtype=float)
            return np.where(x < -s, 0.0, np.where(x < s, 0.5, 1.0))
        return self.frozen.cdf(x)

    def mean(self) -> float:
        if self.dist == "rademacher":
            return 0.0
        return float(self.frozen.mean())

    def second_moment(self) -> float:
        if self.dist == "rademacher":
            return self.params[0] ** 2
        f = self.frozen
        return float(f.var() + f.mean() ** 2)

    def upper_first_moment(self, x) -> np.ndarray:
        """``E[X 1{X >= x}]``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        d, p = self.dist, self.params
        if d == "rademacher":
            s = p[0]
            return np.where(x <= -s, 0.0, np.where(x <= s, 0.5 * s, 0.0))
        if d == "normal":
            mu, sd = p
            z = (x - mu) / sd
            return mu * stats.norm.sf(z) + sd * stats.norm.pdf(z)
        if d == "exponential_centered":
            b = p[0]
            xc = np.maximum(x, -b)
            return (xc + b) * np.exp(-(xc + b) / b)
        f = self.frozen
        return np.array([integrate.quad(lambda v: v * f.pdf(v), xi, np.inf)[0] for xi in x])


# --------------------------------------------------------------------------
# specs

KINDS = ("ar1_regime", "linear_static", "narrative", "hetero_rigobon", "multiplicative",
         "ica_box_muller", "ica_rotation", "mte_iv")

_DEFAULTS: dict[str, dict[str, Any]] = {
    "ar1_regime": {"rho0": 0.5, "rho1": 0.5, "tau": 1.0, "sigma_nu": 1.0, "sigma_xi": 1.0,
                   "y0": 0.0},
    "linear_static": {"theta": [1.0], "sigma_u": 1.0, "x_law": {"dist": "normal"}},
    "narrative": {"c1": 0.5, "c2": 0.5, "x_law": {"dist": "uniform", "low": -1.0, "high": 1.0},
                  "g": "identity", "sigma_eps": 1.0, "misclassification": 0.0},
    "hetero_rigobon": {"d_probs": {"0": 0.5, "1": 0.5}, "sigma": {"0": 1.0, "1": 2.0},
                       "r_law": {"dist": "normal"}, "x_laws": None,
                       "psi": ["identity", {"poly": [0, 2]}], "gamma": None,
                       "u_law": {"dist": "normal"}, "u_dim": None},
    "ica_box_muller": {},
    "ica_rotation": {"mixing": [[1.0, 1.0], [1.0, -1.0]],
                     "sources": [{"dist": "normal"}, {"dist": "normal"}],
                     "gamma1": "identity", "gamma2": "cube"},
    "mte_iv": {"z_law": {"dist": "bernoulli", "p": 0.5}, "intercept": 0.0, "first_stage": 1.0,
               "v_law": {"dist": "normal"}, "psi": "identity", "v_coef": 1.0, "xv_coef": 0.0,
               "sigma_eps": 1.0},
}
_DEFAULTS["multiplicative"] = dict(_DEFAULTS["hetero_rigobon"],
                                   psi=None, gamma=[{"fn": "identity", "u": 0},
                                                    {"fn": "identity", "u": [0, 1],
                                                     "coef": [1.0, 1.0]}])


@dataclass
class DgpSpec:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidSpec(f"unknown kind {self.kind!r}; known: {list(KINDS)}")
        unknown = set(self.params) - set(_DEFAULTS[self.kind])
        if unknown:
            raise InvalidSpec(f"unknown parameters for {self.kind}: {sorted(unknown)}")
        merged = json.loads(json.dumps(_DEFAULTS[self.kind]))
        merged.update(self.params)
        self.params = merged
        _validate(self)

    def to_json(self) -> str:
        return json.dumps({"kind": self.kind, "params": self.params}, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "DgpSpec":
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as e:
            raise InvalidSpec(f"spec is not valid JSON: {e}") from None
        if not isinstance(obj, dict) or "kind" not in obj:
            raise InvalidSpec("spec must be an object with a 'kind'")
        return DgpSpec(obj["kind"], obj.get("params", {}))


def _validate(spec: DgpSpec):
    p = spec.params
    k = spec.kind
    if k == "ar1_regime":
        for r in ("rho0", "rho1"):
            if not abs(float(p[r])) < 1:
                raise InvalidSpec(f"{r} must lie in (-1, 1)")
        if float(p["sigma_nu"]) < 0 or float(p["sigma_xi"]) < 0:
            raise InvalidSpec("scales must be nonnegative")
    elif k == "linear_static":
        if not p["theta"]:
            raise InvalidSpec("theta must be non-empty")
        Law.from_spec(p["x_law"])
    elif k == "narrative":
        if not (float(p["c1"]) > 0 and float(p["c2"]) > 0):
            raise InvalidSpec("thresholds must be positive")
        if not 0 <= float(p["misclassification"]) < 1:
            raise InvalidSpec("misclassification must lie in [0, 1)")
        Law.from_spec(p["x_law"])
        make_fn(p["g"])
    elif k in ("hetero_rigobon", "multiplicative"):
        probs = {float(d): float(q) for d, q in p["d_probs"].items()}
        if len(probs) < 2 or any(q <= 0 for q in probs.values()) or \
                not math.isclose(sum(probs.values()), 1.0, rel_tol=0, abs_tol=1e-9):
            raise InvalidSpec("d_probs must give at least two positive probabilities summing to 1")
        if p.get("x_laws"):
            if set(map(float, p["x_laws"])) != set(probs):
                raise InvalidSpec("x_laws must have one law per regime")
            for law in p["x_laws"].values():
                Law.from_spec(law)
        else:
            if set(map(float, p["sigma"])) != set(probs):
                raise InvalidSpec("sigma must have one entry per regime")
            if any(float(s) <= 0 for s in p["sigma"].values()):
                raise InvalidSpec("sigma values must be positive")
            Law.from_spec(p["r_law"])
        Law.from_spec(p["u_law"])
        if k == "hetero_rigobon":
            if not p["psi"]:
                raise InvalidSpec("psi must list at least one outcome map")
            for f in p["psi"]:
                make_fn(f)
        _gamma_specs(p)
    elif k == "ica_rotation":
        A = np.asarray(p["mixing"], dtype=float)
        if A.shape != (2, 2) or abs(np.linalg.det(A)) < 1e-12:
            raise InvalidSpec("mixing must be an invertible 2x2 matrix")
        if len(p["sources"]) != 2:
            raise InvalidSpec("need two source laws")
        for s in p["sources"]:
            Law.from_spec(s)
        make_fn(p["gamma1"])
        make_fn(p["gamma2"])
    elif k == "mte_iv":
        Law.from_spec(p["z_law"])
        Law.from_spec(p["v_law"])
        make_fn(p["psi"])


def _gamma_specs(p):
    """Normalize gamma entries to ``(fn, indices, coefs)`` triples.

    An entry is a function spec (applied to the outcome's own component),
    ``{"fn": f, "u": i}`` or ``{"fn": f, "u": [i, k], "coef": [a, b]}``
    (``f`` applied to ``a u_i + b u_k``).  Returns ``(triples, u_dim)``.
    """
    n_out = len(p["psi"]) if p.get("psi") else len(p.get("gamma") or [])
    gam = p.get("gamma")
    if gam is None:
        gam = ["identity"] * n_out
    if len(gam) != n_out or n_out == 0:
        raise InvalidSpec("gamma must have one entry per outcome")
    out = []
    for j, g in enumerate(gam):
        if isinstance(g, dict) and "u" in g:
            idx = g["u"] if isinstance(g["u"], list) else [g["u"]]
            idx = [int(i) for i in idx]
            coefs = [float(c) for c in g.get("coef", [1.0] * len(idx))]
            if len(coefs) != len(idx) or min(idx) < 0:
                raise InvalidSpec(f"bad gamma entry {g!r}")
            fn = g.get("fn", "identity")
        else:
            fn, idx, coefs = g, [j], [1.0]
        make_fn(fn)
        out.append((fn, idx, coefs))
    used = max(max(t[1]) for t in out) + 1
    u_dim = int(p.get("u_dim") or used)
    if used > u_dim:
        raise InvalidSpec("gamma refers to more shock components than u_dim")
    return out, u_dim


# --------------------------------------------------------------------------
# draws


@dataclass
class DrawSet:
    observed: Dataset
    latent: Dataset
    seed: int
    spec: DgpSpec


def _regimes(p):
    keys = sorted(p["d_probs"], key=float)
    vals = np.array([float(k) for k in keys])
    probs = np.array([float(p["d_probs"][k]) for k in keys])
    return keys, vals, probs


def _draw_latent(spec: DgpSpec, n: int, seed: int) -> Dataset:
    p = spec.params
    root = RngStream(seed, 0)
    s = [root.child(j) for j in range(8)]
    k = spec.kind
    if k == "ar1_regime":
        eps = s[0].normal(n)
        nu = s[1].normal(n) * float(p["sigma_nu"])
        xi = s[2].normal(n) * float(p["sigma_xi"])
        idx = np.empty(n)
        idx[0] = s[3].normal() * math.sqrt(1.0 + float(p["sigma_xi"]) ** 2)
        idx[1:] = eps[:-1] + xi[:-1]
        return Dataset({"eps": eps, "nu": nu, "xi": xi, "state_index": idx})
    if k == "linear_static":
        cols = {"x": Law.from_spec(p["x_law"]).sample(s[0], n)}
        for j in range(len(p["theta"])):
            cols[f"u{j + 1}"] = s[1].child(j).normal(n) * float(p["sigma_u"])
        return Dataset(cols)
    if k == "narrative":
        x = Law.from_spec(p["x_law"]).sample(s[0], n)
        eps = s[1].normal(n) * float(p["sigma_eps"])
        keep = (s[2].uniform(n) >= float(p["misclassification"])).astype(float)
        return Dataset({"x": x, "eps": eps, "keep": keep})
    if k in ("hetero_rigobon", "multiplicative"):
        keys, vals, probs = _regimes(p)
        u = s[0].uniform(n)
        d = vals[np.searchsorted(np.cumsum(probs)[:-1], u, side="right")]
        cols = {"d": d}
        if p.get("x_laws"):
            x = np.empty(n)
            for j, key in enumerate(keys):
                sel = d == vals[j]
                x[sel] = Law.from_spec(p["x_laws"][key]).sample(s[1].child(j), n)[sel]
            cols["x"] = x
        else:
            r = Law.from_spec(p["r_law"]).sample(s[1], n)
            sig = np.array([float(p["sigma"][key]) for key in keys])
            cols["r"] = r
            cols["x"] = sig[np.searchsorted(vals, d)] * r
        _, u_dim = _gamma_specs(p)
        ulaw = Law.from_spec(p["u_law"])
        for j in range(u_dim):
            cols[f"u{j + 1}"] = ulaw.sample(s[2].child(j), n)
        return Dataset(cols)
    if k == "ica_box_muller":
        u1 = s[0].uniform(n)
        u2 = s[1].uniform(n)
        x = np.log(-2.0 * np.log(u1))
        uu = np.log(np.cos(2.0 * np.pi * u2) ** 2)
        return Dataset({"u1": u1, "u2": u2, "x": x, "u": uu})
    if k == "ica_rotation":
        a = Law.from_spec(p["sources"][0]).sample(s[0], n)
        b = Law.from_spec(p["sources"][1]).sample(s[1], n)
        return Dataset({"s1": a, "s2": b})
    if k == "mte_iv":
        z = Law.from_spec(p["z_law"]).sample(s[0], n)
        v = Law.from_spec(p["v_law"]).sample(s[1], n)
        eps = s[2].normal(n) * float(p["sigma_eps"])
        return Dataset({"z": z, "v": v, "eps": eps})
    raise InvalidSpec(k)


def structural_outcomes(spec: DgpSpec, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Outcomes ``psi(x, u)`` for the heteroskedasticity kinds.

    ``u`` has shape (n, u_dim).  Returns shape (n, n_outcomes).
    """
    p = spec.params
    gams, _ = _gamma_specs(p)
    cols = []
    for j, (fn, idx, coefs) in enumerate(gams):
        comb = sum(c * u[:, i] for c, i in zip(coefs, idx))
        gval = make_fn(fn)(comb)
        if spec.kind == "hetero_rigobon":
            cols.append(make_fn(p["psi"][j])(x) + gval)
        else:
            cols.append(x * gval)
    return np.column_stack(cols)


def u_matrix(latent: Dataset) -> np.ndarray:
    names = sorted((c for c in latent.columns if c.startswith("u") and c[1:].isdigit()),
                   key=lambda c: int(c[1:]))
    return np.column_stack([latent[c] for c in names])


def observe(spec: DgpSpec, latent: Dataset) -> Dataset:
    """Observed columns as a pure function of the latent ones."""
    p = spec.params
    k = spec.kind
    if k == "ar1_regime":
        eps, nu = latent["eps"], latent["nu"]
        st = (latent["state_index"] <= 0).astype(float)
        rho = np.where(st == 1.0, float(p["rho1"]), float(p["rho0"]))
        tau = float(p["tau"])
        y = np.empty_like(eps)
        prev = float(p["y0"])
        for t in range(eps.shape[0]):
            prev = rho[t] * prev + tau * eps[t] + nu[t]
            y[t] = prev
        return Dataset({"y": y, "x": eps.copy(), "s": st})
    if k == "linear_static":
        x = latent["x"]
        cols = {"x": x.copy()}
        for j, th in enumerate(p["theta"]):
            cols[f"y{j + 1}"] = float(th) * x + latent[f"u{j + 1}"]
        return Dataset(cols)
    if k == "narrative":
        x = latent["x"]
        z = ((x >= float(p["c2"])).astype(float) - (x <= -float(p["c1"])).astype(float)) * latent["keep"]
        y = make_fn(p["g"])(x) + latent["eps"]
        return Dataset({"z": z, "y": y})
    if k in ("hetero_rigobon", "multiplicative"):
        Y = structural_outcomes(spec, latent["x"], u_matrix(latent))
        cols = {"d": latent["d"].copy()}
        for j in range(Y.shape[1]):
            cols[f"y{j + 1}"] = Y[:, j]
        return Dataset(cols)
    if k == "ica_box_muller":
        x, u = latent["x"], latent["u"]
        return Dataset({"y1": x + u, "y2": x + np.log1p(-np.exp(u))})
    if k == "ica_rotation":
        A = np.asarray(p["mixing"], dtype=float)
        a, b = latent["s1"], latent["s2"]
        return Dataset({"y1": make_fn(p["gamma1"])(A[0, 0] * a + A[0, 1] * b),
                        "y2": make_fn(p["gamma2"])(A[1, 0] * a + A[1, 1] * b)})
    if k == "mte_iv":
        z, v, eps = latent["z"], latent["v"], latent["eps"]
        x = float(p["intercept"]) + float(p["first_stage"]) * z + v
        y = mte_structural(spec, x, v) + eps
        return Dataset({"z": z.copy(), "x": x, "y": y})
    raise InvalidSpec(k)


def mte_structural(spec: DgpSpec, x, v):
    p = spec.params
    return make_fn(p["psi"])(x) + float(p["v_coef"]) * v + float(p["xv_coef"]) * x * v


def generate(spec: DgpSpec, n: int, seed: int) -> DrawSet:
    """Draw ``n`` observations.  Same ``(spec, n, seed)`` gives identical data."""
    if not isinstance(spec, DgpSpec):
        raise InvalidSpec("spec must be a DgpSpec")
    if int(n) < 1:
        raise InvalidSpec("n must be positive")
    latent = _draw_latent(spec, int(n), int(seed))
    return DrawSet(observe(spec, latent), latent, int(seed), spec)
