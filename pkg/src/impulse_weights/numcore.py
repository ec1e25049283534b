"""Numerical core: regression, kernel smoothing, empirical CDFs and seeded RNG.

Everything here uses the 1/n divisor for sample moments.  Ratios of
covariances do not depend on the divisor, and the weight identities in
:mod:`impulse_weights.weights` are exact only when every moment uses the
same one.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.signal import fftconvolve

from .errors import DegenerateSample, InsufficientData, RankDeficient

RANK_TOL = 1e-10
_SQRT_2PI = math.sqrt(2.0 * math.pi)


# --------------------------------------------------------------------------
# containers


@dataclass(frozen=True)
class Series:
    """A named numeric column."""

    name: str
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    def __len__(self):
        return self.values.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


class Dataset:
    """Ordered collection of equal-length float columns.

    Parameters
    ----------
    columns : mapping of name to array-like
    """

    def __init__(self, columns: Mapping[str, Iterable[float]] | None = None):
        self._cols: dict[str, np.ndarray] = {}
        n = None
        for name, vals in (columns or {}).items():
            arr = np.asarray(vals, dtype=float).reshape(-1)
            if n is not None and arr.shape[0] != n:
                raise ValueError(f"column {name!r} has length {arr.shape[0]}, expected {n}")
            n = arr.shape[0]
            self._cols[str(name)] = arr
        self._n = 0 if n is None else n

    @property
    def n(self) -> int:
        return self._n

    @property
    def columns(self) -> list[str]:
        return list(self._cols)

    def __len__(self):
        return self._n

    def __contains__(self, name):
        return name in self._cols

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self._cols[name]
        except KeyError:
            raise KeyError(f"no column {name!r}; have {self.columns}") from None

    def series(self, name: str) -> Series:
        return Series(name, self[name])

    def select(self, names: Sequence[str]) -> "Dataset":
        return Dataset({k: self[k] for k in names})

    def take(self, rows) -> "Dataset":
        return Dataset({k: v[rows] for k, v in self._cols.items()})

    def with_column(self, name: str, values) -> "Dataset":
        cols = dict(self._cols)
        cols[name] = values
        return Dataset(cols)

    def to_dict(self) -> dict[str, np.ndarray]:
        return dict(self._cols)

    def __eq__(self, other):
        if not isinstance(other, Dataset) or self.columns != other.columns:
            return NotImplemented if not isinstance(other, Dataset) else False
        return all(np.array_equal(self[k], other[k], equal_nan=True) for k in self.columns)

    def __repr__(self):
        return f"Dataset(n={self._n}, columns={self.columns})"


def as_array(x) -> np.ndarray:
    """1-d float view of a Series, Dataset column or array-like."""
    if isinstance(x, Series):
        return x.values
    return np.asarray(x, dtype=float).reshape(-1)


# --------------------------------------------------------------------------
# moments


def mean(x) -> float:
    return float(np.mean(as_array(x)))


def var(x) -> float:
    """Variance with the 1/n divisor."""
    x = as_array(x)
    d = x - x.mean()
    return float(np.dot(d, d) / x.shape[0])


def cov(x, y) -> float:
    """Covariance with the 1/n divisor."""
    x = as_array(x)
    y = as_array(y)
    return float(np.dot(x - x.mean(), y - y.mean()) / x.shape[0])


# --------------------------------------------------------------------------
# least squares


@dataclass
class RegressionFit:
    """Result of :func:`ols`.

    ``coef`` and ``vcov`` follow the column order in ``names``; the intercept,
    when requested, comes first under the name ``"const"``.
    """

    coef: np.ndarray
    vcov: np.ndarray
    resid: np.ndarray
    fitted: np.ndarray
    r2: float
    n: int
    names: list[str]
    se_mode: str = "hc1"
    lags: int | None = None

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.vcov), 0.0, None))

    def __getitem__(self, name: str) -> float:
        return float(self.coef[self.names.index(name)])

    def se_of(self, name: str) -> float:
        return float(self.se[self.names.index(name)])


def newey_west_lags(n: int) -> int:
    """Default HAC truncation lag, floor(0.75 n^(1/3))."""
    return int(math.floor(0.75 * n ** (1.0 / 3.0)))


def _design(X, intercept: bool, names, n_rows: int):
    if X is None:
        X = np.empty((n_rows, 0))
        k = 0
    else:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        k = X.shape[1]
    if names is None:
        names = [f"x{j + 1}" for j in range(k)]
    names = list(names)
    if len(names) != k:
        raise ValueError("names must match the number of regressors")
    if intercept:
        n = X.shape[0]
        X = np.column_stack([np.ones(n), X]) if k else np.ones((n, 1))
        names = ["const"] + names
    return X, names


def ols(y, X=None, *, intercept: bool = True, se: str = "hc1", lags: int | None = None,
        names: Sequence[str] | None = None) -> RegressionFit:
    """Least squares of ``y`` on the columns of ``X``.

    Parameters
    ----------
    y : array-like, shape (n,)
    X : array-like, shape (n, k) or (n,), optional
    intercept : bool
        Prepend a constant column.
    se : {"classical", "hc1", "nw"}
        Covariance estimator.  ``"nw"`` is Newey-West with Bartlett weights.
    lags : int, optional
        HAC truncation lag; defaults to :func:`newey_west_lags`.

    Raises
    ------
    InsufficientData
        If there are no more observations than regressors.
    RankDeficient
        If the smallest singular value of the design is below 1e-10 times
        the largest.
    """
    y = as_array(y)
    Xd, names = _design(X, intercept, names, y.shape[0])
    if Xd.shape[0] != y.shape[0]:
        raise ValueError("y and X have different numbers of rows")
    n, k = Xd.shape
    if k == 0:
        raise ValueError("no regressors")
    if n <= k:
        raise InsufficientData(f"{n} observations for {k} regressors")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(Xd))):
        raise ValueError("non-finite values in regression data")
    sv = np.linalg.svd(Xd, compute_uv=False)
    if sv[0] == 0.0 or sv[-1] < RANK_TOL * sv[0]:
        raise RankDeficient(f"design has condition number {sv[0] / max(sv[-1], 1e-300):.3g}")
    coef, *_ = np.linalg.lstsq(Xd, y, rcond=None)
    fitted = Xd @ coef
    resid = y - fitted
    XtX_inv = np.linalg.inv(Xd.T @ Xd)

    if se == "classical":
        s2 = resid @ resid / (n - k)
        vcov = s2 * XtX_inv
    elif se in ("hc1", "nw"):
        xu = Xd * resid[:, None]
        meat = xu.T @ xu
        if se == "nw":
            lags = newey_west_lags(n) if lags is None else int(lags)
            for lag in range(1, min(lags, n - 1) + 1):
                w = 1.0 - lag / (lags + 1.0)
                g = xu[lag:].T @ xu[:-lag]
                meat += w * (g + g.T)
        else:
            lags = None
        vcov = XtX_inv @ meat @ XtX_inv * (n / (n - k))
    else:
        raise ValueError(f"unknown se mode {se!r}")

    if intercept:
        tss = float(np.sum((y - y.mean()) ** 2))
    else:
        tss = float(y @ y)
    r2 = 0.0 if tss == 0.0 else 1.0 - float(resid @ resid) / tss
    return RegressionFit(coef, vcov, resid, fitted, r2, n, names, se, lags)


def residualize(y, controls=None, *, intercept: bool = True) -> np.ndarray:
    """Residual of ``y`` after projection on ``controls`` (plus a constant)."""
    y = as_array(y)
    if controls is None or np.asarray(controls).size == 0:
        if not intercept:
            return y.copy()
        return y - y.mean()
    return ols(y, controls, intercept=intercept, se="classical").resid


# --------------------------------------------------------------------------
# kernel smoothing


def silverman_bandwidth(x) -> float:
    """1.06 * sd * n^(-1/5), sd with the 1/n divisor."""
    x = as_array(x)
    return 1.06 * math.sqrt(var(x)) * x.shape[0] ** -0.2


# direct summation budget (points x sample) before switching to binned FFT sums
_DIRECT_BUDGET = 4_000_000
_CHUNK = 2_000_000
_GRID_MAX = 1 << 21
_TRUNC = 8.5


def _direct_sums(sample, weights, points, h, orders):
    out = np.zeros((len(orders), weights.shape[0], points.shape[0]))
    step = max(1, _CHUNK // max(1, sample.shape[0]))
    for start in range(0, points.shape[0], step):
        p = points[start:start + step]
        u = (p[:, None] - sample[None, :]) / h
        k = np.exp(-0.5 * u * u) / _SQRT_2PI
        for j, order in enumerate(orders):
            ku = k if order == 0 else k * u ** order
            out[j, :, start:start + step] = weights @ ku.T
    return out


def _binned_sums(sample, weights, points, h, orders):
    lo = min(sample.min(), points.min())
    hi = max(sample.max(), points.max())
    span = hi - lo
    delta = h / 400.0
    if span / delta > _GRID_MAX:
        delta = span / _GRID_MAX
    if delta > h / 25.0:
        return None
    m = int(math.ceil(span / delta)) + 4
    grid0 = lo - 2 * delta
    # linear binning of each weight row
    pos = (sample - grid0) / delta
    left = np.floor(pos).astype(np.int64)
    frac = pos - left
    L = int(math.ceil(_TRUNC * h / delta))
    offs = np.arange(-L, L + 1) * delta / h
    base = np.exp(-0.5 * offs * offs) / _SQRT_2PI
    ppos = (points - grid0) / delta
    pl = np.floor(ppos).astype(np.int64)
    pf = ppos - pl
    out = np.zeros((len(orders), weights.shape[0], points.shape[0]))
    for r in range(weights.shape[0]):
        binned = np.bincount(left, weights=weights[r] * (1.0 - frac), minlength=m + 1)
        binned += np.bincount(left + 1, weights=weights[r] * frac, minlength=m + 1)
        binned = binned[: m + 1]
        for j, order in enumerate(orders):
            # kernel in (point - sample)/h; convolution index runs over point - sample
            kern = base if order == 0 else base * offs ** order
            conv = fftconvolve(binned, kern, mode="full")[L: L + m + 1]
            out[j, r] = _cubic(conv, pl, pf)
    return out


def _cubic(vals, left, frac):
    # 4-point Lagrange interpolation between vals[left] and vals[left + 1]
    top = vals.shape[0] - 1
    i0 = np.clip(left - 1, 0, top)
    i1 = left
    i2 = np.minimum(left + 1, top)
    i3 = np.minimum(left + 2, top)
    t = frac
    return (vals[i0] * (-t * (t - 1) * (t - 2) / 6)
            + vals[i1] * ((t + 1) * (t - 1) * (t - 2) / 2)
            + vals[i2] * (-(t + 1) * t * (t - 2) / 2)
            + vals[i3] * ((t + 1) * t * (t - 1) / 6))


def gaussian_sums(sample, weights, points, h: float, orders=(0,)) -> np.ndarray:
    """Sums ``sum_i w_i u_i^k phi(u_i)`` with ``u_i = (p - x_i) / h``.

    Returns an array of shape (len(orders), n_weight_rows, n_points).
    Small problems are summed directly; large ones use linear binning on a
    grid with spacing h/400 and FFT convolution.
    """
    sample = as_array(sample)
    points = as_array(points)
    weights = np.atleast_2d(np.asarray(weights, dtype=float))
    if sample.shape[0] * points.shape[0] > _DIRECT_BUDGET:
        res = _binned_sums(sample, weights, points, h, orders)
        if res is not None:
            return res
    return _direct_sums(sample, weights, points, h, orders)


@dataclass
class KernelDensity:
    """Gaussian kernel density estimate."""

    sample: np.ndarray
    bandwidth: float
    kernel: str = "gaussian"

    @property
    def n(self) -> int:
        return self.sample.shape[0]

    def _at(self, x, leave_one_out):
        if leave_one_out:
            if x is not None:
                raise ValueError("leave-one-out estimates are only defined at the sample points")
            return self.sample
        return self.sample if x is None else as_array(x)

    def density(self, x=None, *, leave_one_out: bool = False) -> np.ndarray:
        pts = self._at(x, leave_one_out)
        n, h = self.n, self.bandwidth
        s0 = gaussian_sums(self.sample, np.ones(n), pts, h, (0,))[0, 0]
        if leave_one_out:
            if n < 2:
                raise InsufficientData("leave-one-out needs two points")
            return np.maximum(s0 - 1.0 / _SQRT_2PI, 0.0) / ((n - 1) * h)
        # binned sums can undershoot zero by interpolation error far in the tails
        return np.maximum(s0, 0.0) / (n * h)

    def derivative(self, x=None, *, leave_one_out: bool = False) -> np.ndarray:
        pts = self._at(x, leave_one_out)
        n, h = self.n, self.bandwidth
        s1 = gaussian_sums(self.sample, np.ones(n), pts, h, (1,))[0, 0]
        # own kernel has zero slope at its centre
        denom = (n - 1 if leave_one_out else n) * h * h
        return -s1 / denom

    def __call__(self, x):
        return self.density(x)


def kde(sample, bandwidth: float | None = None, kernel: str = "gaussian") -> KernelDensity:
    """Gaussian KDE; Silverman bandwidth when ``bandwidth`` is None.

    Raises
    ------
    DegenerateSample
        Zero sample variance and no bandwidth given.
    """
    if kernel != "gaussian":
        raise ValueError("only the gaussian kernel is implemented")
    x = as_array(sample)
    if x.shape[0] < 2:
        raise InsufficientData("kde needs at least two points")
    if bandwidth is None:
        bandwidth = silverman_bandwidth(x)
        if not bandwidth > 0:
            raise DegenerateSample("sample has zero variance; pass a bandwidth")
    elif not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    return KernelDensity(x.copy(), float(bandwidth), kernel)


def kde_deriv(kd: KernelDensity, points=None, *, leave_one_out: bool = False) -> np.ndarray:
    return kd.derivative(points, leave_one_out=leave_one_out)


def local_linear(x, y, points, bandwidth: float):
    """Local-linear regression with a Gaussian kernel.

    Returns ``(level, slope)`` evaluated at ``points``.
    """
    x = as_array(x)
    y = as_array(y)
    points = as_array(points)
    h = float(bandwidth)
    # d_i = x_i - p = -h u_i
    s = gaussian_sums(x, np.vstack([np.ones_like(x), y]), points, h, (0, 1, 2))
    s0, s1, s2 = s[0, 0], s[1, 0], s[2, 0]
    t0, t1 = s[0, 1], s[1, 1]
    sd, sdd, td = -h * s1, h * h * s2, -h * t1
    det = s0 * sdd - sd * sd
    with np.errstate(invalid="ignore", divide="ignore"):
        slope = (s0 * td - sd * t0) / det
        level = (t0 - slope * sd) / s0
    return level, slope


# --------------------------------------------------------------------------
# empirical CDF


class ECDF:
    """Right-continuous empirical CDF, F(x) = #{X_i <= x} / n."""

    def __init__(self, sample):
        s = np.sort(as_array(sample))
        if s.shape[0] == 0:
            raise InsufficientData("empty sample")
        self.sorted = s
        self.n = s.shape[0]

    def __call__(self, x):
        r = np.searchsorted(self.sorted, x, side="right") / self.n
        return float(r) if np.ndim(r) == 0 else r


def ecdf(sample, x=None):
    """ECDF of ``sample``; evaluated at ``x`` when given."""
    F = ECDF(sample)
    return F if x is None else F(x)


# --------------------------------------------------------------------------
# random numbers


@dataclass(frozen=True)
class RngStream:
    """Reproducible random stream keyed by ``(seed, stream_id)``.

    Streams with different ids are statistically independent; the same key
    always reproduces the same draws.  Backed by numpy's Philox counter-based
    generator seeded through ``SeedSequence`` spawn keys.
    """

    seed: int
    stream_id: int | tuple = 0
    _gen: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        sid = self.stream_id if isinstance(self.stream_id, tuple) else (int(self.stream_id),)
        object.__setattr__(self, "stream_id", sid)
        ss = np.random.SeedSequence(int(self.seed), spawn_key=sid)
        object.__setattr__(self, "_gen", np.random.Generator(np.random.Philox(ss)))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def child(self, k: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id + (int(k),))

    def uniform(self, size=None) -> np.ndarray:
        """Uniform on the open interval (0, 1)."""
        return self._gen.random(size) + 2.0 ** -54

    def normal(self, size=None, loc=0.0, scale=1.0):
        return self._gen.normal(loc, scale, size)

    def bernoulli(self, p, size=None):
        return (self._gen.random(size) < p).astype(float)

    def exponential(self, size=None, scale=1.0):
        return self._gen.exponential(scale, size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)

    def permutation(self, n):
        return self._gen.permutation(n)


def rng_stream(seed: int, stream_id: int | tuple = 0) -> RngStream:
    return RngStream(seed, stream_id)


def thread_limit() -> int:
    """Worker cap from the IW_THREADS environment variable (default 1)."""
    try:
        return max(1, int(os.environ.get("IW_THREADS", "1")))
    except ValueError:
        return 1
