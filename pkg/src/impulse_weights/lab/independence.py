"""Independence and two-sample tests used by the simulation checks."""
from __future__ import annotations

import math
from collections import namedtuple

import numpy as np
from numba import njit
from scipy import special, stats

from ..numcore import RngStream, as_array

KS_C95 = float(stats.kstwobign.ppf(0.95))

# --------------------------------------------------------------------------
# distance covariance, O(n log n) for scalar samples


@njit(cache=True)
def _cross_sum(xs, ys, yrank, m):
    # sum_{i<j} |x_i - x_j| |y_i - y_j| with x already sorted ascending;
    # Fenwick trees over y ranks hold count, sum x, sum y, sum xy
    n = xs.shape[0]
    c = np.zeros(m + 1)
    sx = np.zeros(m + 1)
    sy = np.zeros(m + 1)
    sxy = np.zeros(m + 1)
    tc = 0.0
    tx = 0.0
    ty = 0.0
    txy = 0.0
    total = 0.0
    for i in range(n):
        xi = xs[i]
        yi = ys[i]
        r = yrank[i] + 1
        # prefix over ranks <= r (ties contribute zero either way)
        qc = 0.0
        qx = 0.0
        qy = 0.0
        qxy = 0.0
        k = r
        while k > 0:
            qc += c[k]
            qx += sx[k]
            qy += sy[k]
            qxy += sxy[k]
            k -= k & (-k)
        low = xi * yi * qc - xi * qy - yi * qx + qxy
        hc = tc - qc
        hx = tx - qx
        hy = ty - qy
        hxy = txy - qxy
        high = -(xi * yi * hc - xi * hy - yi * hx + hxy)
        total += low + high
        k = r
        while k <= m:
            c[k] += 1.0
            sx[k] += xi
            sy[k] += yi
            sxy[k] += xi * yi
            k += k & (-k)
        tc += 1.0
        tx += xi
        ty += yi
        txy += xi * yi
    return total


def _row_sums(x):
    # sum_j |x_i - x_j| for every i
    order = np.argsort(x, kind="stable")
    xs = x[order]
    n = x.shape[0]
    csum = np.cumsum(xs)
    k = np.arange(n)
    before = csum - xs
    after = csum[-1] - csum
    rs = xs * k - before + after - xs * (n - 1 - k)
    out = np.empty(n)
    out[order] = rs
    return out


class _DcovPrep:
    def __init__(self, x, y):
        x = as_array(x)
        y = as_array(y)
        self.n = x.shape[0]
        self.x = x - x.mean()
        self.y = y - y.mean()
        self.order = np.argsort(self.x, kind="stable")
        self.xs = self.x[self.order]
        self.ax = _row_sums(self.x)
        self.by = _row_sums(self.y)
        self.yrank = np.unique(self.y, return_inverse=True)[1].reshape(-1).astype(np.int64)
        self.m = int(self.yrank.max()) + 1
        n = self.n
        self.vx = self._v2(self.x, self.ax)
        self.vy = self._v2(self.y, self.by)

    def _v2(self, v, rows):
        n = self.n
        order = np.argsort(v, kind="stable")
        rank = np.unique(v, return_inverse=True)[1].reshape(-1).astype(np.int64)
        s = 2.0 * _cross_sum(v[order], v[order], rank[order], int(rank.max()) + 1)
        tot = rows.sum()
        return s / n ** 2 - 2.0 * float(rows @ rows) / n ** 3 + tot * tot / n ** 4

    def dcov2(self, perm=None):
        n = self.n
        y = self.y if perm is None else self.y[perm]
        yr = self.yrank if perm is None else self.yrank[perm]
        by = self.by if perm is None else self.by[perm]
        s = 2.0 * _cross_sum(self.xs, y[self.order], yr[self.order], self.m)
        return s / n ** 2 - 2.0 * float(self.ax @ by) / n ** 3 + self.ax.sum() * by.sum() / n ** 4

    def dcor(self, perm=None):
        den = math.sqrt(self.vx * self.vy)
        if den <= 0:
            return 0.0
        return math.sqrt(max(self.dcov2(perm), 0.0) / den)


def distance_correlation(x, y) -> float:
    """Sample distance correlation of two scalar samples (V-statistic)."""
    return _DcovPrep(x, y).dcor()


def distance_correlation_naive(x, y) -> float:
    """O(n^2) reference implementation."""
    x = as_array(x)
    y = as_array(y)

    def centred(v):
        d = np.abs(v[:, None] - v[None, :])
        return d - d.mean(axis=0) - d.mean(axis=1)[:, None] + d.mean()

    A, B = centred(x), centred(y)
    v = (A * B).mean()
    den = math.sqrt((A * A).mean() * (B * B).mean())
    return 0.0 if den == 0 else math.sqrt(max(v, 0.0) / den)


DcorTest = namedtuple("DcorTest", ["dcor", "pvalue", "null"])


def dcor_test(x, y, permutations: int = 199, seed: int = 0) -> DcorTest:
    """Permutation test of independence based on distance correlation."""
    prep = _DcovPrep(x, y)
    stat = prep.dcor()
    rs = RngStream(seed, 7)
    null = np.array([prep.dcor(rs.permutation(prep.n)) for _ in range(permutations)])
    p = (1 + np.sum(null >= stat)) / (permutations + 1)
    return DcorTest(stat, float(p), null)


# --------------------------------------------------------------------------
# moment battery

BatteryResult = namedtuple("BatteryResult", [
    "pearson", "pearson_p", "moment_corr", "moment_p", "dcor", "dcor_p", "min_p",
    "reject", "alpha"])


def independence_battery(a, b, permutations: int = 199, seed: int = 0,
                         alpha: float = 0.05) -> BatteryResult:
    """Pearson, power-moment correlations and distance correlation.

    ``moment_corr[p-1, q-1]`` is ``corr(a^p, b^q)`` for standardized ``a``
    and ``b`` and p, q in {1, 2, 3}; its p-values use ``sqrt(n) r ~ N(0, 1)``
    under independence.  The distance correlation p-value comes from a
    seeded permutation test.  ``reject`` applies a Bonferroni bound over the
    ten tests (nine moment pairs plus distance correlation).
    """
    a = as_array(a)
    b = as_array(b)
    n = a.shape[0]
    sa = (a - a.mean()) / a.std()
    sb = (b - b.mean()) / b.std()
    R = np.empty((3, 3))
    for p in range(3):
        for q in range(3):
            R[p, q] = np.corrcoef(sa ** (p + 1), sb ** (q + 1))[0, 1]
    P = 2.0 * special.ndtr(-np.abs(R) * math.sqrt(n))
    dt = dcor_test(a, b, permutations, seed)
    min_p = float(min(P.min(), dt.pvalue))
    reject = bool(min_p * 10 < alpha)
    return BatteryResult(float(R[0, 0]), float(P[0, 0]), R, P, dt.dcor, dt.pvalue, min_p,
                         reject, alpha)


# --------------------------------------------------------------------------
# two-sample tests

KsResult = namedtuple("KsResult", ["statistic", "critical", "passed"])


def ks_two_sample(a, b, level_c: float = KS_C95) -> KsResult:
    """Two-sample KS statistic against the asymptotic 95% critical value."""
    a = as_array(a)
    b = as_array(b)
    d = float(stats.ks_2samp(a, b).statistic)
    crit = level_c * math.sqrt((a.shape[0] + b.shape[0]) / (a.shape[0] * b.shape[0]))
    return KsResult(d, crit, d < crit)


@njit(cache=True)
def _pair_sums(v, order, first):
    # rows of v sorted ascending with original indices in order; first[i]
    # marks sample one.  Per-row sums of |v_i - v_j| over i < j within each
    # sample, in one pass.
    k, N = v.shape
    saa = np.zeros(k)
    sbb = np.zeros(k)
    for r in range(k):
        ca = 0.0
        sa = 0.0
        cb = 0.0
        sb = 0.0
        ta = 0.0
        tb = 0.0
        for j in range(N):
            x = v[r, j]
            if first[order[r, j]]:
                ta += x * ca - sa
                ca += 1.0
                sa += x
            else:
                tb += x * cb - sb
                cb += 1.0
                sb += x
        saa[r] = ta
        sbb[r] = tb
    return saa, sbb


def _all_pairs(v):
    k = np.arange(v.shape[1])[None, :]
    pre = np.cumsum(v, axis=1) - v
    return np.sum(v * k - pre, axis=1)


def _directions(d: int, count: int | None):
    if count is None:
        count = 64 if d == 2 else 256
    if d == 1:
        return np.ones((1, 1))
    if d == 2:
        ang = (np.arange(count) + 0.5) * np.pi / count
        return np.column_stack([np.cos(ang), np.sin(ang)])
    g = RngStream(12345, d).normal((count, d))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _slice_constant(d: int) -> float:
    # E|theta' x| over the unit sphere equals |x| / c_d
    return math.sqrt(math.pi) * math.exp(special.gammaln((d + 1) / 2) - special.gammaln(d / 2))


class _Energy:
    def __init__(self, a, b, directions: int):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if a.ndim == 1:
            a = a[:, None]
        if b.ndim == 1:
            b = b[:, None]
        self.n, self.m = a.shape[0], b.shape[0]
        pooled = np.vstack([a, b])
        d = pooled.shape[1]
        self.theta = _directions(d, directions)
        self.const = 1.0 if d == 1 else _slice_constant(d)
        proj = self.theta @ pooled.T
        self.order = np.argsort(proj, axis=1, kind="stable")
        self.sorted = np.take_along_axis(proj, self.order, axis=1)
        self.labels = np.r_[np.ones(self.n, bool), np.zeros(self.m, bool)]

        self.s_all = _all_pairs(self.sorted)

    def stat(self, labels=None):
        lab = self.labels if labels is None else labels
        n, m = self.n, self.m
        saa, sbb = _pair_sums(self.sorted, self.order, lab)
        sab = self.s_all - saa - sbb
        per_dir = 2 * sab / (n * m) - 2 * saa / n ** 2 - 2 * sbb / m ** 2
        return float(self.const * per_dir.mean())


def energy_distance(a, b, directions: int | None = None) -> float:
    """Energy distance ``2E|A-B| - E|A-A'| - E|B-B'|``.

    Exact for scalar samples.  In two or more dimensions the Euclidean
    distance is written as an average of projected distances over
    directions (equally spaced angles in 2-d, seeded random directions
    above), which keeps the cost at O(n log n) per direction.
    """
    return _Energy(a, b, directions).stat()


def energy_distance_naive(a, b) -> float:
    a = np.atleast_2d(np.asarray(a, dtype=float).T).T
    b = np.atleast_2d(np.asarray(b, dtype=float).T).T

    def md(u, v):
        return np.mean(np.linalg.norm(u[:, None, :] - v[None, :, :], axis=2))

    return 2 * md(a, b) - md(a, a) - md(b, b)


EnergyTest = namedtuple("EnergyTest", ["statistic", "null_q95", "pvalue", "passed", "null"])


def energy_test(a, b, permutations: int = 99, seed: int = 0, directions: int | None = None) -> EnergyTest:
    """Permutation test of equal distributions; passes when the statistic is
    below the 95th percentile of the permutation null."""
    e = _Energy(a, b, directions)
    stat = e.stat()
    rs = RngStream(seed, 11)
    null = np.array([e.stat(e.labels[rs.permutation(e.labels.shape[0])])
                     for _ in range(permutations)])
    q95 = float(np.quantile(null, 0.95))
    p = (1 + np.sum(null >= stat)) / (permutations + 1)
    return EnergyTest(stat, q95, float(p), bool(stat < q95), null)
