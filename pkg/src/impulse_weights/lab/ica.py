"""Two-dimensional ICA by whitening and a grid search over rotations."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateCovariance
from ..numcore import as_array


@dataclass
class IcaResult:
    angle: float
    unmixing: np.ndarray
    angles: np.ndarray
    profile: np.ndarray
    components: np.ndarray
    whitening: np.ndarray

    def alignment_ratio(self, y1, y2) -> float:
        """Largest off-diagonal to diagonal magnitude of the unmixing matrix
        after expressing it in units of the observed standard deviations.

        Rows are ordered so that each component loads mostly on its own
        observed variable; a value near 0 means the components are the
        observed variables themselves, up to scale.
        """
        sd = np.array([np.std(as_array(y1)), np.std(as_array(y2))])
        W = np.abs(self.unmixing * sd[None, :])
        if W[0, 0] * W[1, 1] < W[0, 1] * W[1, 0]:
            W = W[::-1]
        return float(max(W[0, 1] / W[0, 0], W[1, 0] / W[1, 1]))


def _rotation(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, s], [-s, c]])


def ica2d(y1, y2, grid_step_deg: float = 0.1) -> IcaResult:
    """Whiten ``(y1, y2)`` and pick the rotation maximizing the summed
    absolute excess kurtosis of the two components.

    Angles run over [0, 90) degrees; larger angles only permute or flip
    components.  Ties resolve to the smallest angle, so the result is a
    deterministic function of the inputs.
    """
    Y = np.column_stack([as_array(y1), as_array(y2)])
    Yc = Y - Y.mean(axis=0)
    C = Yc.T @ Yc / Y.shape[0]
    scale = math.sqrt(C[0, 0] * C[1, 1])
    if scale <= 0 or np.linalg.det(C) <= 1e-12 * scale ** 2:
        raise DegenerateCovariance("sample covariance is singular")
    evals, evecs = np.linalg.eigh(C)
    Wh = evecs @ np.diag(evals ** -0.5) @ evecs.T
    Z = Yc @ Wh.T
    z1, z2 = Z[:, 0], Z[:, 1]
    m = np.array([np.mean(z1 ** (4 - k) * z2 ** k) for k in range(5)])
    steps = int(round(90.0 / grid_step_deg))
    deg = np.arange(steps) * grid_step_deg
    th = np.deg2rad(deg)
    c, s = np.cos(th), np.sin(th)
    binom = np.array([1.0, 4.0, 6.0, 4.0, 1.0])

    def fourth(a, b):
        return sum(binom[k] * a ** (4 - k) * b ** k * m[k] for k in range(5))

    profile = np.abs(fourth(c, s) - 3.0) + np.abs(fourth(-s, c) - 3.0)
    best = int(np.argmax(profile))
    W = _rotation(th[best]) @ Wh
    return IcaResult(float(deg[best]), W, deg, profile, Yc @ W.T, Wh)


def excess_kurtosis(v) -> float:
    v = as_array(v)
    c = v - v.mean()
    return float(np.mean(c ** 4) / np.mean(c ** 2) ** 2 - 3.0)


def shock_effect(y1, y2, component):
    """Effect of a recovered shock on ``y2``, normalized to a unit effect on
    ``y1``: ``cov(y2, s) / cov(y1, s)``, with an influence-function SE that
    treats the component as given."""
    a, b, s = as_array(y1), as_array(y2), as_array(component)
    n = a.shape[0]
    ac, bc, sc = a - a.mean(), b - b.mean(), s - s.mean()
    den = float(ac @ sc) / n
    est = float(bc @ sc) / n / den
    psi = (bc - est * ac) * sc / den
    psi = psi - psi.mean()
    return est, float(np.sqrt(np.mean(psi ** 2) / n))


def recovered_effect(y1, y2, grid_step_deg: float = 0.1, groups: int = 20):
    """Effect on ``y2`` of the recovered shock that loads most on ``y1``.

    Returns ``(estimate, se)`` where the SE is a delete-d jackknife over the
    whole pipeline, so it includes the sampling error of the estimated
    rotation.
    """
    from ..amde import jackknife_se

    a, b = as_array(y1), as_array(y2)

    def est(idx):
        r = ica2d(a[idx], b[idx], grid_step_deg)
        c = r.components
        j = int(np.argmax([abs(np.corrcoef(c[:, k], a[idx])[0, 1]) for k in range(2)]))
        return shock_effect(a[idx], b[idx], c[:, j])[0]

    n = a.shape[0]
    return est(np.arange(n)), jackknife_se(est, n, groups)
