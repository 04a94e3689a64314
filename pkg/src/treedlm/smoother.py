"""Penalized cubic regression splines used to carry co-exposures along with one exposure."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BSpline
from scipy.optimize import brentq

from .trees import LagPanel


class DegenerateFitError(ValueError):
    pass


def cubic_knots(x: np.ndarray, n_interior: int) -> np.ndarray:
    lo, hi = float(np.min(x)), float(np.max(x))
    inner = np.unique(np.quantile(x, np.linspace(0, 1, n_interior + 2)[1:-1]))
    inner = inner[(inner > lo) & (inner < hi)]
    return np.concatenate([[lo] * 4, inner, [hi] * 4])


def bspline_basis(x: np.ndarray, knots: np.ndarray) -> np.ndarray:
    return BSpline.design_matrix(np.asarray(x, dtype=float), knots, 3).toarray()


def curvature_penalty(knots: np.ndarray) -> np.ndarray:
    """``S[j, k] = integral of B_j''(x) B_k''(x) dx``; exact since B'' is piecewise linear."""
    nb = knots.size - 4
    d2 = BSpline(knots, np.eye(nb), 3).derivative(2)
    g, gw = np.polynomial.legendre.leggauss(2)
    S = np.zeros((nb, nb))
    for a, b in zip(knots[:-1], knots[1:]):
        if b <= a:
            continue
        pts = 0.5 * (b - a) * g + 0.5 * (a + b)
        D = d2(pts)
        S += (D.T * (0.5 * (b - a) * gw)) @ D
    return S


@dataclass
class SmootherFit:
    predictor: int
    response: int
    knots: np.ndarray
    coef: np.ndarray
    lam: float
    edf: float
    xrange: tuple[float, float]

    def predict(self, x):
        xc = np.clip(np.asarray(x, dtype=float), *self.xrange)
        return BSpline(self.knots, self.coef, 3)(xc)


def _edf(G: np.ndarray, S: np.ndarray, lam: float) -> float:
    return float(np.trace(np.linalg.solve(G + lam * S, G)))


def fit_smoother(x: np.ndarray, y: np.ndarray, df: float = 5.0, n_interior: int = 8,
                 predictor: int = -1, response: int = -1) -> SmootherFit:
    """Cubic spline of ``y`` on ``x`` whose penalty is tuned to hit ``df`` effective degrees of freedom."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != y.size:
        raise ValueError("x and y differ in length")
    if np.ptp(x) == 0:
        raise DegenerateFitError("predictor is constant")
    knots = cubic_knots(x, n_interior)
    nb = knots.size - 4
    if not 2.0 < df < nb:
        raise DegenerateFitError(f"target df {df} not attainable with {nb} basis functions")
    B = bspline_basis(x, knots)
    G = B.T @ B
    S = curvature_penalty(knots)
    scale = np.trace(G) / np.trace(S)
    f = lambda loglam: _edf(G, S, scale * np.exp(loglam)) - df
    loglam = brentq(f, -40.0, 40.0, xtol=1e-12)
    lam = scale * np.exp(loglam)
    coef = np.linalg.solve(G + lam * S, B.T @ y)
    return SmootherFit(predictor, response, knots, coef, lam, _edf(G, S, lam), (float(x.min()), float(x.max())))


def fit_pairwise_smoother(panel: LagPanel, m: int, m_resp: int, df: float = 5.0, n_interior: int = 8) -> SmootherFit:
    """Smooth exposure ``m_resp`` on exposure ``m`` using every (individual, lag) observation."""
    if m == m_resp:
        raise ValueError("predictor and response exposures must differ")
    x = panel.exposures[:, m, :].ravel()
    y = panel.exposures[:, m_resp, :].ravel()
    return fit_smoother(x, y, df, n_interior, m, m_resp)
