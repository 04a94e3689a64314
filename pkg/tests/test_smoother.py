import numpy as np
import pytest

from treedlm.smoother import (
    DegenerateFitError,
    bspline_basis,
    cubic_knots,
    curvature_penalty,
    fit_pairwise_smoother,
    fit_smoother,
)
from treedlm.trees import LagPanel


def test_linear_relationship_reproduced():
    rng = np.random.default_rng(0)
    x = rng.normal(size=2000)
    fit = fit_smoother(x, 2 * x)
    grid = np.linspace(x.min(), x.max(), 101)
    np.testing.assert_allclose(fit.predict(grid), 2 * grid, atol=1e-6)


def test_effective_degrees_of_freedom():
    rng = np.random.default_rng(1)
    x = rng.uniform(-2, 2, 3000)
    y = np.sin(2 * x) + rng.normal(0, 0.3, x.size)
    fit = fit_smoother(x, y)
    B = bspline_basis(x, fit.knots)
    S = curvature_penalty(fit.knots)
    # trace of the hat matrix B (B'B + lam S)^-1 B'
    H = B @ np.linalg.solve(B.T @ B + fit.lam * S, B.T)
    assert abs(np.trace(H) - 5.0) <= 0.1
    assert abs(fit.edf - 5.0) <= 0.1


def test_matches_brute_force_penalized_solve():
    rng = np.random.default_rng(2)
    x = rng.gamma(2.0, size=500)
    y = np.log1p(x) + rng.normal(0, 0.2, x.size)
    fit = fit_smoother(x, y)
    from scipy.interpolate import BSpline
    from scipy.integrate import simpson

    # penalty by Simpson's rule on each knot span (exact for the quadratic integrand)
    nb = fit.knots.size - 4
    d2 = BSpline(fit.knots, np.eye(nb), 3).derivative(2)
    S = np.zeros((nb, nb))
    for a, b in zip(fit.knots[:-1], fit.knots[1:]):
        if b > a:
            pts = np.linspace(a, b, 3)
            D = d2(pts)
            S += simpson(D[:, :, None] * D[:, None, :], x=pts, axis=0)
    B = BSpline(fit.knots, np.eye(nb), 3)(x)
    coef = np.linalg.lstsq(B.T @ B + fit.lam * S, B.T @ y, rcond=None)[0]
    q = np.quantile(x, [0.25, 0.75])
    np.testing.assert_allclose(fit.predict(q), BSpline(fit.knots, coef, 3)(q), atol=1e-8)


def test_penalty_is_exact_for_piecewise_linear_second_derivative():
    knots = cubic_knots(np.linspace(0, 1, 101), 3)
    S = curvature_penalty(knots)
    assert np.allclose(S, S.T)
    # linear functions lie in the null space
    from scipy.interpolate import BSpline

    nb = knots.size - 4
    grev = np.array([knots[j + 1 : j + 4].mean() for j in range(nb)])
    assert abs(grev @ S @ grev) < 1e-10
    assert np.linalg.eigvalsh(S).min() > -1e-10


def test_clamped_extrapolation_and_finite_mean():
    rng = np.random.default_rng(3)
    x = rng.normal(size=400)
    fit = fit_smoother(x, x**2)
    assert np.isfinite(fit.predict(x.mean()))
    assert fit.predict(x.max() + 10) == pytest.approx(fit.predict(x.max()))
    assert fit.predict(x.min() - 10) == pytest.approx(fit.predict(x.min()))


def test_degenerate_inputs():
    with pytest.raises(DegenerateFitError):
        fit_smoother(np.ones(50), np.arange(50.0))
    with pytest.raises(ValueError):
        fit_smoother(np.arange(5.0), np.arange(4.0))
    rng = np.random.default_rng(4)
    panel = LagPanel(rng.normal(size=(30, 2, 3)), np.ones((30, 1)), rng.normal(size=30))
    with pytest.raises(ValueError):
        fit_pairwise_smoother(panel, 1, 1)


def test_pairwise_smoother_pools_lags():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(300, 2, 6))
    x[:, 1] = 0.5 * x[:, 0] + 0.1 * rng.normal(size=(300, 6))
    panel = LagPanel(x, np.ones((300, 1)), rng.normal(size=300))
    fit = fit_pairwise_smoother(panel, 0, 1)
    assert (fit.predictor, fit.response) == (0, 1)
    direct = fit_smoother(x[:, 0].ravel(), x[:, 1].ravel())
    np.testing.assert_allclose(fit.coef, direct.coef)
    assert fit.predict(1.0) == pytest.approx(0.5, abs=0.05)
