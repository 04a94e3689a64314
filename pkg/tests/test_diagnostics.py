import numpy as np
import pytest

from treedlm.diagnostics import autocovariance, ess, split_rhat, summarize_chains


def _ar1(rho, n, chains, rng):
    x = np.empty((chains, n))
    x[:, 0] = rng.normal(size=chains) / np.sqrt(1 - rho**2)
    for t in range(1, n):
        x[:, t] = rho * x[:, t - 1] + rng.normal(size=chains)
    return x


def test_autocovariance_matches_direct_sum():
    rng = np.random.default_rng(0)
    x = rng.normal(size=50)
    xc = x - x.mean()
    direct = np.array([xc[: 50 - k] @ xc[k:] / 50 for k in range(50)])
    np.testing.assert_allclose(autocovariance(x), direct, atol=1e-12)


def test_ess_of_independent_draws_near_n():
    x = np.random.default_rng(1).normal(size=(4, 2000))
    assert 0.85 * 8000 < ess(x) < 1.15 * 8000


def test_ess_of_ar1_matches_theory():
    rho = 0.8
    x = _ar1(rho, 20_000, 4, np.random.default_rng(2))
    theory = x.size * (1 - rho) / (1 + rho)
    assert abs(ess(x) / theory - 1) < 0.15


def test_rhat_near_one_for_mixed_chains_and_large_when_stuck():
    rng = np.random.default_rng(3)
    assert abs(split_rhat(rng.normal(size=(4, 1000))) - 1) < 0.01
    stuck = rng.normal(size=(4, 1000)) + np.arange(4)[:, None] * 3
    assert split_rhat(stuck) > 1.5
    trend = np.linspace(0, 10, 1000) + rng.normal(size=1000)
    assert split_rhat(trend) > 1.5


def test_summary_rows_and_errors():
    rows = summarize_chains({"a": np.random.default_rng(4).normal(size=(2, 100)), "b": np.ones((2, 100))})
    assert [r["parameter"] for r in rows] == ["a", "b"]
    assert np.isfinite(rows[0]["ess"]) and np.isnan(rows[1]["ess"]) and np.isnan(rows[1]["rhat"])
    with pytest.raises(ValueError):
        ess(np.ones(3))
    with pytest.raises(ValueError):
        split_rhat(np.ones((1, 2, 3)))
