"""Posterior summaries: marginal lag curves, windows, inclusion and contrasts."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sampler import PosteriorDraws
from .smoother import SmootherFit
from .trees import LagPanel


class EmptyDrawsError(RuntimeError):
    """Raised when a summary is requested from zero retained draws."""


def _require_draws(draws: PosteriorDraws) -> None:
    if len(draws) == 0:
        raise EmptyDrawsError("no retained posterior draws")


def equal_tailed(samples: np.ndarray, level: float, axis: int = 0) -> tuple[np.ndarray, np.ndarray]:
    if not 0.0 < level < 1.0:
        raise ValueError("credible level must lie in (0, 1)")
    tail = (1.0 - level) / 2.0
    lo, hi = np.quantile(samples, [tail, 1.0 - tail], axis=axis)
    return lo, hi


@dataclass
class MarginalDLM:
    exposure: int
    levels: np.ndarray
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float
    samples: np.ndarray
    scale: float = 1.0

    @property
    def T(self) -> int:
        return self.mean.size


def marginal_draws(draws: PosteriorDraws, m: int, levels) -> np.ndarray:
    """Per-draw marginal lag effect of exposure ``m`` with co-exposures fixed at ``levels``.

    Adds to the main effect the interaction slices in which ``m`` is the
    second index (``m' <= m``, summed over the first lag) and those in which it
    is the first index (``m' >= m``, summed over the second lag). The ``m' = m``
    slice therefore enters twice, once along each lag axis.
    """
    levels = np.asarray(levels, dtype=float)
    if levels.shape != (draws.M,):
        raise ValueError(f"levels must have length {draws.M}")
    out = draws.main[:, m, :].copy()
    if draws.interactions is not None:
        I = draws.interactions
        for mp in range(m + 1):
            out += levels[mp] * I[:, mp, m].sum(axis=1)
        for mp in range(m, draws.M):
            out += levels[mp] * I[:, m, mp].sum(axis=2)
    return out


def marginal_dlm(draws: PosteriorDraws, m: int, levels=None, level: float = 0.95,
                 scale: float = 1.0) -> MarginalDLM:
    """Marginal distributed lag function of exposure ``m``; ``scale`` multiplies every draw (e.g. an IQR)."""
    _require_draws(draws)
    levels = np.zeros(draws.M) if levels is None else np.asarray(levels, dtype=float)
    s = scale * marginal_draws(draws, m, levels)
    lo, hi = equal_tailed(s, level)
    mean = s.mean(axis=0)
    # quantile interpolation can put the mean a hair outside a degenerate interval
    lo, hi = np.minimum(lo, mean), np.maximum(hi, mean)
    return MarginalDLM(m, levels, mean, lo, hi, level, s, scale)


@dataclass
class WindowReport:
    windows: dict[int, list[int]]
    level: float

    def flagged(self, m: int) -> list[int]:
        return self.windows.get(m, [])


def critical_windows(*mdlms: MarginalDLM) -> WindowReport:
    """Lags (1-based) whose credible interval excludes zero, per exposure."""
    win = {}
    for md in mdlms:
        win[md.exposure] = [t + 1 for t in range(md.T) if md.lower[t] > 0 or md.upper[t] < 0]
    return WindowReport(win, mdlms[0].level if mdlms else float("nan"))


@dataclass
class Inclusion:
    main: np.ndarray
    pairs: np.ndarray


def inclusion_probabilities(draws: PosteriorDraws) -> Inclusion:
    """Fraction of draws in which each exposure (pair) occupies at least one tree (tree pair)."""
    if draws.mode == "tdlm":
        raise EmptyDrawsError("inclusion probabilities need mixture-model draws")
    _require_draws(draws)
    main = (draws.exposure_counts > 0).mean(axis=0)
    pairs = (draws.pair_counts > 0).mean(axis=0)
    return Inclusion(main, np.triu(pairs))


@dataclass
class Interval:
    mean: float
    lower: float
    upper: float
    samples: np.ndarray


def _interval(s: np.ndarray, level: float) -> Interval:
    lo, hi = equal_tailed(s, level)
    mean = float(s.mean())
    return Interval(mean, float(min(lo, mean)), float(max(hi, mean)), s)


def cumulative_effect(draws: PosteriorDraws, m: int, contrast: float = 1.0, levels=None,
                      level: float = 0.95) -> Interval:
    """Effect of raising exposure ``m`` by ``contrast`` at every lag simultaneously."""
    _require_draws(draws)
    levels = np.zeros(draws.M) if levels is None else levels
    return _interval(contrast * marginal_draws(draws, m, levels).sum(axis=1), level)


def exposure_contribution(draws: PosteriorDraws, X: np.ndarray) -> np.ndarray:
    """Per-draw exposure part of the linear predictor at one exposure history ``X`` of shape (M, T)."""
    out = np.einsum("dmt,mt->d", draws.main, X)
    if draws.interactions is not None:
        for m1 in range(draws.M):
            for m2 in range(m1, draws.M):
                out += np.einsum("t,dtu,u->d", X[m1], draws.interactions[:, m1, m2], X[m2])
    return out


def coexposure_profiles(panel: LagPanel, m: int, t: int, smoothers: dict[tuple[int, int], SmootherFit],
                        q: tuple[float, float] = (0.25, 0.75)) -> tuple[np.ndarray, np.ndarray]:
    """Exposure histories at the lower/upper quantile of exposure ``m`` at lag ``t``.

    Every lag other than ``t`` sits at the exposure's empirical mean; at lag
    ``t`` exposure ``m`` takes its quantile and each co-exposure the smoother's
    prediction at that quantile.
    """
    x = panel.exposures
    means = x.mean(axis=(0, 2))
    qs = np.quantile(x[:, m, :], q)
    out = []
    for xq in qs:
        X = np.repeat(means[:, None], panel.T, axis=1)
        for mp in range(panel.M):
            if mp == m:
                X[mp, t - 1] = xq
            else:
                fit = smoothers.get((m, mp))
                if fit is None:
                    raise KeyError(f"missing smoother for predictor {m} -> response {mp}")
                X[mp, t - 1] = float(fit.predict(xq))
        out.append(X)
    return out[0], out[1]


def coexposure_adjusted_draws(draws: PosteriorDraws, panel: LagPanel, m: int, t: int,
                              smoothers: dict[tuple[int, int], SmootherFit]) -> np.ndarray:
    lo, hi = coexposure_profiles(panel, m, t, smoothers)
    return exposure_contribution(draws, hi) - exposure_contribution(draws, lo)


def coexposure_adjusted_effect(draws: PosteriorDraws, panel: LagPanel, m: int, t: int,
                               smoothers: dict[tuple[int, int], SmootherFit], level: float = 0.95) -> Interval:
    """Expected outcome change for an interquartile shift in exposure ``m`` at lag ``t``,
    carrying co-exposures along their smoothed relationship with ``m``."""
    _require_draws(draws)
    return _interval(coexposure_adjusted_draws(draws, panel, m, t, smoothers), level)


def fit_all_smoothers(panel: LagPanel, m: int | None = None, df: float = 5.0) -> dict[tuple[int, int], SmootherFit]:
    from .smoother import fit_pairwise_smoother

    preds = range(panel.M) if m is None else [m]
    return {(a, b): fit_pairwise_smoother(panel, a, b, df=df) for a in preds for b in range(panel.M) if a != b}
