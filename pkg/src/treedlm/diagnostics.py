"""Convergence diagnostics: effective sample size and split R-hat."""

from __future__ import annotations

import numpy as np


def _as_chains(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ValueError("expected draws shaped (draws,) or (chains, draws)")
    return x


def _split(x: np.ndarray) -> np.ndarray:
    half = x.shape[1] // 2
    if half < 2:
        raise ValueError("need at least four draws per chain")
    return np.vstack([x[:, :half], x[:, -half:]])


def autocovariance(x: np.ndarray) -> np.ndarray:
    """Biased autocovariance of a single series at every lag, via FFT."""
    n = x.size
    xc = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, size)
    return np.fft.irfft(f * np.conj(f), size)[:n] / n


def split_rhat(x) -> float:
    """Potential scale reduction computed on chains cut in half."""
    c = _split(_as_chains(x))
    n = c.shape[1]
    W = c.var(axis=1, ddof=1).mean()
    B = n * c.mean(axis=1).var(ddof=1)
    if W == 0:
        return 1.0 if B == 0 else float("inf")
    var_plus = (n - 1) / n * W + B / n
    return float(np.sqrt(var_plus / W))


def ess(x) -> float:
    """Multi-chain effective sample size with Geyer's initial monotone sequence truncation."""
    c = _as_chains(x)
    m, n = c.shape
    if n < 4:
        raise ValueError("need at least four draws per chain")
    acov = np.array([autocovariance(ch) for ch in c])
    W = acov[:, 0].mean() * n / (n - 1)
    var_plus = W * (n - 1) / n
    if m > 1:
        var_plus += c.mean(axis=1).var(ddof=1)
    if var_plus == 0:
        return float(m * n)
    rho = 1.0 - (W - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    # sum adjacent pairs while positive, forcing them to be non-increasing
    total = 0.0
    prev = np.inf
    for k in range(0, n - 1, 2):
        pair = rho[k] + rho[k + 1]
        if pair <= 0:
            break
        pair = min(pair, prev)
        total += pair
        prev = pair
    tau = max(2.0 * total - 1.0, 1.0 / np.log10(m * n + 10))
    return float(m * n / tau)


def summarize_chains(params: dict[str, np.ndarray]) -> list[dict]:
    """ESS and split R-hat for each named parameter; values shaped (chains, draws)."""
    rows = []
    for name, x in params.items():
        c = _as_chains(x)
        if np.all(c == c.flat[0]):
            rows.append({"parameter": name, "ess": float("nan"), "rhat": float("nan")})
            continue
        rows.append({"parameter": name, "ess": ess(c), "rhat": split_rhat(c)})
    return rows
