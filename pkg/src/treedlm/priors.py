"""Tree-structure prior, half-Cauchy variance components and exposure-assignment prior.

Every half-Cauchy scale ``lam ~ C+(0, 1)`` is sampled through its inverse-gamma
parameter expansion::

    lam^2 | xi ~ IG(1/2, 1/xi),    xi ~ IG(1/2, 1)

so that, given ``k`` effects ``d_j ~ N(0, lam^2 * s)``, the conditionals are
``lam^2 | xi, d ~ IG((k + 1)/2, 1/xi + sum(d^2)/(2 s))`` and
``xi | lam^2 ~ IG(1, 1 + 1/lam^2)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import log

import numpy as np

from .trees import Node, TimeSplitTree, walk

COVARIATE_PRIOR_SCALE = 1e6


@dataclass(frozen=True)
class TreePriorConfig:
    alpha: float = 0.95
    beta: float = 2.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.beta < 0.0:
            raise ValueError("beta must be nonnegative")

    def split_prob(self, depth: int) -> float:
        return self.alpha * (1.0 + depth) ** (-self.beta)


def tree_log_prior(tree: TimeSplitTree | Node, cfg: TreePriorConfig = TreePriorConfig()) -> float:
    """Log prior of a tree's split structure.

    Internal nodes contribute ``log p(d) - log(#valid splits)`` and terminal
    nodes ``log(1 - p(d))`` with ``p(d) = alpha (1 + d)^-beta``. Terminal nodes
    spanning a single lag are charged the same ``1 - p(d)`` factor.
    """
    root = tree.root if isinstance(tree, TimeSplitTree) else tree
    lp = 0.0
    for node, d, _ in walk(root):
        p = cfg.split_prob(d)
        if node.is_leaf:
            lp += log(1.0 - p)
        else:
            lp += log(p) - log(node.width - 1)
    return lp


def sample_tree_prior(T: int, cfg: TreePriorConfig, rng: np.random.Generator, max_tries: int = 100_000) -> Node:
    """Draw a tree structure whose law is proportional to ``exp(tree_log_prior)``.

    Each node attempts a split with probability ``p(depth)``; a single-lag node
    that attempts one invalidates the whole draw, which is then restarted.
    """

    def grow(lo: int, hi: int, d: int) -> Node | None:
        if rng.random() >= cfg.split_prob(d):
            return Node(lo, hi)
        if hi == lo:
            return None
        s = int(rng.integers(lo, hi))
        left = grow(lo, s, d + 1)
        if left is None:
            return None
        right = grow(s + 1, hi, d + 1)
        if right is None:
            return None
        return Node(lo, hi, s, left, right)

    for _ in range(max_tries):
        root = grow(1, T, 0)
        if root is not None:
            return root
    raise RuntimeError("tree prior rejection sampler did not terminate")


def enumerate_trees(lo: int, hi: int) -> list[Node]:
    """All split structures over ``lo..hi`` (grows like the Catalan numbers; keep T small)."""
    out = [Node(lo, hi)]
    for s in range(lo, hi):
        for left in enumerate_trees(lo, s):
            for right in enumerate_trees(s + 1, hi):
                out.append(Node(lo, hi, s, left, right))
    return out


def _inv_gamma(shape, rate, rng):
    shape, rate = np.broadcast_arrays(np.asarray(shape, dtype=float), np.asarray(rate, dtype=float))
    return rate / rng.gamma(shape)


@dataclass
class ShrinkageState:
    """Squared variance components and their expansion auxiliaries.

    ``tau2`` is used by the single-exposure model, ``mu_main2``/``mu_int2`` by
    the mixture model; whichever is unused simply keeps its prior draws.
    """

    tau2: np.ndarray
    mu_main2: np.ndarray
    mu_int2: np.ndarray
    nu2: float = 1.0
    sigma2: float = 1.0
    c: float = COVARIATE_PRIOR_SCALE
    aux: dict = field(default_factory=dict)

    @classmethod
    def initial(cls, A: int, M: int, sigma2: float = 1.0) -> ShrinkageState:
        st = cls(np.ones(A), np.ones(M), np.ones((M, M)), 1.0, sigma2)
        st.aux = {
            "tau2": np.ones(A),
            "mu_main2": np.ones(M),
            "mu_int2": np.ones((M, M)),
            "nu2": 1.0,
            "sigma2": 1.0,
        }
        return st

    def copy(self) -> ShrinkageState:
        return ShrinkageState(
            self.tau2.copy(), self.mu_main2.copy(), self.mu_int2.copy(), self.nu2, self.sigma2, self.c,
            {k: np.copy(v) if isinstance(v, np.ndarray) else v for k, v in self.aux.items()},
        )

    def check(self) -> None:
        vals = [self.tau2, self.mu_main2, self.mu_int2, self.nu2, self.sigma2]
        if not all(np.all(np.asarray(v) > 0) and np.all(np.isfinite(v)) for v in vals):
            raise FloatingPointError("variance components must be finite and positive")
        if not np.allclose(self.mu_int2, self.mu_int2.T):
            raise ValueError("mu_int2 must be symmetric")


def delta_prior_variance(state: ShrinkageState, mode: str, a: int | None = None,
                         exposures: tuple[int, ...] = ()) -> float:
    """Prior variance of one terminal-node effect.

    ``mode='tdlm'`` uses the per-tree scale of tree ``a``; ``mode='tdlmm'``
    uses the exposure scale for one exposure, or the pair scale for two.
    """
    base = state.nu2 * state.sigma2
    if mode == "tdlm":
        if a is None:
            raise ValueError("tdlm context needs a tree index")
        return float(state.tau2[a] * base)
    if mode == "tdlmm":
        if len(exposures) == 1:
            return float(state.mu_main2[exposures[0]] * base)
        if len(exposures) == 2:
            m1, m2 = sorted(exposures)
            return float(state.mu_int2[m1, m2] * base)
    raise ValueError(f"unknown prior context mode={mode!r}, exposures={exposures!r}")


def sample_half_cauchy_sq(count, sumsq, xi, rng):
    """One expansion sweep for independent scales; returns ``(lam2, xi)``.

    ``sumsq`` must already be divided by every other variance factor.
    """
    count = np.asarray(count, dtype=float)
    sumsq = np.asarray(sumsq, dtype=float)
    if not (np.all(np.isfinite(sumsq)) and np.all(np.isfinite(count))):
        raise FloatingPointError("non-finite sufficient statistics for a half-Cauchy scale")
    if np.any(count < 0) or np.any(sumsq < 0):
        raise ValueError("counts and sums of squares must be nonnegative")
    lam2 = _inv_gamma(0.5 * (count + 1.0), 1.0 / xi + 0.5 * sumsq, rng)
    xi = _inv_gamma(1.0, 1.0 + 1.0 / lam2, rng)
    return lam2, xi


@dataclass
class ScaleStats:
    """Raw effect counts and sums of squares grouped by the local scale that governs them.

    Single-exposure model: ``main_*`` are per tree (length A). Mixture model:
    ``main_*`` are per exposure (length M) and ``int_*`` per exposure pair
    (``M x M``, upper triangle).
    """

    main_count: np.ndarray
    main_sumsq: np.ndarray
    int_count: np.ndarray | None = None
    int_sumsq: np.ndarray | None = None


def update_half_cauchy_scales(state: ShrinkageState, stats: ScaleStats, mode: str,
                              rng: np.random.Generator) -> ShrinkageState:
    """Gibbs sweep over local scales then the global scale ``nu``; ``sigma2`` is left alone."""
    st = state.copy()
    s2 = st.sigma2
    if mode == "tdlm":
        st.tau2, st.aux["tau2"] = sample_half_cauchy_sq(
            stats.main_count, stats.main_sumsq / (st.nu2 * s2), st.aux["tau2"], rng)
        k = stats.main_count.sum()
        ss = np.sum(stats.main_sumsq / st.tau2) / s2
    elif mode == "tdlmm":
        st.mu_main2, st.aux["mu_main2"] = sample_half_cauchy_sq(
            stats.main_count, stats.main_sumsq / (st.nu2 * s2), st.aux["mu_main2"], rng)
        M = st.mu_main2.size
        iu = np.triu_indices(M)
        ic = np.zeros((M, M)) if stats.int_count is None else stats.int_count
        iss = np.zeros((M, M)) if stats.int_sumsq is None else stats.int_sumsq
        lam2, xi = sample_half_cauchy_sq(ic[iu], iss[iu] / (st.nu2 * s2), st.aux["mu_int2"][iu], rng)
        mu_int2 = np.zeros((M, M))
        aux = np.zeros((M, M))
        mu_int2[iu], aux[iu] = lam2, xi
        st.mu_int2 = mu_int2 + np.triu(mu_int2, 1).T
        st.aux["mu_int2"] = aux + np.triu(aux, 1).T
        k = stats.main_count.sum() + ic[iu].sum()
        ss = (np.sum(stats.main_sumsq / st.mu_main2) + np.sum(iss[iu] / st.mu_int2[iu])) / s2
    else:
        raise ValueError(f"unknown mode {mode!r}")
    st.nu2, st.aux["nu2"] = (float(v) for v in sample_half_cauchy_sq(k, ss, st.aux["nu2"], rng))
    return st


@dataclass
class ExposureProbs:
    E: np.ndarray
    kappa: float = 1.089

    def __post_init__(self):
        self.E = np.asarray(self.E, dtype=float)
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if np.any(self.E < 0) or abs(self.E.sum() - 1.0) > 1e-12:
            raise ValueError("E must be a probability vector")

    @classmethod
    def uniform(cls, M: int, kappa: float = 1.089) -> ExposureProbs:
        return cls(np.full(M, 1.0 / M), kappa)


def _dirichlet(alpha, rng):
    g = rng.gamma(alpha)
    if g.sum() == 0.0:
        # every component underflowed; fall back to the mode of the limit
        g = (alpha == alpha.max()).astype(float)
    return g / g.sum()


def update_exposure_probs(counts, probs: ExposureProbs, rng: np.random.Generator) -> ExposureProbs:
    counts = np.asarray(counts)
    if counts.shape != probs.E.shape:
        raise ValueError("counts length must equal number of exposures")
    if np.any(counts < 0):
        raise ValueError("counts must be nonnegative")
    E = _dirichlet(probs.kappa + counts.astype(float), rng)
    return ExposureProbs(E / E.sum(), probs.kappa)


def prior_inclusion_probability(M: int, A: int, kappa: float, n_mc: int = 100_000,
                                rng: np.random.Generator | None = None) -> float:
    """Monte Carlo P(a given exposure occupies at least one of the 2A tree slots)."""
    if n_mc < 10_000:
        raise ValueError("n_mc must be at least 10000")
    if M == 1:
        return 1.0
    rng = np.random.default_rng(0) if rng is None else rng
    hits = 0
    done = 0
    while done < n_mc:
        b = min(100_000, n_mc - done)
        E = rng.dirichlet(np.full(M, kappa), size=b)
        counts = rng.multinomial(2 * A, E)
        # every exposure is exchangeable: pool all M indicators
        hits += np.count_nonzero(counts > 0)
        done += b
    return hits / (n_mc * M)


def exact_prior_inclusion_probability(M: int, A: int, kappa: float) -> float:
    """Closed form ``1 - B(kappa, (M-1) kappa + 2A) / B(kappa, (M-1) kappa)``."""
    from scipy.special import betaln

    if M == 1:
        return 1.0
    return float(1.0 - np.exp(betaln(kappa, (M - 1) * kappa + 2 * A) - betaln(kappa, (M - 1) * kappa)))
