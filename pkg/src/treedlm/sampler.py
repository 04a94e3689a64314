"""MCMC for treed distributed lag (mixture) models.

One sweep visits the ensemble in index order. For every unit (a lone tree in
the single-exposure model, a tree pair in the mixture model) it proposes a
structural move per tree, accepts or rejects with the unit's effects
integrated out, then redraws the unit's effects from their Gaussian full
conditional given the partial residual. Variance components, exposure
probabilities, covariate coefficients and the error variance (or, for a
binary outcome, the Polya-Gamma latents) follow.

A binary outcome is handled by Polya-Gamma augmentation: with
``omega_i ~ PG(1, eta_i)`` the working response ``(y_i - 1/2) / omega_i`` is
Gaussian with mean ``eta_i`` and variance ``1 / omega_i``, which leaves the
marginal model exactly logistic.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from math import log

import numpy as np
from scipy.linalg import solve_triangular

from .priors import (
    COVARIATE_PRIOR_SCALE,
    ExposureProbs,
    ScaleStats,
    ShrinkageState,
    TreePriorConfig,
    _inv_gamma,
    tree_log_prior,
    update_exposure_probs,
    update_half_cauchy_scales,
)
from .trees import (
    LagEffects,
    LagPanel,
    Node,
    TimeSplitTree,
    TreePair,
    TreePairEnsemble,
    pair_coefficients,
    pair_design,
    reconstruct_effects,
    replace_subtree,
    walk,
)

log_ = logging.getLogger(__name__)

MODES = ("tdlm", "tdlmm_full", "tdlmm_noself", "tdlmm_additive")
MOVES = ("grow", "prune", "change", "switch")
FREEZABLE = frozenset({"structure", "effects", "scales", "gamma", "sigma2", "eprobs"})

_INTERACTION_MODE = {
    "tdlm": "additive",
    "tdlmm_full": "full",
    "tdlmm_noself": "no_self",
    "tdlmm_additive": "additive",
}


@dataclass(frozen=True)
class SamplerConfig:
    A: int = 20
    mode: str = "tdlmm_full"
    iterations: int = 15_000
    burn_in: int = 5_000
    thin: int = 5
    tree_prior: TreePriorConfig = TreePriorConfig()
    kappa: float = 1.089
    max_terminal_nodes: int | None = None
    move_probabilities: tuple[float, float, float, float] = (0.25, 0.25, 0.25, 0.25)
    c: float = COVARIATE_PRIOR_SCALE
    prior_only: bool = False
    freeze: frozenset = frozenset()

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.A < 1:
            raise ValueError("A must be at least 1")
        if self.thin < 1:
            raise ValueError("thin must be at least 1")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("need 0 <= burn_in < iterations")
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if self.max_terminal_nodes is not None and self.max_terminal_nodes < 1:
            raise ValueError("max_terminal_nodes must be positive")
        mp = np.asarray(self.move_probabilities, dtype=float)
        if mp.shape != (4,) or np.any(mp < 0) or mp.sum() <= 0:
            raise ValueError("move_probabilities must be four nonnegative weights")
        object.__setattr__(self, "freeze", frozenset(self.freeze))
        if not self.freeze <= FREEZABLE:
            raise ValueError(f"unknown freeze entries {sorted(self.freeze - FREEZABLE)}")

    @property
    def n_retained(self) -> int:
        return (self.iterations - self.burn_in) // self.thin

    @property
    def interaction_mode(self) -> str:
        return _INTERACTION_MODE[self.mode]

    @property
    def paired(self) -> bool:
        return self.mode != "tdlm"

    def move_weights(self) -> np.ndarray:
        w = np.asarray(self.move_probabilities, dtype=float).copy()
        if not self.paired:
            # one exposure: switching is a no-op
            w[3] = 0.0
        return w / w.sum()


@dataclass
class SamplerData:
    """Panel-derived constants shared by every update."""

    panel: LagPanel
    cum: np.ndarray
    Z: np.ndarray
    y: np.ndarray

    @classmethod
    def from_panel(cls, panel: LagPanel) -> SamplerData:
        return cls(panel, panel.cumulative(), panel.covariates, panel.outcome)

    @property
    def n(self) -> int:
        return self.y.size


@dataclass
class ChainState:
    ensemble: TreePairEnsemble
    shrinkage: ShrinkageState
    eprobs: ExposureProbs
    gamma: np.ndarray
    latent: np.ndarray
    rng: np.random.Generator
    config: SamplerConfig
    data: SamplerData
    rng_seed: object = None
    iteration: int = 0
    designs: list = field(default_factory=list)
    fits: np.ndarray | None = None
    total_fit: np.ndarray | None = None
    work: tuple | None = None
    accepted: dict = field(default_factory=lambda: {m: 0 for m in MOVES})
    proposed: dict = field(default_factory=lambda: {m: 0 for m in MOVES})

    @property
    def bernoulli(self) -> bool:
        return self.data.panel.family == "bernoulli"

    def working(self) -> tuple[np.ndarray, np.ndarray, float]:
        """Working response, observation weights and error variance."""
        if self.work is not None:
            return self.work
        if self.config.prior_only:
            return np.zeros(self.data.n), np.zeros(self.data.n), self.shrinkage.sigma2
        if self.bernoulli:
            return (self.data.y - 0.5) / self.latent, self.latent, 1.0
        return self.data.y, np.ones(self.data.n), self.shrinkage.sigma2

    def refresh_fits(self, designs: bool = True) -> None:
        if designs:
            self.designs = [pair_design(p, self.data.cum) for p in self.ensemble.pairs]
        self.fits = np.stack([X @ pair_coefficients(p) for X, p in zip(self.designs, self.ensemble.pairs)])
        self.total_fit = self.fits.sum(axis=0)

    def residual(self) -> np.ndarray:
        ystar, _, _ = self.working()
        return ystar - self.data.Z @ self.gamma - self.total_fit


def pair_prior_variances(pair: TreePair, a: int, state: ChainState) -> np.ndarray:
    """Prior variance of every coefficient of one unit, ordered like :func:`pair_design`."""
    sh = state.shrinkage
    base = sh.nu2 * sh.sigma2
    if not state.config.paired:
        return np.full(pair.tree1.n_terminal, sh.tau2[a] * base)
    parts = [np.full(pair.tree1.n_terminal, sh.mu_main2[pair.s1] * base),
             np.full(pair.tree2.n_terminal, sh.mu_main2[pair.s2] * base)]
    if pair.has_interaction:
        m1, m2 = sorted((pair.s1, pair.s2))
        parts.append(np.full(pair.n_interaction_cells, sh.mu_int2[m1, m2] * base))
    return np.concatenate(parts)


def _factor(P: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        log_.warning("singular effect conditional; adding 1e-10 jitter")
        return np.linalg.cholesky(P + 1e-10 * np.eye(P.shape[0]))


def unit_posterior(X, v, r, w, sigma2):
    """Log marginal likelihood (up to structure-free terms) and Gaussian conditional factors.

    Returns ``(lml, L, u)`` where ``L L' = X'WX/sigma2 + diag(1/v)`` and the
    conditional mean of the coefficients is ``L'^{-1} u``.
    """
    XtW = X.T * w
    P = XtW @ X / sigma2
    P[np.diag_indices_from(P)] += 1.0 / v
    L = _factor(P)
    u = solve_triangular(L, XtW @ r / sigma2, lower=True, check_finite=False)
    lml = -0.5 * np.sum(np.log(v)) - np.sum(np.log(np.diag(L))) + 0.5 * (u @ u)
    return lml, L, u


def _draw_coefficients(L, u, rng):
    return solve_triangular(L.T, u + rng.standard_normal(u.size), lower=False, check_finite=False)


def _split_coefficients(pair: TreePair, coef: np.ndarray) -> TreePair:
    b1 = pair.tree1.n_terminal
    t1 = pair.tree1.with_effects(coef[:b1])
    if pair.tree2 is None:
        return replace(pair, tree1=t1)
    b2 = pair.tree2.n_terminal
    t2 = pair.tree2.with_effects(coef[b1 : b1 + b2])
    table = coef[b1 + b2 :].reshape(b1, b2) if pair.has_interaction else None
    return TreePair(t1, pair.s1, t2, pair.s2, table, pair.interaction_mode)


# ---------------------------------------------------------------- proposals


@dataclass
class Proposal:
    kind: str
    slot: tuple[int, int]
    tree: TimeSplitTree | None = None
    exposure: int | None = None
    log_forward: float = 0.0
    log_reverse: float = 0.0
    feasible: bool = True


def _growable(root: Node, max_terminal: int | None) -> list[tuple[Node, tuple]]:
    leaves = [(n, p) for n, _, p in walk(root) if n.is_leaf]
    if max_terminal is not None and len(leaves) >= max_terminal:
        return []
    return [(n, p) for n, p in leaves if n.width >= 2]


def _prunable(root: Node) -> list[tuple[Node, tuple]]:
    return [(n, p) for n, _, p in walk(root) if not n.is_leaf and n.left.is_leaf and n.right.is_leaf]


def _reinterval(node: Node, lo: int, hi: int) -> Node:
    if node.is_leaf:
        return Node(lo, hi)
    return Node(lo, hi, node.split, _reinterval(node.left, lo, node.split), _reinterval(node.right, node.split + 1, hi))


def _split_range(node: Node) -> range:
    """Split values for ``node`` that keep every descendant split valid."""
    lo = max((n.split for n, _, _ in walk(node.left) if not n.is_leaf), default=node.lo - 1) + 1
    hi = min((n.split for n, _, _ in walk(node.right) if not n.is_leaf), default=node.hi) - 1
    return range(max(lo, node.lo), min(hi, node.hi - 1) + 1)


def propose_move(slot: tuple[int, int], state: ChainState, kind: str | None = None) -> Proposal:
    """Draw a structural proposal for tree ``slot = (a, i)``.

    ``log_forward``/``log_reverse`` are the log probabilities of picking this
    particular move within its move type, forward and back; the move-type
    probabilities are constant and cancel.
    """
    rng, cfg = state.rng, state.config
    a, i = slot
    pair = state.ensemble.pairs[a]
    tree, s = pair.trees()[i]
    if kind is None:
        kind = MOVES[rng.choice(4, p=cfg.move_weights())]
    root = tree.root

    if kind == "grow":
        cands = _growable(root, cfg.max_terminal_nodes)
        if not cands:
            return Proposal(kind, slot, feasible=False)
        node, path = cands[rng.integers(len(cands))]
        split = int(rng.integers(node.lo, node.hi))
        new_root = replace_subtree(root, path, node.split_at(split))
        n_prune = len(_prunable(new_root))
        return Proposal(kind, slot, tree.with_root(new_root),
                        log_forward=-log(len(cands)) - log(node.width - 1),
                        log_reverse=-log(n_prune))
    if kind == "prune":
        cands = _prunable(root)
        if not cands:
            return Proposal(kind, slot, feasible=False)
        node, path = cands[rng.integers(len(cands))]
        new_root = replace_subtree(root, path, Node(node.lo, node.hi))
        n_grow = len(_growable(new_root, cfg.max_terminal_nodes))
        return Proposal(kind, slot, tree.with_root(new_root),
                        log_forward=-log(len(cands)),
                        log_reverse=-log(n_grow) - log(node.width - 1))
    if kind == "change":
        cands = [(n, p) for n, _, p in walk(root) if not n.is_leaf]
        if not cands:
            return Proposal(kind, slot, feasible=False)
        node, path = cands[rng.integers(len(cands))]
        choices = [v for v in _split_range(node) if v != node.split]
        if not choices:
            return Proposal(kind, slot, feasible=False)
        split = choices[rng.integers(len(choices))]
        moved = Node(node.lo, node.hi, split,
                     _reinterval(node.left, node.lo, split), _reinterval(node.right, split + 1, node.hi))
        lq = -log(len(cands)) - log(len(choices))
        return Proposal(kind, slot, tree.with_root(replace_subtree(root, path, moved)),
                        log_forward=lq, log_reverse=lq)
    if kind == "switch":
        E = state.eprobs.E
        new = int(rng.choice(E.size, p=E))
        return Proposal(kind, slot, exposure=new, log_forward=log(E[new]), log_reverse=log(E[s]))
    raise ValueError(f"unknown move {kind!r}")


def _apply(pair: TreePair, prop: Proposal) -> TreePair:
    i = prop.slot[1]
    t1, s1, t2, s2 = pair.tree1, pair.s1, pair.tree2, pair.s2
    if prop.kind == "switch":
        if i == 0:
            s1 = prop.exposure
        else:
            s2 = prop.exposure
    else:
        if i == 0:
            t1 = prop.tree
        else:
            t2 = prop.tree
    t1 = t1.with_effects(np.zeros(t1.n_terminal))
    if t2 is not None:
        t2 = t2.with_effects(np.zeros(t2.n_terminal))
    return TreePair(t1, s1, t2, s2, None, pair.interaction_mode)


def log_acceptance_ratio(prop: Proposal, state: ChainState, residual: np.ndarray | None = None, current=None):
    """Log MH ratio of a feasible proposal with the unit's effects integrated out.

    Returns ``(log_ratio, current, proposed, new_pair, X_new)``, where
    ``current``/``proposed`` are :func:`unit_posterior` triples.
    """
    a, i = prop.slot
    pair = state.ensemble.pairs[a]
    _, w, s2 = state.working()
    if residual is None:
        residual = state.residual() + state.fits[a]
    if current is None:
        current = unit_posterior(state.designs[a], pair_prior_variances(pair, a, state), residual, w, s2)
    new_pair = _apply(pair, prop)
    X_new = pair_design(new_pair, state.data.cum)
    proposed = unit_posterior(X_new, pair_prior_variances(new_pair, a, state), residual, w, s2)
    log_ratio = proposed[0] - current[0] + prop.log_reverse - prop.log_forward
    if prop.kind == "switch":
        E = state.eprobs.E
        log_ratio += log(E[prop.exposure]) - log(E[pair.trees()[i][1]])
    else:
        cfg = state.config.tree_prior
        log_ratio += tree_log_prior(prop.tree, cfg) - tree_log_prior(pair.trees()[i][0], cfg)
    return log_ratio, current, proposed, new_pair, X_new


def mh_accept(prop: Proposal, state: ChainState, draw_effects: bool = True,
              residual: np.ndarray | None = None, current=None):
    """Metropolis-Hastings decision for ``prop`` with the unit's effects integrated out.

    Returns ``(accepted, state, posterior)`` where ``posterior`` is the
    ``(lml, L, u)`` triple of whichever structure the unit now has, reusable
    by the caller for the effect draw. ``state`` is updated in place.
    """
    a = prop.slot[0]
    state.proposed[prop.kind] += 1
    if not prop.feasible:
        return False, state, current
    log_ratio, current, proposed, new_pair, X_new = log_acceptance_ratio(prop, state, residual, current)
    if not np.isfinite(log_ratio):
        log_.warning("non-finite acceptance ratio for %s move on slot %s; rejecting", prop.kind, prop.slot)
        return False, state, current
    if log_ratio < 0 and np.log(state.rng.random()) >= log_ratio:
        return False, state, current

    state.accepted[prop.kind] += 1
    state.designs[a] = X_new
    _set_unit(state, a, new_pair, proposed if draw_effects else None)
    return True, state, proposed


def _set_unit(state: ChainState, a: int, pair: TreePair, posterior) -> TreePair:
    if posterior is not None:
        pair = _split_coefficients(pair, _draw_coefficients(posterior[1], posterior[2], state.rng))
    state.ensemble.pairs[a] = pair
    fit = state.designs[a] @ pair_coefficients(pair)
    state.total_fit += fit - state.fits[a]
    state.fits[a] = fit
    return pair


def _update_unit(state: ChainState, a: int, base: np.ndarray | None = None) -> None:
    """MH moves on each tree of unit ``a`` followed by the effect draw."""
    _, w, s2 = state.working()
    if base is None:
        residual = state.residual() + state.fits[a]
    else:
        residual = base - state.total_fit + state.fits[a]
    posterior = None
    if "structure" not in state.config.freeze:
        for i in range(2 if state.config.paired else 1):
            prop = propose_move((a, i), state)
            _, _, posterior = mh_accept(prop, state, draw_effects=False, residual=residual, current=posterior)
    if "effects" in state.config.freeze:
        return
    pair = state.ensemble.pairs[a]
    if posterior is None:
        posterior = unit_posterior(state.designs[a], pair_prior_variances(pair, a, state), residual, w, s2)
    _set_unit(state, a, pair, posterior)


def gibbs_update_effects(state: ChainState) -> ChainState:
    """Redraw every unit's effects from its full conditional, in index order."""
    _, w, s2 = state.working()
    for a, pair in enumerate(state.ensemble.pairs):
        residual = state.residual() + state.fits[a]
        post = unit_posterior(state.designs[a], pair_prior_variances(pair, a, state), residual, w, s2)
        _set_unit(state, a, pair, post)
    return state


# ---------------------------------------------------------------- global updates


def scale_stats(state: ChainState) -> ScaleStats:
    M = state.ensemble.M
    pairs = state.ensemble.pairs
    if not state.config.paired:
        return ScaleStats(np.array([p.tree1.n_terminal for p in pairs], dtype=float),
                          np.array([p.tree1.effects @ p.tree1.effects for p in pairs]))
    mc, ms = np.zeros(M), np.zeros(M)
    ic, iss = np.zeros((M, M)), np.zeros((M, M))
    for p in pairs:
        for tree, s in p.trees():
            mc[s] += tree.n_terminal
            ms[s] += tree.effects @ tree.effects
        if p.has_interaction:
            m1, m2 = sorted((p.s1, p.s2))
            ic[m1, m2] += p.n_interaction_cells
            iss[m1, m2] += np.sum(p.interaction_effects ** 2)
    return ScaleStats(mc, ms, ic, iss)


def exposure_counts(ensemble: TreePairEnsemble) -> np.ndarray:
    counts = np.zeros(ensemble.M, dtype=int)
    for p in ensemble.pairs:
        for _, s in p.trees():
            counts[s] += 1
    return counts


def pair_counts(ensemble: TreePairEnsemble) -> np.ndarray:
    """Upper-triangular counts of units carrying interaction cells for each exposure pair."""
    counts = np.zeros((ensemble.M, ensemble.M), dtype=int)
    for p in ensemble.pairs:
        if p.has_interaction:
            m1, m2 = sorted((p.s1, p.s2))
            counts[m1, m2] += 1
    return counts


def update_scales(state: ChainState) -> ChainState:
    mode = "tdlmm" if state.config.paired else "tdlm"
    state.shrinkage = update_half_cauchy_scales(state.shrinkage, scale_stats(state), mode, state.rng)
    return state


def update_eprobs(state: ChainState) -> ChainState:
    state.eprobs = update_exposure_probs(exposure_counts(state.ensemble), state.eprobs, state.rng)
    return state


def gibbs_update_gamma_sigma(state: ChainState) -> ChainState:
    """Draw covariate coefficients, then (Gaussian family) the error variance."""
    cfg, sh, Z = state.config, state.shrinkage, state.data.Z
    ystar, w, s2 = state.working()
    if "gamma" not in cfg.freeze:
        r = ystar - state.fits.sum(axis=0)
        ZtW = Z.T * w
        P = ZtW @ Z / s2
        P[np.diag_indices_from(P)] += 1.0 / (s2 * sh.c)
        L = _factor(P)
        u = solve_triangular(L, ZtW @ r / s2, lower=True, check_finite=False)
        state.gamma = _draw_coefficients(L, u, state.rng)
    if state.bernoulli or "sigma2" in cfg.freeze:
        return state
    e = state.residual()
    n_obs = 0 if cfg.prior_only else state.data.n
    rss = 0.0 if cfg.prior_only else float(e @ e)
    coef_ss, n_coef = 0.0, 0
    for a, p in enumerate(state.ensemble.pairs):
        coef = pair_coefficients(p)
        v = pair_prior_variances(p, a, state) / sh.sigma2
        coef_ss += float(np.sum(coef ** 2 / v))
        n_coef += coef.size
    shape = 0.5 * (n_obs + n_coef + state.gamma.size + 1)
    rate = 1.0 / sh.aux["sigma2"] + 0.5 * (rss + coef_ss + state.gamma @ state.gamma / sh.c)
    sh.sigma2 = float(_inv_gamma(shape, rate, state.rng))
    if not np.isfinite(sh.sigma2) or sh.sigma2 <= 0:
        raise FloatingPointError(f"error variance draw is {sh.sigma2}")
    sh.aux["sigma2"] = float(_inv_gamma(1.0, 1.0 + 1.0 / sh.sigma2, state.rng))
    return state


def update_binary_latents(state: ChainState) -> ChainState:
    """Polya-Gamma draw ``omega_i ~ PG(1, eta_i)`` at the current linear predictor."""
    from polyagamma import random_polyagamma

    if not state.bernoulli:
        raise ValueError("binary latents require a bernoulli panel")
    eta = state.data.Z @ state.gamma + state.fits.sum(axis=0)
    state.latent = np.asarray(random_polyagamma(1.0, eta, random_state=state.rng), dtype=float)
    return state


# ---------------------------------------------------------------- chain driver


def init_state(panel: LagPanel, config: SamplerConfig, seed=0) -> ChainState:
    if config.mode == "tdlm" and panel.M != 1:
        raise ValueError("tdlm mode takes exactly one exposure; use a tdlmm mode for mixtures")
    rng = np.random.default_rng(seed)
    data = SamplerData.from_panel(panel)
    M, T = panel.M, panel.T
    eprobs = ExposureProbs.uniform(M, config.kappa)
    pairs = []
    for _ in range(config.A):
        if config.paired:
            s1, s2 = (int(v) for v in rng.integers(M, size=2))
            pairs.append(TreePair(TimeSplitTree.leaf(T), s1, TimeSplitTree.leaf(T), s2, None, config.interaction_mode))
        else:
            pairs.append(TreePair(TimeSplitTree.leaf(T), 0, interaction_mode="additive"))
    sigma2 = 1.0 if panel.family == "bernoulli" else max(float(np.var(panel.outcome)), 1e-8)
    if config.prior_only:
        sigma2 = 1.0
    state = ChainState(
        ensemble=TreePairEnsemble(pairs, M),
        shrinkage=ShrinkageState.initial(config.A, M, sigma2),
        eprobs=eprobs,
        gamma=np.zeros(panel.covariates.shape[1]),
        latent=np.ones(panel.n),
        rng=rng,
        config=config,
        data=data,
        rng_seed=seed,
    )
    state.shrinkage.c = config.c
    state.refresh_fits()
    if state.bernoulli and not config.prior_only:
        update_binary_latents(state)
    return state


@dataclass
class PosteriorDraws:
    """Thinned post-burn-in draws. Leading axis of every array is the draw index."""

    mode: str
    M: int
    T: int
    exposure_names: list[str]
    main: np.ndarray
    interactions: np.ndarray | None
    gamma: np.ndarray
    sigma2: np.ndarray
    nu2: np.ndarray
    tau2: np.ndarray
    mu_main2: np.ndarray
    mu_int2: np.ndarray
    exposure_counts: np.ndarray
    pair_counts: np.ndarray
    assignments: np.ndarray
    n_terminal: np.ndarray
    depth: np.ndarray
    chain: np.ndarray
    acceptance: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.main.shape[0]

    def effects(self, d: int) -> LagEffects:
        return LagEffects(self.main[d], None if self.interactions is None else self.interactions[d])

    @property
    def has_interactions(self) -> bool:
        return self.interactions is not None

    @classmethod
    def concatenate(cls, parts: list[PosteriorDraws]) -> PosteriorDraws:
        first = parts[0]
        out = {}
        for name in ("main", "interactions", "gamma", "sigma2", "nu2", "tau2", "mu_main2", "mu_int2",
                     "exposure_counts", "pair_counts", "assignments", "n_terminal", "depth", "chain"):
            vals = [getattr(p, name) for p in parts]
            out[name] = None if vals[0] is None else np.concatenate(vals)
        acc = {}
        for p in parts:
            for k, v in p.acceptance.items():
                acc[k] = acc.get(k, 0.0) + v / len(parts)
        return cls(first.mode, first.M, first.T, first.exposure_names, acceptance=acc, **out)


class _Recorder:
    def __init__(self, state: ChainState, n: int):
        cfg, ens = state.config, state.ensemble
        M, T, A = ens.M, ens.T, cfg.A
        slots = 2 * A if cfg.paired else A
        self.interactions = cfg.interaction_mode != "additive"
        self.arr = {
            "main": np.zeros((n, M, T)),
            "interactions": np.zeros((n, M, M, T, T)) if self.interactions else None,
            "gamma": np.zeros((n, state.gamma.size)),
            "sigma2": np.zeros(n),
            "nu2": np.zeros(n),
            "tau2": np.zeros((n, A)),
            "mu_main2": np.zeros((n, M)),
            "mu_int2": np.zeros((n, M, M)),
            "exposure_counts": np.zeros((n, M), dtype=int),
            "pair_counts": np.zeros((n, M, M), dtype=int),
            "assignments": np.zeros((n, slots), dtype=int),
            "n_terminal": np.zeros((n, slots), dtype=int),
            "depth": np.zeros((n, slots), dtype=int),
        }
        self.k = 0

    def record(self, state: ChainState) -> None:
        k, arr, ens, sh = self.k, self.arr, state.ensemble, state.shrinkage
        eff = reconstruct_effects(ens)
        arr["main"][k] = eff.main
        if self.interactions and eff.interactions is not None:
            arr["interactions"][k] = eff.interactions
        arr["gamma"][k] = state.gamma
        arr["sigma2"][k] = sh.sigma2
        arr["nu2"][k] = sh.nu2
        arr["tau2"][k] = sh.tau2
        arr["mu_main2"][k] = sh.mu_main2
        arr["mu_int2"][k] = sh.mu_int2
        arr["exposure_counts"][k] = exposure_counts(ens)
        arr["pair_counts"][k] = pair_counts(ens)
        trees = [ts for p in ens.pairs for ts in p.trees()]
        arr["assignments"][k] = [s for _, s in trees]
        arr["n_terminal"][k] = [t.n_terminal for t, _ in trees]
        arr["depth"][k] = [t.depth for t, _ in trees]
        self.k += 1


def sweep(state: ChainState) -> ChainState:
    cfg = state.config
    # latents, sigma2 and gamma are fixed while the units move
    state.work = state.working()
    base = state.work[0] - state.data.Z @ state.gamma
    try:
        for a in range(cfg.A):
            _update_unit(state, a, base)
    finally:
        state.work = None
    state.refresh_fits(designs=False)
    if "scales" not in cfg.freeze:
        update_scales(state)
    if cfg.paired and "eprobs" not in cfg.freeze:
        update_eprobs(state)
    gibbs_update_gamma_sigma(state)
    if state.bernoulli and not cfg.prior_only:
        update_binary_latents(state)
    state.iteration += 1
    return state


def run_chain(panel: LagPanel, config: SamplerConfig, seed=0, state: ChainState | None = None,
              chain_id: int = 0, progress: bool = False) -> PosteriorDraws:
    """Run one chain; identical ``seed`` gives bit-identical draws."""
    if state is None:
        state = init_state(panel, config, seed)
    rec = _Recorder(state, config.n_retained)
    for it in range(1, config.iterations + 1):
        try:
            sweep(state)
        except (FloatingPointError, np.linalg.LinAlgError) as exc:
            raise FloatingPointError(f"iteration {it}: {exc}") from exc
        if it > config.burn_in and (it - config.burn_in) % config.thin == 0:
            rec.record(state)
        if progress and it % 1000 == 0:
            log_.info("iteration %d/%d", it, config.iterations)
    acc = {m: state.accepted[m] / state.proposed[m] if state.proposed[m] else float("nan") for m in MOVES}
    return PosteriorDraws(
        config.mode, panel.M, panel.T, list(panel.exposure_names),
        chain=np.full(config.n_retained, chain_id), acceptance=acc, **rec.arr,
    )


def _run_one(args):
    panel, config, seed, k = args
    return run_chain(panel, config, seed, chain_id=k)


def chain_seeds(seed: int, chains: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(chains)


def run_chains(panel: LagPanel, config: SamplerConfig, seed: int = 0, chains: int = 1,
               threads: int = 1) -> PosteriorDraws:
    """Independent chains concatenated in chain order; results do not depend on ``threads``."""
    seeds = chain_seeds(seed, chains)
    jobs = [(panel, config, s, k) for k, s in enumerate(seeds)]
    if threads > 1 and chains > 1:
        with ProcessPoolExecutor(max_workers=min(threads, chains)) as ex:
            parts = list(ex.map(_run_one, jobs))
    else:
        parts = [_run_one(j) for j in jobs]
    return PosteriorDraws.concatenate(parts)
