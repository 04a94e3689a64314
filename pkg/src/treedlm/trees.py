"""Time-splitting trees, tree pairs and the deterministic algebra around them.

Lags are 1-based throughout: a tree over ``T`` lags partitions ``{1..T}``.
An internal node with split ``s`` sends lags ``<= s`` of its interval to the
left child and lags ``> s`` to the right child.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from math import comb
from typing import Iterator, Literal

import numpy as np

Family = Literal["gaussian", "bernoulli"]
InteractionMode = Literal["full", "no_self", "additive"]

INTERACTION_MODES = ("full", "no_self", "additive")


class StructureError(ValueError):
    """A tree or ensemble violates its structural invariants."""


@dataclass(frozen=True)
class Node:
    """One node of a time-splitting tree, covering lags ``lo..hi``."""

    lo: int
    hi: int
    split: int | None = None
    left: Node | None = None
    right: Node | None = None

    @property
    def is_leaf(self) -> bool:
        return self.split is None

    @property
    def width(self) -> int:
        return self.hi - self.lo + 1

    def split_at(self, s: int) -> Node:
        """Return this interval split at ``s`` into two terminal children."""
        return Node(self.lo, self.hi, s, Node(self.lo, s), Node(s + 1, self.hi))


def _check_node(node: Node) -> None:
    if node.lo > node.hi:
        raise StructureError(f"empty interval ({node.lo}, {node.hi})")
    if node.split is None:
        if node.left is not None or node.right is not None:
            raise StructureError("terminal node with children")
        return
    if node.left is None or node.right is None:
        raise StructureError("internal node missing a child")
    if not node.lo <= node.split < node.hi:
        raise StructureError(
            f"split {node.split} leaves an empty child in ({node.lo}, {node.hi})"
        )
    if (node.left.lo, node.left.hi) != (node.lo, node.split):
        raise StructureError("left child interval does not match split")
    if (node.right.lo, node.right.hi) != (node.split + 1, node.hi):
        raise StructureError("right child interval does not match split")
    _check_node(node.left)
    _check_node(node.right)


def _leaves(node: Node) -> Iterator[Node]:
    if node.is_leaf:
        yield node
    else:
        yield from _leaves(node.left)
        yield from _leaves(node.right)


def walk(node: Node, depth: int = 0, path: tuple[int, ...] = ()) -> Iterator[tuple[Node, int, tuple[int, ...]]]:
    """Pre-order traversal yielding ``(node, depth, path)``; path entries are 0=left, 1=right."""
    yield node, depth, path
    if not node.is_leaf:
        yield from walk(node.left, depth + 1, path + (0,))
        yield from walk(node.right, depth + 1, path + (1,))


def replace_subtree(node: Node, path: tuple[int, ...], new: Node) -> Node:
    if not path:
        return new
    if path[0] == 0:
        return replace(node, left=replace_subtree(node.left, path[1:], new))
    return replace(node, right=replace_subtree(node.right, path[1:], new))


@dataclass(frozen=True, eq=False)
class TimeSplitTree:
    """Binary tree partitioning lags ``1..T`` with one effect per terminal node."""

    root: Node
    T: int
    effects: np.ndarray = field(default=None)

    def __post_init__(self):
        if (self.root.lo, self.root.hi) != (1, self.T):
            raise StructureError(f"root must cover (1, {self.T}), got ({self.root.lo}, {self.root.hi})")
        _check_node(self.root)
        object.__setattr__(self, "_intervals", [(n.lo, n.hi) for n in _leaves(self.root)])
        self._set_effects(self.effects)

    def _set_effects(self, effects) -> None:
        nleaf = len(self._intervals)
        eff = np.zeros(nleaf) if effects is None else np.asarray(effects, dtype=float).ravel()
        if eff.shape != (nleaf,):
            raise StructureError(f"{nleaf} terminal nodes but {eff.size} effects")
        object.__setattr__(self, "effects", eff)

    @classmethod
    def leaf(cls, T: int, effect: float = 0.0) -> TimeSplitTree:
        return cls(Node(1, T), T, np.array([effect]))

    @property
    def n_terminal(self) -> int:
        return self.effects.size

    @property
    def depth(self) -> int:
        return max(d for n, d, _ in walk(self.root) if n.is_leaf)

    def intervals(self) -> list[tuple[int, int]]:
        return list(self._intervals)

    def with_effects(self, effects) -> TimeSplitTree:
        # same (already validated) structure: skip the structural checks
        new = object.__new__(TimeSplitTree)
        object.__setattr__(new, "root", self.root)
        object.__setattr__(new, "T", self.T)
        object.__setattr__(new, "_intervals", self._intervals)
        new._set_effects(effects)
        return new

    def with_root(self, root: Node, effects=None) -> TimeSplitTree:
        return TimeSplitTree(root, self.T, effects)

    def key(self) -> str:
        """Canonical string of the split structure (effects ignored)."""

        def rec(n: Node) -> str:
            return "." if n.is_leaf else f"({rec(n.left)}{n.split}{rec(n.right)})"

        return rec(self.root)

    def lag_values(self) -> np.ndarray:
        """Effect at every lag, as a length-T vector (index t-1)."""
        out = np.empty(self.T)
        for (lo, hi), d in zip(self.intervals(), self.effects):
            out[lo - 1 : hi] = d
        return out

    def leaf_index(self) -> np.ndarray:
        """Terminal-node index of every lag (index t-1)."""
        out = np.empty(self.T, dtype=int)
        for b, (lo, hi) in enumerate(self.intervals()):
            out[lo - 1 : hi] = b
        return out


def terminal_intervals(tree: TimeSplitTree) -> list[tuple[int, int]]:
    """Contiguous lag intervals of the terminal nodes, left to right."""
    _check_node(tree.root)
    return tree.intervals()


def _check_lag(t: int, T: int) -> None:
    if not 1 <= t <= T:
        raise ValueError(f"lag {t} outside 1..{T}")


def eval_tree(tree: TimeSplitTree, t: int) -> float:
    _check_lag(t, tree.T)
    node, b = tree.root, 0
    while not node.is_leaf:
        if t <= node.split:
            node = node.left
        else:
            b += sum(1 for _ in _leaves(node.left))
            node = node.right
    return float(tree.effects[b])


@dataclass(frozen=True, eq=False)
class TreePair:
    """Two trees applied to exposures ``s1``/``s2`` plus their interaction table.

    ``tree2 is None`` denotes a lone tree, which is how the single-exposure
    model stores its ensemble. Exposure indices are 0-based in code.
    """

    tree1: TimeSplitTree
    s1: int
    tree2: TimeSplitTree | None = None
    s2: int | None = None
    interaction_effects: np.ndarray | None = None
    interaction_mode: InteractionMode = "full"

    def __post_init__(self):
        if self.interaction_mode not in INTERACTION_MODES:
            raise ValueError(f"unknown interaction mode {self.interaction_mode!r}")
        if self.tree2 is None:
            if self.s2 is not None:
                raise StructureError("lone tree cannot carry a second exposure")
            object.__setattr__(self, "interaction_effects", np.zeros((self.tree1.n_terminal, 0)))
            return
        if self.tree2.T != self.tree1.T:
            raise StructureError("trees in a pair must share T")
        shape = (self.tree1.n_terminal, self.tree2.n_terminal)
        if self.interaction_effects is None or not self.has_interaction:
            table = np.zeros(shape)
        else:
            table = np.asarray(self.interaction_effects, dtype=float)
        if table.shape != shape:
            raise StructureError(f"interaction table {table.shape} does not match trees {shape}")
        object.__setattr__(self, "interaction_effects", table)

    @property
    def T(self) -> int:
        return self.tree1.T

    @property
    def has_interaction(self) -> bool:
        if self.tree2 is None or self.interaction_mode == "additive":
            return False
        return not (self.interaction_mode == "no_self" and self.s1 == self.s2)

    @property
    def n_interaction_cells(self) -> int:
        return self.tree1.n_terminal * self.tree2.n_terminal if self.has_interaction else 0

    def trees(self) -> list[tuple[TimeSplitTree, int]]:
        out = [(self.tree1, self.s1)]
        if self.tree2 is not None:
            out.append((self.tree2, self.s2))
        return out


def eval_pair_interaction(pair: TreePair, t1: int, t2: int) -> float:
    _check_lag(t1, pair.T)
    _check_lag(t2, pair.T)
    if not pair.has_interaction:
        return 0.0
    b1 = pair.tree1.leaf_index()[t1 - 1]
    b2 = pair.tree2.leaf_index()[t2 - 1]
    return float(pair.interaction_effects[b1, b2])


@dataclass(eq=False)
class TreePairEnsemble:
    pairs: list[TreePair]
    M: int

    def __post_init__(self):
        if not self.pairs:
            raise StructureError("ensemble needs at least one pair")
        Ts = {p.T for p in self.pairs}
        if len(Ts) != 1:
            raise StructureError(f"pairs disagree on T: {sorted(Ts)}")
        for p in self.pairs:
            for _, s in p.trees():
                if not 0 <= s < self.M:
                    raise StructureError(f"exposure index {s} outside 0..{self.M - 1}")

    @property
    def A(self) -> int:
        return len(self.pairs)

    @property
    def T(self) -> int:
        return self.pairs[0].T


@dataclass
class LagEffects:
    """Main effects ``main[m, t]`` and interactions ``interactions[m1, m2, t1, t2]``.

    Only ``m1 <= m2`` slices of ``interactions`` are populated; ``None`` means
    the model carries no interaction terms at all.
    """

    main: np.ndarray
    interactions: np.ndarray | None = None


def reconstruct_effects(ensemble: TreePairEnsemble) -> LagEffects:
    M, T = ensemble.M, ensemble.T
    main = np.zeros((M, T))
    inter = None
    for p in ensemble.pairs:
        for tree, s in p.trees():
            main[s] += tree.lag_values()
        if p.has_interaction:
            if inter is None:
                inter = np.zeros((M, M, T, T))
            cells = p.interaction_effects[np.ix_(p.tree1.leaf_index(), p.tree2.leaf_index())]
            if p.s1 <= p.s2:
                inter[p.s1, p.s2] += cells
            else:
                inter[p.s2, p.s1] += cells.T
    if inter is None and any(p.tree2 is not None and p.interaction_mode != "additive" for p in ensemble.pairs):
        inter = np.zeros((M, M, T, T))
    return LagEffects(main, inter)


@dataclass(eq=False)
class LagPanel:
    """Exposures ``(n, M, T)``, covariates ``(n, p)`` and outcome ``(n,)``."""

    exposures: np.ndarray
    covariates: np.ndarray
    outcome: np.ndarray
    family: Family = "gaussian"
    exposure_names: list[str] | None = None

    def __post_init__(self):
        self.exposures = np.asarray(self.exposures, dtype=float)
        self.covariates = np.asarray(self.covariates, dtype=float)
        self.outcome = np.asarray(self.outcome, dtype=float)
        if self.exposures.ndim != 3:
            raise ValueError("exposures must be an (n, M, T) array")
        n, M, T = self.exposures.shape
        if n < 1 or M < 1 or T < 2:
            raise ValueError(f"need n >= 1, M >= 1, T >= 2; got n={n}, M={M}, T={T}")
        if not np.all(np.isfinite(self.exposures)):
            raise ValueError("exposures contain missing or non-finite values")
        if self.covariates.ndim == 1:
            self.covariates = self.covariates[:, None]
        if self.covariates.shape[0] != n or self.outcome.shape != (n,):
            raise ValueError("covariates/outcome rows do not match exposures")
        if not (np.all(np.isfinite(self.covariates)) and np.all(np.isfinite(self.outcome))):
            raise ValueError("covariates or outcome contain non-finite values")
        if self.family not in ("gaussian", "bernoulli"):
            raise ValueError(f"unknown family {self.family!r}")
        if self.family == "bernoulli" and not np.all(np.isin(self.outcome, (0.0, 1.0))):
            raise ValueError("bernoulli outcome must be 0/1")
        if self.exposure_names is None:
            self.exposure_names = [f"x{m + 1}" for m in range(M)]
        if len(self.exposure_names) != M:
            raise ValueError("exposure_names length does not match M")
        if self.covariates.shape[1] and np.linalg.matrix_rank(self.covariates) < self.covariates.shape[1]:
            warnings.warn("covariate matrix is rank deficient", RuntimeWarning, stacklevel=2)

    @property
    def n(self) -> int:
        return self.exposures.shape[0]

    @property
    def M(self) -> int:
        return self.exposures.shape[1]

    @property
    def T(self) -> int:
        return self.exposures.shape[2]

    def cumulative(self) -> np.ndarray:
        """``(M, n, T+1)`` running sums over lags with a leading zero column."""
        c = np.zeros((self.M, self.n, self.T + 1))
        np.cumsum(self.exposures.transpose(1, 0, 2), axis=2, out=c[:, :, 1:])
        return c


def interval_sums(cum_m: np.ndarray, intervals: list[tuple[int, int]]) -> np.ndarray:
    """``(n, B)`` exposure totals over each lag interval, from one exposure's running sums."""
    lo = np.array([a for a, _ in intervals])
    hi = np.array([b for _, b in intervals])
    return cum_m[:, hi] - cum_m[:, lo - 1]


def pair_design(pair: TreePair, cum: np.ndarray) -> np.ndarray:
    """Columns whose product with :func:`pair_coefficients` gives the pair's linear predictor."""
    x1 = interval_sums(cum[pair.s1], pair.tree1._intervals)
    if pair.tree2 is None:
        return x1
    x2 = interval_sums(cum[pair.s2], pair.tree2._intervals)
    if not pair.has_interaction:
        return np.hstack([x1, x2])
    n = x1.shape[0]
    xi = (x1[:, :, None] * x2[:, None, :]).reshape(n, -1)
    return np.hstack([x1, x2, xi])


def pair_coefficients(pair: TreePair) -> np.ndarray:
    parts = [pair.tree1.effects]
    if pair.tree2 is not None:
        parts.append(pair.tree2.effects)
        if pair.has_interaction:
            parts.append(pair.interaction_effects.ravel())
    return np.concatenate(parts)


def predict(ensemble: TreePairEnsemble, panel: LagPanel, gamma) -> np.ndarray:
    """Linear predictor of the lagged mixture regression, accumulated per terminal node."""
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (panel.covariates.shape[1],):
        raise ValueError(f"gamma has shape {gamma.shape}, expected ({panel.covariates.shape[1]},)")
    if (panel.M, panel.T) != (ensemble.M, ensemble.T):
        raise ValueError("panel dimensions do not match ensemble")
    cum = panel.cumulative()
    eta = panel.covariates @ gamma
    for p in ensemble.pairs:
        eta = eta + pair_design(p, cum) @ pair_coefficients(p)
    return eta


def exposure_terms(effects: LagEffects, x: np.ndarray) -> np.ndarray:
    """Exposure part of the linear predictor for exposure histories ``x`` of shape (..., M, T)."""
    x = np.asarray(x, dtype=float)
    out = np.einsum("...mt,mt->...", x, effects.main)
    if effects.interactions is not None:
        M = effects.main.shape[0]
        for m1 in range(M):
            for m2 in range(m1, M):
                out = out + np.einsum("...t,tu,...u->...", x[..., m1, :], effects.interactions[m1, m2], x[..., m2, :])
    return out


def param_count(M: int, T: int) -> int:
    """Number of coefficients in the full lagged mixture model with pairwise interactions."""
    if M < 1 or T < 1:
        raise ValueError("M and T must be positive")
    return M * T + comb(M + 1, 2) * T * T
