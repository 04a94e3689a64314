"""Hypothesis strategies and random builders for trees, pairs and ensembles."""

import numpy as np
from hypothesis import strategies as st

from treedlm.trees import Node, TimeSplitTree, TreePair, TreePairEnsemble


def random_node(lo, hi, rng, p_split=0.5, depth=0):
    if hi > lo and rng.random() < p_split / (1 + depth) ** 0.5:
        s = int(rng.integers(lo, hi))
        return Node(lo, hi, s, random_node(lo, s, rng, p_split, depth + 1),
                    random_node(s + 1, hi, rng, p_split, depth + 1))
    return Node(lo, hi)


def random_tree(T, rng, p_split=0.6):
    root = random_node(1, T, rng, p_split)
    t = TimeSplitTree(root, T)
    return t.with_effects(rng.standard_normal(t.n_terminal))


def random_pair(T, M, rng, mode="full", lone=False):
    t1 = random_tree(T, rng)
    s1 = int(rng.integers(M))
    if lone:
        return TreePair(t1, s1)
    t2 = random_tree(T, rng)
    s2 = int(rng.integers(M))
    table = rng.standard_normal((t1.n_terminal, t2.n_terminal))
    return TreePair(t1, s1, t2, s2, table, mode)


def random_ensemble(T, M, A, rng, mode="full", lone=False):
    return TreePairEnsemble([random_pair(T, M, rng, mode, lone) for _ in range(A)], M)


@st.composite
def nodes(draw, lo=1, hi=None, max_depth=6, depth=0):
    if hi > lo and depth < max_depth and draw(st.booleans()):
        s = draw(st.integers(lo, hi - 1))
        left = draw(nodes(lo, s, max_depth, depth + 1))
        right = draw(nodes(s + 1, hi, max_depth, depth + 1))
        return Node(lo, hi, s, left, right)
    return Node(lo, hi)


@st.composite
def trees(draw, T=None, max_T=12):
    T = T if T is not None else draw(st.integers(2, max_T))
    root = draw(nodes(1, T))
    t = TimeSplitTree(root, T)
    eff = draw(st.lists(st.floats(-5, 5, allow_nan=False), min_size=t.n_terminal, max_size=t.n_terminal))
    return t.with_effects(eff)


@st.composite
def ensembles(draw, max_M=3, max_T=8, max_A=4, modes=("full", "no_self", "additive")):
    M = draw(st.integers(1, max_M))
    T = draw(st.integers(2, max_T))
    A = draw(st.integers(1, max_A))
    mode = draw(st.sampled_from(modes))
    seed = draw(st.integers(0, 2**32 - 1))
    return random_ensemble(T, M, A, np.random.default_rng(seed), mode)


def fake_draws(main, interactions=None, exposure_counts=None, pair_counts=None, mode=None, gamma=None):
    """PosteriorDraws built directly from arrays, bypassing the sampler."""
    from treedlm.sampler import PosteriorDraws

    main = np.asarray(main, dtype=float)
    D, M, T = main.shape
    if mode is None:
        mode = "tdlm" if M == 1 and interactions is None else ("tdlmm_full" if interactions is not None else "tdlmm_additive")
    if exposure_counts is None:
        exposure_counts = np.ones((D, M), dtype=int)
    if pair_counts is None:
        pair_counts = np.zeros((D, M, M), dtype=int)
    return PosteriorDraws(
        mode, M, T, [f"x{m + 1}" for m in range(M)], main, interactions,
        np.zeros((D, 1)) if gamma is None else gamma, np.ones(D), np.ones(D), np.ones((D, 2)),
        np.ones((D, M)), np.ones((D, M, M)), np.asarray(exposure_counts), np.asarray(pair_counts),
        np.zeros((D, 2), dtype=int), np.ones((D, 2), dtype=int), np.zeros((D, 2), dtype=int), np.zeros(D, dtype=int),
    )
