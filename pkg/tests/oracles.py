"""Loop-based reference implementations, deliberately independent of the vectorized code."""

import numpy as np

from treedlm.trees import eval_pair_interaction, eval_tree


def theta_by_loops(ensemble):
    M, T = ensemble.M, ensemble.T
    main = np.zeros((M, T))
    inter = np.zeros((M, M, T, T))
    for p in ensemble.pairs:
        for tree, s in p.trees():
            for t in range(1, T + 1):
                main[s, t - 1] += eval_tree(tree, t)
        if p.tree2 is None:
            continue
        for t1 in range(1, T + 1):
            for t2 in range(1, T + 1):
                v = eval_pair_interaction(p, t1, t2)
                if p.s1 <= p.s2:
                    inter[p.s1, p.s2, t1 - 1, t2 - 1] += v
                else:
                    inter[p.s2, p.s1, t2 - 1, t1 - 1] += v
    return main, inter


def eq2_predictor(x, z, gamma, main, inter):
    """Outcome mean for every row: main, upper-triangular interaction and covariate terms."""
    n, M, T = x.shape
    out = np.array(z @ gamma, dtype=float)
    for i in range(n):
        acc = 0.0
        for m in range(M):
            for t in range(T):
                acc += x[i, m, t] * main[m, t]
        if inter is not None:
            for m1 in range(M):
                for m2 in range(m1, M):
                    for t1 in range(T):
                        for t2 in range(T):
                            acc += x[i, m1, t1] * x[i, m2, t2] * inter[m1, m2, t1, t2]
        out[i] += acc
    return out


def eq9_marginal(main, inter, m, levels):
    M, T = main.shape
    out = main[m].copy()
    if inter is None:
        return out
    for t in range(T):
        for mp in range(M):
            for tp in range(T):
                if mp <= m:
                    out[t] += levels[mp] * inter[mp, m, tp, t]
                if mp >= m:
                    out[t] += levels[mp] * inter[m, mp, t, tp]
    return out
