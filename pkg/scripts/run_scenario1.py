"""Scenario 1: binary outcome, one exposure with an 8-lag window.

    python3 scripts/run_scenario1.py --replicates 25 --n 2000 --T 20
"""

import argparse
import json
import time

from treedlm.priors import TreePriorConfig
from treedlm.sampler import SamplerConfig
from treedlm.simulate import run_benchmark


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--replicates", type=int, default=25)
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--T", type=int, default=20)
    ap.add_argument("--pbar", type=float, default=0.5)
    ap.add_argument("--A", type=int, default=20)
    ap.add_argument("--iterations", type=int, default=6000)
    ap.add_argument("--burn-in", type=int, default=2000)
    ap.add_argument("--thin", type=int, default=5)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--json", help="write per-replicate records here")
    a = ap.parse_args()

    cfg = SamplerConfig(A=a.A, mode="tdlm", iterations=a.iterations, burn_in=a.burn_in, thin=a.thin,
                        tree_prior=TreePriorConfig())
    t0 = time.time()
    res = run_benchmark(1, a.replicates, {"TDLM": cfg}, a.seed, a.n, a.T, 1, pbar=a.pbar, workers=a.workers)
    for row in res.table:
        print(" ".join(f"{k}={v:.4f}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()))
    print(f"elapsed {time.time() - t0:.0f}s")
    if a.json:
        with open(a.json, "w") as f:
            json.dump(res.records, f, indent=1, default=float)


if __name__ == "__main__":
    main()
