"""Empirical total variation of the sampler against uniform on the solution set.

At N draws and S solutions the sampling noise alone gives TV around
sqrt(S / (2 pi N)), so the support size decides what TV is reachable.

    python3 scripts/sampling_tv.py --draws 10000 --family 7,3,3,5 --seeds 1,4,7
"""
import argparse
import json
import math
import random
import time
from collections import Counter

from lllcount.coupling import decision_tree_sampling
from lllcount.generate import gen_cnf
from lllcount.lll import find_marking
from lllcount.oracle import enumerate_sat, exact_sample
from lllcount.pipeline import approx_sample


def tv(counts, support):
    total = sum(counts.values())
    u = 1 / len(support)
    return 0.5 * (sum(abs(counts.get(a, 0) / total - u) for a in support)
                  + sum(c for a, c in counts.items() if a not in support) / total)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--family", default="7,3,3,5", help="n,k_min,k_max,d")
    ap.add_argument("--seeds", default="1,4,7,10,11")
    ap.add_argument("--draws", type=int, default=10_000)
    ap.add_argument("--method", choices=["pipeline", "tree", "exact"], default="pipeline")
    args = ap.parse_args()
    n, k_min, k_max, d = map(int, args.family.split(","))
    out = []
    for s in map(int, args.seeds.split(",")):
        phi = gen_cnf(n, k_min, k_max, d, seed=s)
        support = set(enumerate_sat(phi))
        rng = random.Random(s)
        t0 = time.time()
        if args.method == "pipeline":
            draws = (approx_sample(phi, rng=rng) for _ in range(args.draws))
        elif args.method == "tree":
            marking = find_marking(phi, rng=random.Random(s))
            draws = (decision_tree_sampling(phi, min(marking), marking, rng=rng) for _ in range(args.draws))
        else:
            draws = (exact_sample(phi, rng) for _ in range(args.draws))
        counts = Counter(draws)
        out.append({"seed": s, "support": len(support), "tv": tv(counts, support),
                    "noise_floor": math.sqrt(len(support) / (2 * math.pi * args.draws)),
                    "seconds": round(time.time() - t0, 1)})
    print(json.dumps(out, indent=1))


if __name__ == "__main__":
    main()
