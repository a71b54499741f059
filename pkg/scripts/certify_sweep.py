"""Certified-interval sweep over instance families.

For every instance it reports soundness (the interval holds the exact
marginal), the interval width, and how many flip-cap rows the oracle's own
edge masses violate.  When that count is positive the true masses are outside
the LP and certification can fail: that is the regime boundary the sweep is
meant to show (default slack max(8, d^3) at d = 3 is past it).

    python3 scripts/certify_sweep.py --family 9,4,6,2 --family 10,5,6,3,mono --count 10
"""
import argparse
import json
import random
import sys
import time
from fractions import Fraction

from lllcount.certify import CertificationError, CertifyConfig, build_lp, certify_marginal, default_slack
from lllcount.dtree import annotate_probabilities, build_tree, to_one_sided
from lllcount.generate import gen_cnf
from lllcount.lll import find_marking
from lllcount.oracle import exact_marginal


def parse_family(text):
    parts = text.split(",")
    n, k_min, k_max, d = map(int, parts[:4])
    return n, k_min, k_max, d, len(parts) > 4 and parts[4] == "mono"


def cap_violations(phi, x, marking, slack):
    tree = annotate_probabilities(build_tree(phi, x, marking))
    s1, s2, matching = to_one_sided(tree, with_counts=True)
    q = exact_marginal(phi, {}, x)
    lp = build_lp(s1, s2, matching, q, q, slack)
    bad = lp.violations(s1.mass + s2.mass, 0)
    caps = sum(r.label.split()[1] == "cap" for r in lp.rows)
    return sum(" cap " in b for b in bad), caps, tree


def run(family, count, eps, slack):
    n, k_min, k_max, d, mono = family
    rows = []
    for s in range(count):
        phi = gen_cnf(n, k_min, k_max, d, monotone=mono, seed=s)
        marking = find_marking(phi, rng=random.Random(s))
        x = min(marking)
        q = exact_marginal(phi, {}, x)
        sl = Fraction(slack) if slack else default_slack(phi)
        violated, caps, tree = cap_violations(phi, x, marking, sl)
        t0 = time.time()
        try:
            iv = certify_marginal(phi, x, marking, CertifyConfig(grid_eps=eps, slack_s=sl), tree=tree)
            res = {"lo": float(iv.lo), "hi": float(iv.hi), "width": float(iv.hi - iv.lo), "sound": iv.contains(q)}
        except CertificationError as exc:
            res = {"error": str(exc), "sound": False}
        res.update(seed=s, q=float(q), slack=float(sl), cap_rows=caps, caps_violated_by_truth=violated,
                   tree_nodes=len(tree.nodes), seconds=round(time.time() - t0, 2))
        rows.append(res)
        print(json.dumps(res), file=sys.stderr)
    return {
        "family": {"n": n, "k_min": k_min, "k_max": k_max, "d": d, "monotone": mono},
        "sound": sum(r["sound"] for r in rows), "count": count,
        "instances_with_cap_violations": sum(r["caps_violated_by_truth"] > 0 for r in rows),
        "rows": rows,
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--family", action="append", type=parse_family,
                    help="n,k_min,k_max,d[,mono]; repeatable (default 9,4,6,2 and 10,5,6,3,mono)")
    ap.add_argument("--count", type=int, default=10)
    ap.add_argument("--grid-eps", type=Fraction, default=Fraction(1, 100))
    ap.add_argument("--slack-s", type=Fraction, default=None)
    args = ap.parse_args()
    families = args.family or [parse_family("9,4,6,2"), parse_family("10,5,6,3,mono")]
    print(json.dumps([run(f, args.count, args.grid_eps, args.slack_s) for f in families], indent=1))


if __name__ == "__main__":
    main()
