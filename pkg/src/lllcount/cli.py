"""Command-line entry point.  Results go to stdout (or --out) as JSON, diagnostics to stderr.

Exit codes: 0 success, 1 usage or input error, 2 budget exceeded,
3 invariant or certification failure.
"""
from __future__ import annotations

import argparse
import json
import random
import sys
from collections import Counter
from fractions import Fraction

from .certify import CertificationError, CertifyConfig, NumericalFailure, certify_marginal
from .cnf import FormulaError, build_variable_graph, parse_dimacs
from .coupling import LedgerError, max_3tree, run_coupling, tail_report, three_tree_bound
from .dtree import TreeBudgetError, build_tree
from .generate import gen_cnf
from .inference import CauseNetwork, InconsistentObservations, check_regular, posterior_sample
from .lll import (DEFAULT_ALPHA, InfeasibleError, ResampleConfig, ResampleLimitError, find_marking,
                  find_seed_partial)
from .oracle import BudgetError, NullConditionError, count_sat, enumerate_sat, exact_marginal, exact_sample
from .pipeline import (DESK_BETA, ComponentBlowupError, CountConfig, MarginalOracleHandle, OracleError,
                       SampleConfig, WidthRatioError, approx_count, approx_sample)
from .selfcheck import run_selfcheck

EXIT_USAGE, EXIT_BUDGET, EXIT_INVARIANT = 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _frac(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a rational number: {text!r}") from None


def fr(p) -> str:
    p = Fraction(p)
    return f"{p.numerator}/{p.denominator}"


def _read_cnf(path):
    with open(path) as fh:
        return parse_dimacs(fh.read())


def _emit(args, payload):
    text = payload if isinstance(payload, str) else json.dumps(payload, sort_keys=True)
    if getattr(args, "out", None):
        with open(args.out, "w") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")
    else:
        print(text)


def _model(assignment) -> list:
    return [v if b else -v for v, b in enumerate(assignment, 1)]


def _marking(args, phi):
    if getattr(args, "marking", None):
        with open(args.marking) as fh:
            return frozenset(json.load(fh)["marking"])
    pinned = {args.var: True} if getattr(args, "var", None) else None
    return find_marking(phi, args.alpha, ResampleConfig(args.resamples), random.Random(args.seed), pinned=pinned)


def _oracle(args):
    if args.oracle == "exact":
        return MarginalOracleHandle.exact(args.oracle_budget)
    return MarginalOracleHandle.certified(CertifyConfig(grid_eps=args.grid_eps, slack_s=args.slack_s,
                                                        tau=args.tau, node_budget=args.tree_nodes,
                                                        oracle_budget=args.oracle_budget))


def cmd_gen(args):
    phi = gen_cnf(args.n, args.k_min, args.k_max, args.d, args.monotone, args.seed, args.m)
    _emit(args, phi.to_dimacs([f"gen n={args.n} k={args.k_min}..{args.k_max} d={args.d} "
                               f"monotone={int(args.monotone)} seed={args.seed}"]))


def cmd_oracle(args):
    phi = _read_cnf(args.file)
    if args.what == "count":
        _emit(args, str(count_sat(phi, budget=args.oracle_budget)))
    elif args.what == "marginal":
        if args.var is None:
            raise UsageError("oracle marginal needs --var")
        p = exact_marginal(phi, {}, args.var, args.oracle_budget)
        _emit(args, {"var": args.var, "marginal": fr(p), "float": float(p)})
    else:
        rng = random.Random(args.seed)
        _emit(args, {"samples": [_model(exact_sample(phi, rng, budget=args.oracle_budget)) for _ in range(args.num)]})


def cmd_mark(args):
    phi = _read_cnf(args.file)
    marking = find_marking(phi, args.alpha, ResampleConfig(args.resamples), random.Random(args.seed))
    _emit(args, {"marking": sorted(marking), "assignment": {}, "seed": args.seed, "alpha": fr(args.alpha)})


def cmd_seed_partial(args):
    phi = _read_cnf(args.file)
    a = find_seed_partial(phi, beta=args.beta, cfg=ResampleConfig(args.resamples), rng=random.Random(args.seed))
    _emit(args, {"marking": [], "assignment": {str(v): "T" if b else "F" for v, b in sorted(a.items())},
                 "seed": args.seed, "beta": fr(args.beta)})


def cmd_couple_stats(args):
    phi = _read_cnf(args.file)
    marking = _marking(args, phi)
    rng = random.Random(args.seed)
    st = phi.stats()
    runs, sizes = [], []
    for _ in range(args.runs):
        outcome, ledger = run_coupling(phi, args.var, marking, None, args.tau, rng)
        g = build_variable_graph(phi, outcome.v_inner)
        tree = max_3tree(g, args.var)
        runs.append({"v_inner": len(outcome.v_inner), "terminated": outcome.terminated,
                     "type1": len(ledger.type1), "type2": len(ledger.type2), "three_tree": len(tree.vertices),
                     "three_tree_bound": float(three_tree_bound(len(outcome.v_inner), st.d, st.k_min))})
        sizes.append(len(outcome.v_inner))
    _emit(args, {"var": args.var, "runs": runs, "report": tail_report(sizes, st.d, st.k_min)})


def cmd_certify(args):
    phi = _read_cnf(args.file)
    marking = _marking(args, phi)
    cfg = CertifyConfig(grid_eps=args.grid_eps, slack_s=args.slack_s, tau=args.tau, node_budget=args.tree_nodes,
                        oracle_budget=args.oracle_budget, backend=args.backend, scan=args.scan)
    tree = build_tree(phi, args.var, marking, args.tau, args.tree_nodes)
    if args.dump_tree:
        with open(args.dump_tree, "w") as fh:
            fh.write(tree.dumps())
    iv = certify_marginal(phi, args.var, marking, cfg, tree=tree)
    out = iv.to_json()
    out.update(var=args.var, marking=sorted(marking))
    _emit(args, out)


def cmd_count(args):
    phi = _read_cnf(args.file)
    est = approx_count(phi, _oracle(args), CountConfig(beta=args.beta, resample=ResampleConfig(args.resamples),
                                                      seed=args.seed))
    _emit(args, est.to_json())


def _tv_summary(phi, samples):
    support = set(enumerate_sat(phi))
    counts = Counter(tuple(s) for s in samples)
    u = 1 / len(support)
    tv = 0.5 * (sum(abs(counts.get(a, 0) / len(samples) - u) for a in support)
                + sum(c for a, c in counts.items() if a not in support) / len(samples))
    return {"support": len(support), "draws": len(samples), "tv": tv}


def cmd_sample(args):
    phi = _read_cnf(args.file)
    rng = random.Random(args.seed)
    oracle = _oracle(args)
    cfg = SampleConfig(component_cap=args.component_cap, resample=ResampleConfig(args.resamples))
    samples = [approx_sample(phi, oracle, cfg, rng) for _ in range(args.num)]
    out = {"samples": [_model(s) for s in samples]}
    if args.self_check:
        out["self_check"] = _tv_summary(phi, samples)
    _emit(args, out)


def cmd_infer(args):
    with open(args.network) as fh:
        net = CauseNetwork.from_json(fh.read())
    with open(args.observations) as fh:
        obs = tuple(bool(b) for b in json.load(fh))
    regular, report = check_regular(net, obs)
    if not regular:
        print("warning: observations are not regular", file=sys.stderr)
    rng = random.Random(args.seed)
    samples = [posterior_sample(net, obs, _oracle(args), rng=rng) for _ in range(args.num)]
    _emit(args, {"regular": regular, "report": report, "samples": [_model(s) for s in samples]})


def cmd_selfcheck(args):
    results = run_selfcheck(args.seed, args.quick)
    for r in results:
        print(f"{'PASS' if r.ok else 'FAIL'}  {r.name}: {r.detail}", file=sys.stderr)
    _emit(args, {"checks": [r._asdict() for r in results], "ok": all(r.ok for r in results)})
    return 0 if all(r.ok for r in results) else EXIT_INVARIANT


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lllcount", description="Counting and sampling CNF solutions under local-lemma conditions.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, file=True):
        if file:
            sp.add_argument("file", help="DIMACS CNF file")
        sp.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
        sp.add_argument("--out", help="write JSON here instead of stdout")
        sp.add_argument("--oracle-budget", type=int, default=30, help="largest component counted by brute force")
        sp.add_argument("--resamples", type=int, default=10**6, help="resampling cap for local-lemma searches")

    def certify_opts(sp):
        sp.add_argument("--tau", type=int, default=None, help="stop coupling once |V_I| >= tau (default: never)")
        sp.add_argument("--grid-eps", type=_frac, default=Fraction(1, 100), help="window half-width 1/N")
        sp.add_argument("--slack-s", type=_frac, default=None, help="flip cap is 4/s (default max(8, d^3))")
        sp.add_argument("--tree-nodes", type=int, default=200_000, help="decision tree node budget")

    def marking_opts(sp):
        sp.add_argument("--var", type=int, required=True, help="query variable")
        sp.add_argument("--marking", help="JSON sidecar with a 'marking' list (default: search)")
        sp.add_argument("--alpha", type=_frac, default=DEFAULT_ALPHA, help="marking fraction (default 1/4)")

    sp = sub.add_parser("gen", help="random bounded-degree CNF")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--k-min", type=int, required=True)
    sp.add_argument("--k-max", type=int, required=True)
    sp.add_argument("--d", type=int, required=True, help="maximum variable degree")
    sp.add_argument("--m", type=int, default=None, help="clause count (default n d / mean width)")
    sp.add_argument("--monotone", action="store_true", help="no negated literals")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_gen)

    sp = sub.add_parser("oracle", help="exact reference: count, marginal, sample")
    sp.add_argument("what", choices=["count", "marginal", "sample"])
    common(sp)
    sp.add_argument("--var", type=int, default=None)
    sp.add_argument("--num", type=int, default=1, help="number of samples")
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("mark", help="find a marking")
    common(sp)
    sp.add_argument("--alpha", type=_frac, default=DEFAULT_ALPHA)
    sp.set_defaults(func=cmd_mark)

    sp = sub.add_parser("seed-partial", help="find a seed partial assignment")
    common(sp)
    sp.add_argument("--beta", type=_frac, default=DESK_BETA, help="unset fraction per clause (default 1/2)")
    sp.set_defaults(func=cmd_seed_partial)

    sp = sub.add_parser("couple-stats", help="coupling runs: |V_I|, ledgers, 3-trees, tail histogram")
    common(sp)
    marking_opts(sp)
    sp.add_argument("--runs", type=int, default=100)
    sp.add_argument("--tau", type=int, default=None)
    sp.set_defaults(func=cmd_couple_stats)

    sp = sub.add_parser("certify", help="LP-certified marginal interval")
    common(sp)
    marking_opts(sp)
    certify_opts(sp)
    sp.add_argument("--backend", choices=["auto", "float", "exact"], default="auto")
    sp.add_argument("--scan", choices=["bracketed", "full"], default="bracketed")
    sp.add_argument("--dump-tree", help="write the decision tree as JSON here")
    sp.set_defaults(func=cmd_certify)

    for name, func, helptext in (("count", cmd_count, "telescoping count estimate"),
                                 ("sample", cmd_sample, "sampling procedure")):
        sp = sub.add_parser(name, help=helptext)
        common(sp)
        certify_opts(sp)
        sp.add_argument("--oracle", choices=["exact", "certified"], default="exact")
        if name == "count":
            sp.add_argument("--beta", type=_frac, default=DESK_BETA)
        else:
            sp.add_argument("--num", type=int, default=1)
            sp.add_argument("--component-cap", type=int, default=30)
            sp.add_argument("--self-check", action="store_true", help="report TV distance to uniform")
        sp.set_defaults(func=func)

    sp = sub.add_parser("infer", help="posterior samples for a cause network")
    sp.add_argument("network", help="network JSON")
    sp.add_argument("observations", help="JSON array of booleans")
    common(sp, file=False)
    certify_opts(sp)
    sp.add_argument("--oracle", choices=["exact", "certified"], default="exact")
    sp.add_argument("--num", type=int, default=1)
    sp.set_defaults(func=cmd_infer)

    sp = sub.add_parser("selfcheck", help="run the invariant suites")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--quick", action="store_true")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_selfcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args) or 0
    except (UsageError, FormulaError, FileNotFoundError, json.JSONDecodeError, KeyError,
            InconsistentObservations, InfeasibleError, WidthRatioError, NullConditionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (BudgetError, TreeBudgetError, ResampleLimitError, ComponentBlowupError) as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (CertificationError, NumericalFailure, LedgerError, OracleError, AssertionError) as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
