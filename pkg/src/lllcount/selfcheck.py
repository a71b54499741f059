"""Oracle-backed invariant suites, run by ``lllcount selfcheck``."""
from __future__ import annotations

import random
from fractions import Fraction
from typing import NamedTuple

from .certify import CertifyConfig, certify_marginal
from .cnf import simplify
from .coupling import COUPLED, error_ledger, run_coupling, verify_factorization
from .dtree import annotate_probabilities, build_tree, check_balance
from .generate import gen_cnf
from .inference import preprocess, random_network, sample_forward
from .lll import check_marking, check_seed_partial, find_marking, find_seed_partial
from .oracle import count_sat, exact_marginal
from .pipeline import DESK_BETA, approx_count


class CheckResult(NamedTuple):
    name: str
    ok: bool
    detail: str


def _instances(count, seed, n=9, k=(4, 6), d=2):
    return [gen_cnf(n, k[0], k[1], d, monotone=bool(i % 2), seed=seed + i) for i in range(count)]


def _query_var(phi, marking):
    """Smallest marked variable with both values satisfiable, else None."""
    for v in sorted(marking):
        if count_sat(phi, {v: True}) and count_sat(phi, {v: False}):
            return v
    return None


def check_simplify(seed, quick):
    rng = random.Random(seed)
    for phi in _instances(10, seed):
        a = {v: bool(rng.getrandbits(1)) for v in rng.sample(range(1, phi.num_variables + 1), 3)}
        once = simplify(phi, a)[0]
        if simplify(once, a)[0] != once:
            return "simplify is not idempotent"
    return None


def check_partition(seed, quick):
    for phi in _instances(10, seed):
        for v in (1, phi.num_variables):
            if count_sat(phi) != count_sat(phi, {v: True}) + count_sat(phi, {v: False}):
                return f"count partition fails on variable {v}"
    return None


def check_lll_postconditions(seed, quick):
    for i, phi in enumerate(_instances(10, seed)):
        rng = random.Random(seed + i)
        if check_marking(phi, find_marking(phi, rng=rng)):
            return "marking postcondition violated"
        if check_seed_partial(phi, find_seed_partial(phi, beta=DESK_BETA, rng=rng), DESK_BETA):
            return "seed partial postcondition violated"
    return None


def check_factorization(seed, quick):
    runs = 0
    for i, phi in enumerate(_instances(10, seed)):
        marking = find_marking(phi, rng=random.Random(seed + i))
        x = _query_var(phi, marking)
        if x is None:
            continue
        for s in range(3 if quick else 10):
            outcome, _ = run_coupling(phi, x, marking, rng=random.Random(s))
            error_ledger(phi, marking, outcome)
            if outcome.terminated == COUPLED:
                ok, why = verify_factorization(phi, outcome)
                if not ok:
                    return why
            runs += 1
    return None if runs else "no coupling runs"


def check_balance_identity(seed, quick):
    for i, phi in enumerate(_instances(3 if quick else 8, seed)):
        marking = find_marking(phi, rng=random.Random(seed + i))
        x = _query_var(phi, marking)
        if x is None:
            continue
        tree = annotate_probabilities(build_tree(phi, x, marking))
        r = check_balance(phi, tree)
        if r != 0:
            return f"balance residual {r}"
    return None


def check_certify(seed, quick):
    for i, phi in enumerate(_instances(2 if quick else 5, seed)):
        marking = find_marking(phi, rng=random.Random(seed + i))
        x = _query_var(phi, marking)
        if x is None:
            continue
        q = exact_marginal(phi, {}, x)
        iv = certify_marginal(phi, x, marking, CertifyConfig())
        if not iv.contains(q):
            return f"interval [{iv.lo}, {iv.hi}] misses {q}"
    return None


def check_pipeline(seed, quick):
    for i, phi in enumerate(_instances(5, seed, n=12, k=(4, 5))):
        est = approx_count(phi)
        if est.value != count_sat(phi) or est.recompute() != est.value:
            return f"telescoping estimate {est.value} != {count_sat(phi)}"
    return None


def check_inference(seed, quick):
    rng = random.Random(seed)
    for i in range(50):
        net = random_network(12, 6, 2, 2, seed=seed + i)
        hidden, obs = sample_forward(net, rng)
        forced, residual = preprocess(net, obs)
        if any(hidden[v - 1] != b for v, b in forced.items()) or not residual.evaluate(hidden):
            return "generating assignment outside the posterior support"
    return None


CHECKS = (
    ("simplify idempotence", check_simplify),
    ("count partition identity", check_partition),
    ("marking and seed-partial postconditions", check_lll_postconditions),
    ("coupling factorization and ledger", check_factorization),
    ("balance identity", check_balance_identity),
    ("certified interval containment", check_certify),
    ("telescoping count exactness", check_pipeline),
    ("inference round trip", check_inference),
)


def run_selfcheck(seed: int = 0, quick: bool = False) -> list:
    out = []
    for name, fn in CHECKS:
        try:
            problem = fn(seed, quick)
        except Exception as exc:  # report, never mask: a crash is a failed check
            problem = f"{type(exc).__name__}: {exc}"
        out.append(CheckResult(name, problem is None, problem or "ok"))
    return out
