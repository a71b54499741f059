"""Coupling of two partial assignments that start from x = T and x = F.

The procedure grows A1 (x = T) and A2 (x = F) together.  Whenever some clause
has variables both inside V_I and outside it (in V_O), its unset marked
variables are drawn one by one from the two conditional distributions under
the maximal coupling.  The clause is then either deleted (satisfied in both
assignments; disagreeing variables join V_I) or all its variables join V_I.
When no clause straddles the partition the formula factorizes.

Clause and variable choices are lexicographic, so the only randomness is in
``couple_step``; that is what makes the decision tree in ``dtree`` well
defined.
"""
from __future__ import annotations

import random
from collections import Counter, deque
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import cached_property
from math import lcm
from typing import NamedTuple

from .cnf import CnfFormula, build_variable_graph, simplify
from .oracle import exact_marginal, exact_sample

COUPLED = "coupled"
TRUNCATED = "truncated"

CHOICES = ((True, True), (True, False), (False, True), (False, False))


@dataclass(frozen=True)
class CouplingState:
    num_variables: int
    remaining: frozenset
    v_inner: frozenset
    # (variable, value in A1, value in A2) in the order the variables were set
    set_vars: tuple
    current: int | None = None

    @cached_property
    def values(self) -> dict:
        return {v: (a, b) for v, a, b in self.set_vars}

    @property
    def a1(self) -> dict:
        return {v: a for v, a, _ in self.set_vars}

    @property
    def a2(self) -> dict:
        return {v: b for v, _, b in self.set_vars}

    @property
    def v_outer(self) -> frozenset:
        return frozenset(range(1, self.num_variables + 1)) - self.v_inner

    def with_setting(self, y: int, v1: bool, v2: bool) -> "CouplingState":
        if y in self.values:
            raise ValueError(f"variable {y} already set")
        return replace(self, set_vars=self.set_vars + ((y, v1, v2),))

    def to_json(self) -> dict:
        return {
            "remaining": sorted(self.remaining),
            "v_inner": sorted(self.v_inner),
            "set": [[v, a, b] for v, a, b in self.set_vars],
            "current": self.current,
        }


def root_state(phi: CnfFormula, x: int) -> CouplingState:
    if not 1 <= x <= phi.num_variables:
        raise ValueError(f"variable {x} out of range")
    return CouplingState(phi.num_variables, frozenset(range(len(phi.clauses))),
                         frozenset({x}), ((x, True, False),))


def _lit_true(lit, values):
    val = values.get(abs(lit))
    return val is not None and val != (lit < 0)


def straddling_clause(state: CouplingState, phi: CnfFormula):
    """Lowest-index remaining clause with variables on both sides, or None."""
    inner = state.v_inner
    occ = phi.occurrences
    best = None
    for v in inner:
        for i in occ.get(v, ()):
            if (best is None or i < best) and i in state.remaining and not phi.clause_vars[i] <= inner:
                best = i
    return best


def is_coupled(state: CouplingState, phi: CnfFormula) -> bool:
    return state.current is None and straddling_clause(state, phi) is None


def next_to_set(state: CouplingState, phi: CnfFormula, marking, tau=None, events=None):
    """Advance through deterministic transitions to the next variable to draw.

    Returns ``(y, state')``; ``y`` is None when the coupling has stopped,
    either because nothing straddles or because |V_I| reached ``tau``.
    Case #1 / Case #2 bookkeeping is appended to ``events`` if given.
    """
    while True:
        if state.current is None:
            if tau is not None and len(state.v_inner) >= tau:
                return None, state
            c = straddling_clause(state, phi)
            if c is None:
                return None, state
            state = replace(state, current=c)
        c = state.current
        values = state.values
        pending = [v for v in sorted(phi.clause_vars[c]) if v in marking and v not in values]
        if pending:
            return pending[0], state
        clause = phi.clauses[c]
        a1 = {v: a for v, (a, _) in values.items()}
        a2 = {v: b for v, (_, b) in values.items()}
        if any(_lit_true(l, a1) for l in clause) and any(_lit_true(l, a2) for l in clause):
            diff = frozenset(v for v in phi.clause_vars[c] if v in values and values[v][0] != values[v][1])
            state = replace(state, v_inner=state.v_inner | diff, remaining=state.remaining - {c}, current=None)
            if events is not None:
                events.append(("case1", c, diff))
        else:
            state = replace(state, v_inner=state.v_inner | phi.clause_vars[c], current=None)
            if events is not None:
                events.append(("case2", c, phi.clause_vars[c]))


def _check_probability(p) -> Fraction:
    p = Fraction(p)
    if not 0 <= p <= 1:
        raise ValueError(f"probability {p} outside [0, 1]")
    return p


def coupling_table(p1, p2) -> dict:
    """Maximal coupling of Bernoulli(p1) and Bernoulli(p2) as {(v1, v2): probability}."""
    p1, p2 = _check_probability(p1), _check_probability(p2)
    table = {
        (True, True): min(p1, p2),
        (False, False): min(1 - p1, 1 - p2),
        (True, False): max(p1 - p2, Fraction(0)),
        (False, True): max(p2 - p1, Fraction(0)),
    }
    return table


def couple_step(p1, p2, rng) -> tuple:
    table = coupling_table(p1, p2)
    den = lcm(*(p.denominator for p in table.values()))
    r = rng.randrange(den)
    for choice in CHOICES:
        w = table[choice] * den
        if r < w:
            return choice
        r -= w
    raise AssertionError("coupling table does not sum to one")


class CouplingOutcome(NamedTuple):
    a1: dict
    a2: dict
    v_inner: frozenset
    phi_i1: CnfFormula
    phi_i2: CnfFormula
    phi_o: CnfFormula
    terminated: str
    state: CouplingState
    trace: tuple


class ErrorLedger(NamedTuple):
    type1: frozenset
    type2: frozenset


class LedgerError(AssertionError):
    pass


def factorize(phi: CnfFormula, state: CouplingState):
    """(A1, A2, Phi_I1, Phi_I2, Phi_O) from the remaining clauses of a final state."""
    a1, a2 = state.a1, state.a2
    inner = state.v_inner
    c_in, c_out = [], []
    for i in sorted(state.remaining):
        vs = phi.clause_vars[i]
        if vs <= inner:
            c_in.append(phi.clauses[i])
        elif not vs & inner:
            c_out.append(phi.clauses[i])
    n = phi.num_variables
    inner_f = CnfFormula(n, tuple(c_in))
    outer_f = CnfFormula(n, tuple(c_out))
    return a1, a2, simplify(inner_f, a1)[0], simplify(inner_f, a2)[0], simplify(outer_f, a1)[0]


def default_oracle(phi, assignment, y):
    return exact_marginal(phi, assignment, y)


def run_coupling(phi: CnfFormula, x: int, marking, marginal_oracle=None, tau=None, rng=None):
    """Run the coupling once; return (CouplingOutcome, ErrorLedger)."""
    if tau is not None and tau < 1:
        raise ValueError("tau must be at least 1")
    oracle = marginal_oracle or default_oracle
    rng = rng if rng is not None else random.Random(0)
    state = root_state(phi, x)
    events = [("root", x)]
    while True:
        y, state = next_to_set(state, phi, marking, tau, events)
        if y is None:
            break
        p1 = oracle(phi, state.a1, y)
        p2 = oracle(phi, state.a2, y)
        v1, v2 = couple_step(p1, p2, rng)
        events.append(("set", y, v1, v2))
        state = state.with_setting(y, v1, v2)
    outcome = build_outcome(phi, state, events)
    return outcome, error_ledger(phi, marking, outcome)


def build_outcome(phi: CnfFormula, state: CouplingState, events=()) -> CouplingOutcome:
    terminated = COUPLED if is_coupled(state, phi) else TRUNCATED
    a1, a2, i1, i2, o = factorize(phi, state)
    return CouplingOutcome(a1, a2, state.v_inner, i1, i2, o, terminated, state, tuple(events))


def verify_factorization(phi: CnfFormula, outcome: CouplingOutcome):
    """Return (ok, diagnostic) for the factorization conditions of a coupled outcome.

    (a) Phi_O is identical under A1 and A2 (A1, A2 agree outside V_I);
    (b) Phi_I1, Phi_I2 share no variable with Phi_O;
    (c) Phi simplified under A_j equals Phi_Ij and Phi_O, as clause multisets.
    """
    n = phi.num_variables
    a1, a2 = outcome.a1, outcome.a2
    inner = frozenset(outcome.v_inner)
    for v in set(a1) | set(a2):
        if v not in inner and a1.get(v) != a2.get(v):
            return False, f"(a) A1 and A2 differ on variable {v} outside V_I"
    outer = CnfFormula(n, tuple(c for c, vs in zip(phi.clauses, phi.clause_vars) if not vs & inner))
    o1, o2 = simplify(outer, a1)[0], simplify(outer, a2)[0]
    if o1.clauses != o2.clauses:
        return False, "(a) outer formula differs between A1 and A2"
    o_vars = outcome.phi_o.variables()
    for name, f in (("Phi_I1", outcome.phi_i1), ("Phi_I2", outcome.phi_i2)):
        shared = f.variables() & o_vars
        if shared:
            return False, f"(b) {name} shares variables {sorted(shared)} with Phi_O"
    for j, (a, inner_f) in enumerate(((a1, outcome.phi_i1), (a2, outcome.phi_i2)), 1):
        full = simplify(phi, a)[0]
        if sorted(full.clauses) != sorted(inner_f.clauses + outcome.phi_o.clauses):
            return False, f"(c) Phi under A{j} is not Phi_I{j} and Phi_O"
    return True, None


def error_ledger(phi: CnfFormula, marking, outcome: CouplingOutcome) -> ErrorLedger:
    """Type-1 variables and type-2 clauses of a run, checking every V_I member is explained."""
    a1, a2 = outcome.a1, outcome.a2
    type1 = frozenset(v for v in a1 if a1[v] != a2[v])
    type2 = frozenset(ev[1] for ev in outcome.trace if ev[0] == "case2")
    for c in type2:
        clause = phi.clauses[c]
        if any(v in marking and v not in a1 for v in phi.clause_vars[c]):
            raise LedgerError(f"clause {c} entered Case #2 with unset marked variables")
        if any(_lit_true(l, a1) for l in clause) and any(_lit_true(l, a2) for l in clause):
            raise LedgerError(f"clause {c} entered Case #2 although satisfied in both")
    covered = type1.union(*(phi.clause_vars[c] for c in type2))
    missing = outcome.v_inner - covered
    if missing:
        raise LedgerError(f"V_I members {sorted(missing)} have no type-1 or type-2 cause")
    return ErrorLedger(type1, type2)


def decision_tree_sampling(phi: CnfFormula, x: int, marking, marginal_oracle=None, tau=None, rng=None, q=None):
    """Sample via a random root-to-leaf path and a uniform completion of A1 or A2.

    With probability q = Pr[x = T] the completion of A1 is returned, else that
    of A2.  Only the returned side is completed.
    """
    rng = rng if rng is not None else random.Random(0)
    if q is None:
        q = exact_marginal(phi, {}, x)
    outcome, _ = run_coupling(phi, x, marking, marginal_oracle, tau, rng)
    q = Fraction(q)
    if rng.randrange(q.denominator) < q.numerator:
        return exact_sample(phi, rng, outcome.a1)
    return exact_sample(phi, rng, outcome.a2)


@dataclass(frozen=True)
class ThreeTree:
    vertices: frozenset
    order: tuple = field(default=(), compare=False)


def _bfs(g, sources):
    dist = {s: 0 for s in sources}
    queue = deque(sources)
    while queue:
        u = queue.popleft()
        for w in g[u]:
            if w not in dist:
                dist[w] = dist[u] + 1
                queue.append(w)
    return dist


def max_3tree(g: dict, seed_vertex) -> ThreeTree:
    """Greedy maximal 3-tree: keep adding the smallest vertex at distance exactly 3."""
    if seed_vertex not in g:
        raise ValueError("seed vertex not in graph")
    order = [seed_vertex]
    dist = _bfs(g, [seed_vertex])
    while True:
        cands = [v for v, dv in dist.items() if dv == 3]
        if not cands:
            break
        v = min(cands)
        order.append(v)
        # relax distances from the new member
        dist[v] = 0
        queue = deque([v])
        while queue:
            u = queue.popleft()
            for w in g[u]:
                if dist.get(w, 1 << 30) > dist[u] + 1:
                    dist[w] = dist[u] + 1
                    queue.append(w)
    return ThreeTree(frozenset(order), tuple(order))


def three_tree_violations(g: dict, vertices) -> list:
    """Independent check of the 3-tree invariants and maximality; empty list means valid."""
    vertices = sorted(vertices)
    problems = []
    dists = {v: _bfs(g, [v]) for v in vertices}
    for i, u in enumerate(vertices):
        for w in vertices[i + 1:]:
            if dists[u].get(w, 1 << 30) < 3:
                problems.append(f"vertices {u},{w} at distance {dists[u][w]}")
    if vertices:
        seen, stack = {vertices[0]}, [vertices[0]]
        while stack:
            u = stack.pop()
            for w in vertices:
                if w not in seen and dists[u].get(w) == 3:
                    seen.add(w)
                    stack.append(w)
        if len(seen) != len(vertices):
            problems.append("distance-3 graph on the tree is disconnected")
    near = _bfs(g, vertices) if vertices else {}
    far = [v for v in g if near.get(v, 1 << 30) > 2]
    if far:
        problems.append(f"not maximal: {sorted(far)[:5]} farther than 2")
    return problems


def three_tree_bound(num_inner: int, d: int, k: int) -> Fraction:
    """The lower bound |V_I| / (2 (6dk)^2) on a maximal 3-tree."""
    return Fraction(num_inner, 2 * (6 * d * k) ** 2)


def tail_report(sizes, d: int, k: int) -> dict:
    """Histogram of |V_I| over runs, bucketed in units of 2(6dk)^2, with survival frequencies."""
    unit = 2 * (6 * d * k) ** 2
    runs = len(sizes)
    raw = Counter(sizes)
    buckets = Counter(s // unit for s in sizes)
    top = max(buckets) if buckets else 0
    freq = [buckets.get(t, 0) / runs for t in range(top + 1)] if runs else []
    survival = [sum(1 for s in sizes if s >= unit * t) / runs for t in range(top + 2)] if runs else []
    mode = max(range(len(freq)), key=lambda t: freq[t]) if freq else 0
    decays = all(freq[t + 1] <= freq[t] for t in range(mode, len(freq) - 1))
    raw_sizes = sorted(raw)
    raw_freq = [raw[s] / runs for s in raw_sizes]
    raw_mode = raw_sizes[max(range(len(raw_freq)), key=lambda i: raw_freq[i])] if raw_sizes else 0
    return {
        "runs": runs,
        "unit": unit,
        "bucket_frequency": freq,
        "survival": survival,
        "half_power_bound": [0.5 ** t for t in range(len(survival))],
        "mode_bucket": mode,
        "non_increasing_beyond_mode": decays,
        "raw_histogram": {str(s): raw[s] for s in raw_sizes},
        "raw_mode": raw_mode,
        "raw_survival": {str(s): sum(1 for t in sizes if t >= s) / runs for s in raw_sizes},
    }
