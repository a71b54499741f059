"""Telescoping approximate counting and the marked-variable sampling procedure.

Both take a ``MarginalOracleHandle``: exact (ground truth), certified (LP
intervals from ``certify``; midpoints are used) or injected (any callable).
"""
from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, NamedTuple

from .certify import CertifyConfig, certify_marginal
from .cnf import CnfFormula, Status, connected_components, simplify
from .lll import DEFAULT_ALPHA, DEFAULT_SEED_PROBS, InfeasibleError, ResampleConfig, find_marking, find_seed_partial
from .oracle import DEFAULT_BUDGET, NullConditionError, exact_marginal, exact_sample

DESK_BETA = Fraction(1, 2)  # unset fraction per clause; 7/8 needs width >= 8
WIDTH_RATIO = 6


class OracleError(ArithmeticError):
    pass


class WidthRatioError(ValueError):
    pass


class ComponentBlowupError(RuntimeError):
    def __init__(self, size: int, cap: int):
        super().__init__(f"residual component of {size} variables exceeds cap {cap}")
        self.size = size
        self.cap = cap


def formula_hash(phi: CnfFormula) -> str:
    return hashlib.sha1(phi.to_dimacs().encode()).hexdigest()[:16]


class QueryRecord(NamedTuple):
    formula: str
    variable: int
    answer: Fraction
    half_width: Fraction


@dataclass
class MarginalOracleHandle:
    """Callable ``(phi, assignment, y) -> Pr[y = T | assignment]`` with a query log."""
    kind: str = "exact"
    config: CertifyConfig | None = None
    fn: Callable | None = None
    alpha: Fraction = DEFAULT_ALPHA
    budget: int = DEFAULT_BUDGET
    log: list = field(default_factory=list)

    @classmethod
    def exact(cls, budget: int = DEFAULT_BUDGET):
        return cls("exact", budget=budget)

    @classmethod
    def certified(cls, config: CertifyConfig = CertifyConfig(), alpha=DEFAULT_ALPHA):
        return cls("certified", config=config, alpha=Fraction(alpha))

    @classmethod
    def injected(cls, fn: Callable):
        return cls("injected", fn=fn)

    def __post_init__(self):
        if self.kind not in ("exact", "certified", "injected"):
            raise ValueError(f"unknown oracle kind {self.kind!r}")
        if self.kind == "injected" and self.fn is None:
            raise ValueError("injected oracle needs a callable")

    @property
    def width_ratio(self) -> int | None:
        """Clause-width ratio bound the oracle relies on (None: no requirement)."""
        return WIDTH_RATIO if self.kind == "certified" else None

    def query(self, phi: CnfFormula, assignment, y: int):
        """(answer, half-width of the uncertainty interval)."""
        assignment = dict(assignment or {})
        reduced, status = simplify(phi, assignment)
        if status is Status.FALSIFIED:
            raise NullConditionError("partial assignment falsifies the formula")
        if self.kind == "exact":
            p, h = exact_marginal(reduced, {}, y, self.budget), Fraction(0)
        elif self.kind == "injected":
            p, h = Fraction(self.fn(phi, assignment, y)), Fraction(0)
        else:
            key = formula_hash(reduced)
            rng = random.Random(f"{key}:{y}")
            marking = find_marking(reduced, self.alpha, rng=rng, pinned={y: True})
            cert = certify_marginal(reduced, y, marking, self.config or CertifyConfig())
            p, h = cert.midpoint, cert.half_width
        if not 0 <= p <= 1:
            raise OracleError(f"oracle answered {p} for variable {y}")
        self.log.append(QueryRecord(formula_hash(reduced), y, p, h))
        return p, h

    def __call__(self, phi: CnfFormula, assignment, y: int) -> Fraction:
        return self.query(phi, assignment, y)[0]


class StepRecord(NamedTuple):
    variable: int
    value: bool
    q: Fraction  # oracle probability of the assigned value
    half_width: Fraction


@dataclass
class CountEstimate:
    value: Fraction
    n: int
    t: int
    per_step: list

    @property
    def log2_value(self) -> float:
        return (self.n - self.t) + sum(-math.log2(s.q.numerator) + math.log2(s.q.denominator) for s in self.per_step)

    def recompute(self) -> Fraction:
        v = Fraction(2) ** (self.n - self.t)
        for s in self.per_step:
            v /= s.q
        return v

    def to_json(self) -> dict:
        fr = lambda p: f"{p.numerator}/{p.denominator}"
        return {
            "estimate": fr(self.value), "log2": self.log2_value, "n": self.n, "t": self.t,
            "steps": [{"var": s.variable, "value": s.value, "q": fr(s.q), "half_width": fr(s.half_width)}
                      for s in self.per_step],
        }


@dataclass(frozen=True)
class CountConfig:
    seed_probs: tuple = DEFAULT_SEED_PROBS
    beta: Fraction = DESK_BETA
    resample: ResampleConfig = ResampleConfig()
    seed: int = 0


def check_width_ratio(phi: CnfFormula, ratio: int):
    st = phi.stats()
    if st.m and not st.k_max < ratio * st.k_min:
        raise WidthRatioError(f"clause widths {st.k_min}..{st.k_max} differ by a factor >= {ratio}")


def approx_count(phi: CnfFormula, oracle: MarginalOracleHandle | None = None, cfg: CountConfig = CountConfig(),
                 seed_partial=None) -> CountEstimate:
    """2^(n-t) * prod 1/q_i over the seed partial assignment's variables x_1 < ... < x_t.

    The seed assignment satisfies every clause, so finding it also proves
    satisfiability.  q_i is the marginal of the value the seed gives x_i,
    conditioned on the earlier settings.
    """
    oracle = oracle or MarginalOracleHandle.exact()
    if seed_partial is None:
        seed_partial = find_seed_partial(phi, cfg.seed_probs, cfg.beta, cfg.resample, random.Random(cfg.seed))
    order = sorted(seed_partial)
    prefix = {}
    steps = []
    value = Fraction(2) ** (phi.num_variables - len(order))
    for v in order:
        if oracle.width_ratio is not None:
            check_width_ratio(simplify(phi, prefix)[0], oracle.width_ratio)
        p, h = oracle.query(phi, prefix, v)
        q = p if seed_partial[v] else 1 - p
        if q == 0:
            raise OracleError(f"oracle gives the seed value of variable {v} probability 0")
        steps.append(StepRecord(v, seed_partial[v], q, h))
        value /= q
        prefix[v] = seed_partial[v]
    return CountEstimate(value, phi.num_variables, len(order), steps)


@dataclass(frozen=True)
class SampleConfig:
    alpha: Fraction = DEFAULT_ALPHA
    component_cap: int = 30
    resample: ResampleConfig = ResampleConfig()
    marking: frozenset | None = None
    # "raise", or "empty": with no valid marking, resolve everything in the component step
    infeasible_marking: str = "raise"


def _draw(p: Fraction, rng) -> bool:
    p = Fraction(p)
    return rng.randrange(p.denominator) < p.numerator


def _lit_true(lit, values):
    val = values.get(abs(lit))
    return val is not None and val != (lit < 0)


class SampleTrace(NamedTuple):
    assignment: tuple
    inner_sizes: list  # |V_I| at the end of each outer iteration
    component_sizes: list


def approx_sample(phi: CnfFormula, oracle: MarginalOracleHandle | None = None, cfg: SampleConfig = SampleConfig(),
                  rng=None, trace: bool = False):
    """One run of the sampling procedure; returns a satisfying total assignment (or a SampleTrace)."""
    oracle = oracle or MarginalOracleHandle.exact()
    rng = rng if rng is not None else random.Random(0)
    marking = cfg.marking
    if marking is None:
        try:
            marking = find_marking(phi, cfg.alpha, cfg.resample, rng)
        except InfeasibleError:
            if cfg.infeasible_marking != "empty":
                raise
            marking = frozenset()
    n = phi.num_variables
    values: dict = {}
    alive = set(range(len(phi.clauses)))
    occ = phi.occurrences
    inner_sizes = []

    def sample(y):
        values[y] = _draw(oracle(phi, values, y), rng)

    for x in sorted(marking):
        if x in values:
            continue
        sample(x)
        inner = {x}
        while True:
            # lowest-index live clause with a variable in V_I and an unset variable outside V_I
            c = min((i for v in inner for i in occ.get(v, ())
                     if i in alive and any(u not in values and u not in inner for u in phi.clause_vars[i])),
                    default=None)
            if c is None:
                break
            for y in sorted(phi.clause_vars[c]):
                if y in marking and y not in values:
                    sample(y)
            if any(_lit_true(l, values) for l in phi.clauses[c]):
                alive.discard(c)
            else:
                inner |= phi.clause_vars[c]
        inner_sizes.append(len(inner))
    residual = CnfFormula(n, tuple(phi.clauses[i] for i in sorted(alive)))
    residual, status = simplify(residual, values)
    if status is Status.FALSIFIED:
        raise OracleError("sampled values falsify a clause")
    comps = connected_components(residual)
    sizes = [len(part.variables) for part in comps.parts]
    for size in sizes:
        if size > cfg.component_cap:
            raise ComponentBlowupError(size, cfg.component_cap)
    out = exact_sample(residual, rng, values, budget=cfg.component_cap)
    assert phi.evaluate(out), "sampled assignment does not satisfy the formula"
    if trace:
        return SampleTrace(out, inner_sizes, sizes)
    return out
