"""Local-lemma constructions by Moser-Tardos resampling.

Three searches share one engine: draw every variable independently, then
repeatedly pick the lowest-index clause whose bad event holds and redraw the
variables of that clause.

* ``moser_tardos``: bad event = clause unsatisfied.
* ``find_marking``: bad event = too few marked or too few unmarked variables.
* ``find_seed_partial``: bad event = clause unsatisfied by the set variables,
  or too few variables left unset.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

from .cnf import CnfFormula, FormulaStats, LLLVariant, ceil_fraction, check_lll_condition

DEFAULT_ALPHA = Fraction(1, 4)
DEFAULT_BETA = Fraction(7, 8)
DEFAULT_SEED_PROBS = (Fraction(1, 32), Fraction(1, 32), Fraction(15, 16))


@dataclass(frozen=True)
class ResampleConfig:
    max_resamples: int = 10**6
    rng_seed: int = 0

    def __post_init__(self):
        if self.max_resamples <= 0:
            raise ValueError("max_resamples must be positive")


class ResampleLimitError(RuntimeError):
    def __init__(self, resamples: int):
        super().__init__(f"no good configuration after {resamples} resamples")
        self.resamples = resamples


class InfeasibleError(ValueError):
    pass


def _resample_search(phi: CnfFormula, draw, bad, cfg: ResampleConfig, rng=None, fixed=None):
    """Generic resampler over per-clause bad events.

    ``draw(rng)`` produces one variable value, ``bad(i, values)`` tests clause
    ``i`` against the value list (index v-1).  Variables in ``fixed`` keep the
    given value and are never redrawn.  Returns (values, resamples).
    """
    rng = rng if rng is not None else random.Random(cfg.rng_seed)
    n = phi.num_variables
    fixed = fixed or {}
    values = [draw(rng) for _ in range(n)]
    for v, b in fixed.items():
        values[v - 1] = b
    occ = phi.occurrences
    violated = {i for i in range(len(phi.clauses)) if bad(i, values)}
    resamples = 0
    while violated:
        if resamples >= cfg.max_resamples:
            raise ResampleLimitError(resamples)
        i = min(violated)
        resamples += 1
        for v in phi.clause_vars[i]:
            if v not in fixed:
                values[v - 1] = draw(rng)
        for j in {j for v in phi.clause_vars[i] for j in occ[v]}:
            if bad(j, values):
                violated.add(j)
            else:
                violated.discard(j)
    return values, resamples


def _lit_true(lit, values):
    val = values[abs(lit) - 1]
    return val is not None and val != (lit < 0)


def moser_tardos(phi: CnfFormula, cfg: ResampleConfig = ResampleConfig(), rng=None) -> tuple:
    """Satisfying total assignment found by resampling the lowest violated clause."""
    clauses = phi.clauses

    def bad(i, values):
        return not any(_lit_true(l, values) for l in clauses[i])

    values, _ = _resample_search(phi, lambda r: bool(r.getrandbits(1)), bad, cfg, rng)
    assignment = tuple(values)
    assert phi.evaluate(assignment)
    return assignment


def existence_condition(phi: CnfFormula) -> bool:
    return check_lll_condition(phi.stats(), LLLVariant.EXISTENCE)


def _thresholds(phi: CnfFormula, frac) -> list:
    return [ceil_fraction(Fraction(frac) * len(c)) for c in phi.clauses]


def find_marking(phi: CnfFormula, alpha=DEFAULT_ALPHA, cfg: ResampleConfig = ResampleConfig(), rng=None,
                 pinned=None) -> frozenset:
    """Marked-variable set with >= ceil(alpha|c|) marked and unmarked variables per clause.

    ``pinned`` maps variables to a forced marked (True) / unmarked (False) status.
    """
    alpha = Fraction(alpha)
    if not 0 < alpha <= Fraction(1, 2):
        raise ValueError("alpha must lie in (0, 1/2]")
    need = _thresholds(phi, alpha)
    for i, c in enumerate(phi.clauses):
        if 2 * need[i] > len(c):
            raise InfeasibleError(f"clause {i} of width {len(c)} cannot hold {need[i]} marked and {need[i]} unmarked variables")
    cv = phi.clause_vars

    def bad(i, values):
        marked = sum(values[v - 1] for v in cv[i])
        return marked < need[i] or len(cv[i]) - marked < need[i]

    values, _ = _resample_search(phi, lambda r: bool(r.getrandbits(1)), bad, cfg, rng, pinned)
    return frozenset(v for v in range(1, phi.num_variables + 1) if values[v - 1])


def check_marking(phi: CnfFormula, marking, alpha=DEFAULT_ALPHA) -> list:
    """Indices of clauses violating the marking postcondition."""
    need = _thresholds(phi, alpha)
    out = []
    for i, vs in enumerate(phi.clause_vars):
        m = len(vs & marking)
        if m < need[i] or len(vs) - m < need[i]:
            out.append(i)
    return out


def find_seed_partial(phi: CnfFormula, probs=DEFAULT_SEED_PROBS, beta=DEFAULT_BETA,
                      cfg: ResampleConfig = ResampleConfig(), rng=None) -> dict:
    """Partial assignment satisfying every clause while leaving ceil(beta|c|) variables unset."""
    p_true, p_false, p_unset = (Fraction(p) for p in probs)
    if p_true + p_false + p_unset != 1 or min(p_true, p_false, p_unset) < 0:
        raise ValueError("probabilities must be non-negative and sum to 1")
    beta = Fraction(beta)
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    need = _thresholds(phi, beta)
    for i, c in enumerate(phi.clauses):
        if need[i] > len(c) - 1:
            raise InfeasibleError(f"clause {i} of width {len(c)} cannot keep {need[i]} unset variables and be satisfied")
    clauses, cv = phi.clauses, phi.clause_vars
    t_cut, f_cut = float(p_true), float(p_true + p_false)

    def draw(r):
        u = r.random()
        return True if u < t_cut else (False if u < f_cut else None)

    def bad(i, values):
        unset = sum(values[v - 1] is None for v in cv[i])
        return unset < need[i] or not any(_lit_true(l, values) for l in clauses[i])

    values, _ = _resample_search(phi, draw, bad, cfg, rng)
    return {v: values[v - 1] for v in range(1, phi.num_variables + 1) if values[v - 1] is not None}


def check_seed_partial(phi: CnfFormula, assignment, beta=DEFAULT_BETA) -> list:
    need = _thresholds(phi, beta)
    out = []
    for i, c in enumerate(phi.clauses):
        unset = sum(abs(l) not in assignment for l in c)
        sat = any(abs(l) in assignment and assignment[abs(l)] != (l < 0) for l in c)
        if unset < need[i] or not sat:
            out.append(i)
    return out


@dataclass(frozen=True)
class MarginalBoundParams:
    k_eff: int
    big_d: int
    s: Fraction

    @property
    def condition_holds(self) -> bool:
        stats = FormulaStats(0, 0, 0, self.k_eff, self.k_eff, self.big_d)
        return check_lll_condition(stats, LLLVariant.MARGINAL_BOUND, self.s)


class MarginalBounds(NamedTuple):
    lo: Fraction
    hi: Fraction
    condition_holds: bool


def marginal_bounds(params: MarginalBoundParams) -> MarginalBounds:
    """Interval [1/2 - 2/s, 1/2 + 2/s] plus whether e*D*s <= 2^k holds."""
    s = Fraction(params.s)
    if s <= 4:
        raise ValueError("s must exceed 4")
    half = Fraction(1, 2)
    return MarginalBounds(half - 2 / s, half + 2 / s, params.condition_holds)
