"""Exact ground truth: brute-force counting, conditional marginals, uniform sampling.

Everything here is exact (Python ints and Fractions).  Counting splits the
simplified formula into variable-connected components, counts each by
exhaustive search with clause-violation pruning, and multiplies.  A component
wider than the budget raises BudgetError instead of guessing.
"""
from __future__ import annotations

from fractions import Fraction
from functools import lru_cache

from .cnf import CnfFormula, Status, connected_components, simplify

DEFAULT_BUDGET = 30
_LIST_LIMIT = 1 << 15


class BudgetError(RuntimeError):
    def __init__(self, size: int, budget: int):
        super().__init__(f"component with {size} variables exceeds brute-force budget {budget}")
        self.size = size
        self.budget = budget


class NullConditionError(ValueError):
    """The conditioning event has no satisfying assignment."""


class UnsatisfiableError(ValueError):
    pass


def _masks(phi: CnfFormula):
    """Per local variable index i (0-based): clauses whose largest variable is i+1,
    as (positive mask, negative mask) pairs."""
    ending = [[] for _ in range(phi.num_variables)]
    for c in phi.clauses:
        pos = neg = 0
        for lit in c:
            if lit > 0:
                pos |= 1 << (lit - 1)
            else:
                neg |= 1 << (-lit - 1)
        top = max(abs(l) for l in c)
        ending[top - 1].append((pos, neg))
    return tuple(tuple(e) for e in ending)


def _search(n, ending, val, i):
    """Count completions of bits 0..i-1 (already in ``val``) over bits i..n-1."""
    if i == n:
        return 1
    total = 0
    bit = 1 << i
    for nv in (val, val | bit):
        for pos, neg in ending[i]:
            if not (pos & nv) and not (neg & ~nv):
                break
        else:
            total += _search(n, ending, nv, i + 1)
    return total


@lru_cache(maxsize=1 << 16)
def _count_component(phi: CnfFormula) -> int:
    if any(len(c) == 0 for c in phi.clauses):
        return 0
    return _search(phi.num_variables, _masks(phi), 0, 0)


def _component_key(comp_formula: CnfFormula) -> CnfFormula:
    # clause order does not matter for counting; sorting improves cache reuse
    return CnfFormula(comp_formula.num_variables, tuple(sorted(comp_formula.clauses)))


def _reduce(phi: CnfFormula, assignment, budget):
    """Simplify under ``assignment``; return (components, free unset count) or None if falsified."""
    assignment = assignment or {}
    reduced, status = simplify(phi, assignment)
    if status is Status.FALSIFIED:
        return None
    comps = connected_components(reduced)
    for part in comps.parts:
        if part.formula.num_variables > budget:
            raise BudgetError(part.formula.num_variables, budget)
    pinned = sum(1 for v in assignment if 1 <= v <= phi.num_variables)
    return comps.parts, comps.free_variables - pinned


def count_sat(phi: CnfFormula, assignment=None, budget: int = DEFAULT_BUDGET) -> int:
    """Number of total assignments that satisfy ``phi`` and agree with ``assignment``."""
    reduced = _reduce(phi, assignment, budget)
    if reduced is None:
        return 0
    parts, free = reduced
    total = 1 << free
    for part in parts:
        total *= _count_component(_component_key(part.formula))
        if not total:
            return 0
    return total


def exact_marginal(phi: CnfFormula, assignment, y: int, budget: int = DEFAULT_BUDGET) -> Fraction:
    """Pr[y = T] in the uniform distribution on satisfying assignments consistent with ``assignment``."""
    assignment = dict(assignment or {})
    if y in assignment:
        raise ValueError(f"variable {y} is already set")
    total = count_sat(phi, assignment, budget)
    if total == 0:
        raise NullConditionError("no satisfying assignment is consistent with the partial assignment")
    assignment[y] = True
    return Fraction(count_sat(phi, assignment, budget), total)


def enumerate_sat(phi: CnfFormula, budget: int = DEFAULT_BUDGET):
    """Yield satisfying total assignments in lexicographic order (x_1 most significant, F < T)."""
    n = phi.num_variables
    if n > budget:
        raise BudgetError(n, budget)
    if any(len(c) == 0 for c in phi.clauses):
        return
    # clauses checked once their last variable in search order is placed
    ending = [[] for _ in range(n)]
    for c in phi.clauses:
        ending[max(abs(l) for l in c) - 1].append(c)
    values = [False] * n

    def rec(i):
        if i == n:
            yield tuple(values)
            return
        for b in (False, True):
            values[i] = b
            if all(any(values[abs(l) - 1] != (l < 0) for l in c) for c in ending[i]):
                yield from rec(i + 1)

    yield from rec(0)


@lru_cache(maxsize=256)
def _component_solutions(phi: CnfFormula) -> tuple:
    return tuple(enumerate_sat(phi, budget=phi.num_variables))


def _unrank(phi: CnfFormula, r: int) -> tuple:
    """The r-th satisfying assignment of ``phi`` in enumeration order."""
    prefix = {}
    for v in range(1, phi.num_variables + 1):
        prefix[v] = False
        below = count_sat(phi, prefix, budget=phi.num_variables)
        if r >= below:
            r -= below
            prefix[v] = True
    return tuple(prefix[v] for v in range(1, phi.num_variables + 1))


def exact_sample(phi: CnfFormula, rng, assignment=None, budget: int = DEFAULT_BUDGET) -> tuple:
    """Uniform satisfying assignment consistent with ``assignment``.

    Each component is sampled by drawing a uniform index below its solution
    count and reading off that solution in enumeration order; unconstrained
    unset variables are fair coins.
    """
    assignment = dict(assignment or {})
    reduced = _reduce(phi, assignment, budget)
    if reduced is None:
        raise UnsatisfiableError("formula is falsified by the partial assignment")
    parts, _ = reduced
    values = [None] * phi.num_variables
    for v, b in assignment.items():
        values[v - 1] = bool(b)
    for part in parts:
        key = _component_key(part.formula)
        count = _count_component(key)
        if count == 0:
            raise UnsatisfiableError("formula has no satisfying assignment")
        r = rng.randrange(count)
        if count <= _LIST_LIMIT:
            local = _component_solutions(key)[r]
        else:
            local = _unrank(key, r)
        for j, v in enumerate(part.variables):
            values[v - 1] = local[j]
    for i, b in enumerate(values):
        if b is None:
            values[i] = bool(rng.getrandbits(1))
    return tuple(values)


def clear_caches():
    _count_component.cache_clear()
    _component_solutions.cache_clear()
