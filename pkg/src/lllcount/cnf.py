"""CNF formulas, DIMACS I/O, simplification and structural statistics.

Literals are DIMACS-style signed integers: ``v`` is the variable ``x_v`` and
``-v`` its negation.  A clause is a tuple of literals over distinct
variables, a formula a tuple of clauses over variables ``1..n``.

Partial assignments are plain mappings ``{variable: bool}``; a variable that
is absent is unset.  Total assignments are tuples of booleans, index ``v-1``
holding the value of ``x_v``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Mapping, NamedTuple

import mpmath

Clause = tuple  # tuple[int, ...]
PartialAssignment = Mapping  # Mapping[int, bool]
Marking = frozenset  # frozenset[int] of marked variables


class Literal(NamedTuple):
    variable: int
    negated: bool

    @classmethod
    def from_int(cls, lit: int) -> "Literal":
        return cls(abs(lit), lit < 0)

    def __int__(self) -> int:
        return -self.variable if self.negated else self.variable


class FormulaError(ValueError):
    pass


class DimacsError(FormulaError):
    """Base class for DIMACS parse errors; ``line`` is 1-based."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class MalformedHeaderError(DimacsError):
    pass


class LiteralRangeError(DimacsError):
    pass


class DuplicateVariableError(DimacsError):
    pass


class ClauseCountError(DimacsError):
    pass


class FormulaStats(NamedTuple):
    n: int
    m: int
    d: int
    k_min: int
    k_max: int
    big_d: int

    @property
    def width_ratio(self) -> int:
        """Smallest integer C with k_max <= C * k_min (0 for empty formulas)."""
        if self.k_min == 0:
            return 0
        return -(-self.k_max // self.k_min)


@dataclass(frozen=True)
class CnfFormula:
    num_variables: int
    clauses: tuple = ()

    def __post_init__(self):
        clauses = tuple(tuple(int(l) for l in c) for c in self.clauses)
        object.__setattr__(self, "clauses", clauses)
        if self.num_variables < 0:
            raise FormulaError("negative variable count")
        for i, c in enumerate(clauses):
            seen = set()
            for lit in c:
                v = abs(lit)
                if lit == 0 or v > self.num_variables:
                    raise FormulaError(f"clause {i}: literal {lit} out of range")
                if v in seen:
                    raise FormulaError(f"clause {i}: variable {v} repeated")
                seen.add(v)

    @classmethod
    def from_clauses(cls, clauses: Iterable[Iterable[int]], num_variables: int | None = None):
        clauses = [tuple(c) for c in clauses]
        if num_variables is None:
            num_variables = max((abs(l) for c in clauses for l in c), default=0)
        return cls(num_variables, tuple(clauses))

    def __len__(self):
        return len(self.clauses)

    @cached_property
    def clause_vars(self) -> tuple:
        return tuple(frozenset(abs(l) for l in c) for c in self.clauses)

    @cached_property
    def occurrences(self) -> dict:
        """variable -> tuple of clause indices containing it."""
        occ = {}
        for i, c in enumerate(self.clauses):
            for lit in c:
                occ.setdefault(abs(lit), []).append(i)
        return {v: tuple(ix) for v, ix in occ.items()}

    def variables(self) -> frozenset:
        """Variables mentioned by at least one clause."""
        return frozenset(self.occurrences)

    @cached_property
    def _stats(self) -> FormulaStats:
        widths = [len(c) for c in self.clauses]
        d = max((len(ix) for ix in self.occurrences.values()), default=0)
        k_min = min(widths, default=0)
        k_max = max(widths, default=0)
        ratio = -(-k_max // k_min) if k_min else 0
        return FormulaStats(self.num_variables, len(self.clauses), d, k_min, k_max, ratio * d * k_min)

    def stats(self) -> FormulaStats:
        return self._stats

    def evaluate(self, assignment) -> bool:
        """True iff the total assignment (tuple indexed by v-1) satisfies every clause."""
        return all(any((assignment[abs(l) - 1]) != (l < 0) for l in c) for c in self.clauses)

    def to_dimacs(self, comments: Iterable[str] = ()) -> str:
        lines = [f"c {c}" for c in comments]
        lines.append(f"p cnf {self.num_variables} {len(self.clauses)}")
        lines.extend(" ".join(map(str, c + (0,))) for c in self.clauses)
        return "\n".join(lines) + "\n"


def parse_dimacs(text: str) -> CnfFormula:
    header = None
    clauses = []
    current: list[int] = []
    start_line = 0
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("c"):
            continue
        if line.startswith("%"):
            break
        if line.startswith("p"):
            if header is not None:
                raise MalformedHeaderError(lineno, "second problem line")
            parts = line.split()
            if len(parts) != 4 or parts[1] != "cnf":
                raise MalformedHeaderError(lineno, f"expected 'p cnf <n> <m>', got {line!r}")
            try:
                n, m = int(parts[2]), int(parts[3])
            except ValueError:
                raise MalformedHeaderError(lineno, f"non-integer counts in {line!r}") from None
            if n < 0 or m < 0:
                raise MalformedHeaderError(lineno, "negative counts")
            header = (n, m)
            continue
        if header is None:
            raise MalformedHeaderError(lineno, "clause before problem line")
        for tok in line.split():
            try:
                lit = int(tok)
            except ValueError:
                raise DimacsError(lineno, f"bad token {tok!r}") from None
            if not current:
                start_line = lineno
            if lit == 0:
                vs = [abs(l) for l in current]
                if len(set(vs)) != len(vs):
                    raise DuplicateVariableError(start_line, f"duplicate variable in clause {current}")
                clauses.append(tuple(current))
                current = []
            elif abs(lit) > header[0]:
                raise LiteralRangeError(lineno, f"literal {lit} exceeds n={header[0]}")
            else:
                current.append(lit)
    if header is None:
        raise MalformedHeaderError(0, "missing problem line")
    if current:
        raise DimacsError(start_line, "unterminated clause")
    if len(clauses) != header[1]:
        raise ClauseCountError(0, f"header declares {header[1]} clauses, found {len(clauses)}")
    return CnfFormula(header[0], tuple(clauses))


class Status(enum.Enum):
    OK = "ok"
    FALSIFIED = "falsified"


def literal_value(lit: int, assignment: PartialAssignment):
    """True/False under the partial assignment, None if the variable is unset."""
    val = assignment.get(abs(lit))
    if val is None:
        return None
    return val != (lit < 0)


def clause_satisfied(clause, assignment: PartialAssignment) -> bool:
    return any(literal_value(l, assignment) for l in clause)


def simplify(phi: CnfFormula, assignment: PartialAssignment):
    """Drop satisfied clauses and falsified literals; return (formula, Status)."""
    out = []
    status = Status.OK
    for c in phi.clauses:
        kept = []
        for lit in c:
            val = assignment.get(abs(lit))
            if val is None:
                kept.append(lit)
            elif val != (lit < 0):
                break
        else:
            if not kept:
                status = Status.FALSIFIED
            out.append(tuple(kept))
    return CnfFormula(phi.num_variables, tuple(out)), status


class Component(NamedTuple):
    formula: CnfFormula  # relabelled onto 1..len(variables)
    variables: tuple  # variables[i] is the original index of local variable i+1


class Components(NamedTuple):
    parts: list
    free_variables: int


def connected_components(phi: CnfFormula) -> Components:
    """Split clauses into variable-connected groups, ordered by smallest variable."""
    parent = {}

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for vs in phi.clause_vars:
        for v in vs:
            parent.setdefault(v, v)
        it = iter(vs)
        first = next(it, None)
        for v in it:
            a, b = find(first), find(v)
            if a != b:
                parent[max(a, b)] = min(a, b)
    groups: dict[int, list[int]] = {}
    empty = []
    for i, vs in enumerate(phi.clause_vars):
        if not vs:
            empty.append(i)
            continue
        groups.setdefault(find(next(iter(vs))), []).append(i)
    parts = []
    for root in sorted(groups):
        idx = groups[root]
        vars_ = sorted({v for i in idx for v in phi.clause_vars[i]})
        local = {v: j + 1 for j, v in enumerate(vars_)}
        cl = tuple(tuple(local[abs(l)] * (-1 if l < 0 else 1) for l in phi.clauses[i]) for i in idx)
        parts.append(Component(CnfFormula(len(vars_), cl), tuple(vars_)))
    for i in empty:
        # empty clause: a component with no variables that admits no assignment
        parts.append(Component(CnfFormula(0, ((),)), ()))
    free = phi.num_variables - len(phi.occurrences)
    return Components(parts, free)


def build_variable_graph(phi: CnfFormula, varset) -> dict:
    """Adjacency on ``varset``: u ~ v iff some clause of ``phi`` holds both."""
    varset = set(varset)
    g = {v: set() for v in varset}
    for vs in phi.clause_vars:
        inside = vs & varset
        for u in inside:
            g[u].update(inside)
    for v in g:
        g[v].discard(v)
    return g


def dependency_degree(phi: CnfFormula) -> int:
    """Largest number of other clauses sharing a variable with one clause."""
    occ = phi.occurrences
    best = 0
    for i, vs in enumerate(phi.clause_vars):
        nb = {j for v in vs for j in occ[v]}
        nb.discard(i)
        best = max(best, len(nb))
    return best


class LLLVariant(enum.Enum):
    EXISTENCE = "existence"  # e (D+1) <= 2^k
    MARGINAL_BOUND = "marginal"  # e D s <= 2^k
    MARKING = "marking"  # 2 e (D+1) <= exp(k/32)
    SEED_PARTIAL = "seed"  # e (D+1) <= (32/31)^k


# rational bracket around e, width 1e-30
E_LO = Fraction(2718281828459045235360287471352, 10**30)
E_HI = E_LO + Fraction(1, 10**30)


def _e_times_at_most(coef: Fraction, rhs: Fraction) -> bool:
    """Decide e * coef <= rhs, exactly unless the bracket straddles."""
    if E_HI * coef <= rhs:
        return True
    if E_LO * coef > rhs:
        return False
    with mpmath.workdps(200):
        return mpmath.e * mpmath.mpf(coef.numerator) / coef.denominator <= mpmath.mpf(rhs.numerator) / rhs.denominator


def check_lll_condition(stats: FormulaStats, variant, s=None) -> bool:
    """Evaluate one of the local-lemma inequalities with k = k_min, D = big_d."""
    variant = LLLVariant(variant)
    k, big_d = stats.k_min, stats.big_d
    if variant is LLLVariant.EXISTENCE:
        return _e_times_at_most(Fraction(big_d + 1), Fraction(2) ** k)
    if variant is LLLVariant.MARGINAL_BOUND:
        if s is None or Fraction(s) < 1:
            raise ValueError("marginal-bound check needs s >= 1")
        return _e_times_at_most(Fraction(big_d) * Fraction(s), Fraction(2) ** k)
    if variant is LLLVariant.SEED_PARTIAL:
        return _e_times_at_most(Fraction(big_d + 1), Fraction(32, 31) ** k)
    # 2e(D+1) <= e^{k/32}  <=>  ln 2 + 1 + ln(D+1) <= k/32
    with mpmath.workdps(60):
        lhs = mpmath.log(2) + 1 + mpmath.log(big_d + 1)
        return lhs <= mpmath.mpf(k) / 32


def ceil_fraction(x) -> int:
    x = Fraction(x)
    return -((-x.numerator) // x.denominator)


def log2_fraction(x: Fraction) -> float:
    x = Fraction(x)
    return math.log2(x.numerator) - math.log2(x.denominator)
