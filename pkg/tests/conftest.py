import numpy as np
import pytest
from hypothesis import HealthCheck, settings, strategies as st

from lllcount.cnf import CnfFormula

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def brute_table(phi: CnfFormula):
    """Boolean matrix of all 2^n assignments (row r: bit v-1 of r is x_v) and the satisfied mask."""
    n = phi.num_variables
    rows = np.arange(1 << n, dtype=np.int64)
    bits = ((rows[:, None] >> np.arange(n)) & 1).astype(bool)
    ok = np.ones(len(rows), dtype=bool)
    for c in phi.clauses:
        sat = np.zeros(len(rows), dtype=bool)
        for lit in c:
            col = bits[:, abs(lit) - 1]
            sat |= col if lit > 0 else ~col
        ok &= sat
    return bits, ok


def brute_count(phi: CnfFormula, assignment=None) -> int:
    bits, ok = brute_table(phi)
    for v, b in (assignment or {}).items():
        ok &= bits[:, v - 1] == b
    return int(ok.sum())


def brute_solutions(phi: CnfFormula) -> list:
    bits, ok = brute_table(phi)
    return [tuple(bool(b) for b in row) for row in bits[ok]]


def tv_distance(counts, support) -> float:
    """Total variation between the empirical counts and uniform on ``support``."""
    total = sum(counts.values())
    support = set(support)
    u = 1 / len(support)
    inside = sum(abs(counts.get(a, 0) / total - u) for a in support)
    outside = sum(c for a, c in counts.items() if a not in support) / total
    return 0.5 * (inside + outside)


@st.composite
def formulas(draw, max_vars=8, max_clauses=8, max_width=4):
    n = draw(st.integers(1, max_vars))
    m = draw(st.integers(0, max_clauses))
    clauses = []
    for _ in range(m):
        k = draw(st.integers(1, min(max_width, n)))
        vs = draw(st.lists(st.integers(1, n), min_size=k, max_size=k, unique=True))
        clauses.append(tuple(v if draw(st.booleans()) else -v for v in vs))
    return CnfFormula(n, tuple(clauses))


@st.composite
def partial_assignments(draw, phi):
    vs = draw(st.sets(st.integers(1, phi.num_variables), max_size=phi.num_variables)) if phi.num_variables else set()
    return {v: draw(st.booleans()) for v in vs}


@pytest.fixture
def small_formula():
    return CnfFormula(3, ((1, 2), (-1, 3), (-2, -3)))
