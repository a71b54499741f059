from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from conftest import brute_count, formulas, partial_assignments
from lllcount.cnf import (ClauseCountError, CnfFormula, DimacsError, DuplicateVariableError, FormulaError,
                          FormulaStats, Literal, LiteralRangeError, LLLVariant, MalformedHeaderError, Status,
                          build_variable_graph, ceil_fraction, check_lll_condition, connected_components,
                          dependency_degree, parse_dimacs, simplify)


def test_parse_basic():
    phi = parse_dimacs("c hello\np cnf 3 2\n1 -2 0\n2 3\n0\n")
    assert phi.num_variables == 3
    assert phi.clauses == ((1, -2), (2, 3))


def test_parse_stops_at_percent():
    phi = parse_dimacs("p cnf 2 1\n1 2 0\n%\n0\n")
    assert phi.clauses == ((1, 2),)


@pytest.mark.parametrize("text, exc", [
    ("1 2 0\n", MalformedHeaderError),
    ("p cnf 2\n", MalformedHeaderError),
    ("p cnf 2 1\np cnf 2 1\n1 0\n", MalformedHeaderError),
    ("p cnf 2 1\n1 3 0\n", LiteralRangeError),
    ("p cnf 2 1\n1 -1 0\n", DuplicateVariableError),
    ("p cnf 2 2\n1 0\n", ClauseCountError),
    ("p cnf 2 1\n1 2\n", DimacsError),
    ("p cnf 2 1\n1 x 0\n", DimacsError),
    ("", MalformedHeaderError),
])
def test_parse_errors(text, exc):
    with pytest.raises(exc):
        parse_dimacs(text)


def test_error_line_numbers():
    with pytest.raises(LiteralRangeError) as info:
        parse_dimacs("p cnf 2 1\nc\n1 5 0\n")
    assert info.value.line == 3


def test_constructor_validates():
    with pytest.raises(FormulaError):
        CnfFormula(2, ((1, 3),))
    with pytest.raises(FormulaError):
        CnfFormula(2, ((1, -1),))
    with pytest.raises(FormulaError):
        CnfFormula(2, ((0,),))


def test_literal_roundtrip():
    assert int(Literal.from_int(-4)) == -4
    assert Literal.from_int(3) == Literal(3, False)


@given(formulas())
def test_dimacs_roundtrip(phi):
    assert parse_dimacs(phi.to_dimacs(["roundtrip"])) == phi


def test_stats(small_formula):
    st_ = small_formula.stats()
    assert (st_.n, st_.m, st_.d, st_.k_min, st_.k_max) == (3, 3, 2, 2, 2)
    assert st_.big_d == 1 * 2 * 2
    assert st_.width_ratio == 1
    assert CnfFormula(5, ((1, 2), (3, 4, 5))).stats().width_ratio == 2


def test_simplify_statuses():
    phi = CnfFormula(3, ((1, 2), (-1, 3)))
    out, status = simplify(phi, {1: True})
    assert out.clauses == ((3,),) and status is Status.OK
    out, status = simplify(phi, {1: True, 3: False})
    assert status is Status.FALSIFIED and () in out.clauses


@given(formulas().flatmap(lambda f: st.tuples(st.just(f), partial_assignments(f))))
def test_simplify_preserves_count(pair):
    phi, a = pair
    reduced, status = simplify(phi, a)
    assert brute_count(reduced, a) == brute_count(phi, a)
    assert (status is Status.FALSIFIED) == (() in reduced.clauses)
    for c in reduced.clauses:
        assert all(abs(l) not in a for l in c)


@given(formulas().flatmap(lambda f: st.tuples(st.just(f), partial_assignments(f))))
def test_simplify_idempotent(pair):
    phi, a = pair
    once = simplify(phi, a)[0]
    assert simplify(once, a)[0] == once


@given(formulas())
def test_components_factor_the_count(phi):
    comps = connected_components(phi)
    total = 2 ** comps.free_variables
    for part in comps.parts:
        total *= brute_count(part.formula)
    assert total == brute_count(phi)
    seen = [v for part in comps.parts for v in part.variables]
    assert len(seen) == len(set(seen))


def test_variable_graph():
    phi = CnfFormula(4, ((1, 2, 3), (3, 4)))
    g = build_variable_graph(phi, {1, 3, 4})
    assert g == {1: {3}, 3: {1, 4}, 4: {3}}


def test_dependency_degree():
    phi = CnfFormula(4, ((1, 2), (2, 3), (3, 4), (1, 4)))
    assert dependency_degree(phi) == 2


def test_lll_condition_exact_boundary():
    # e (D+1) <= 2^k: D+1 = 94 gives 255.5... <= 256, D+1 = 95 gives 258.2...
    ok = FormulaStats(0, 0, 0, 8, 8, 93)
    bad = FormulaStats(0, 0, 0, 8, 8, 94)
    assert check_lll_condition(ok, LLLVariant.EXISTENCE)
    assert not check_lll_condition(bad, LLLVariant.EXISTENCE)
    assert check_lll_condition(FormulaStats(0, 0, 0, 10, 10, 20), "marginal", 18)
    assert not check_lll_condition(FormulaStats(0, 0, 0, 10, 10, 20), "marginal", 19)
    with pytest.raises(ValueError):
        check_lll_condition(ok, LLLVariant.MARGINAL_BOUND)


def test_marking_condition_needs_wide_clauses():
    # 2e(D+1) <= e^{k/32} needs k in the hundreds
    assert not check_lll_condition(FormulaStats(0, 0, 0, 100, 100, 10), LLLVariant.MARKING)
    assert check_lll_condition(FormulaStats(0, 0, 0, 200, 200, 10), LLLVariant.MARKING)


def test_ceil_fraction():
    assert ceil_fraction(Fraction(7, 2)) == 4
    assert ceil_fraction(Fraction(-7, 2)) == -3
    assert ceil_fraction(3) == 3
