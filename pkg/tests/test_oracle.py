import random
from collections import Counter
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from conftest import brute_count, brute_solutions, formulas, partial_assignments, tv_distance
from lllcount.cnf import CnfFormula
from lllcount.generate import gen_cnf
from lllcount.oracle import (BudgetError, NullConditionError, UnsatisfiableError, count_sat, enumerate_sat,
                             exact_marginal, exact_sample)


def test_small_counts(small_formula):
    # (x1 v x2)(~x1 v x3)(~x2 v ~x3): only TFT and FTF
    assert count_sat(small_formula) == 2
    assert count_sat(CnfFormula(2, ((1, 2),))) == 3
    assert count_sat(CnfFormula(4, ())) == 16
    assert count_sat(CnfFormula(2, ((),))) == 0


def test_marginal_values():
    phi = CnfFormula(2, ((1, 2),))
    assert exact_marginal(phi, {}, 1) == Fraction(2, 3)
    assert exact_marginal(phi, {2: False}, 1) == 1
    with pytest.raises(NullConditionError):
        exact_marginal(CnfFormula(2, ((1,),)), {1: False}, 2)
    with pytest.raises(ValueError):
        exact_marginal(phi, {1: True}, 1)


def test_budget():
    phi = CnfFormula(12, (tuple(range(1, 13)),))
    with pytest.raises(BudgetError):
        count_sat(phi, budget=10)
    assert count_sat(phi, {1: True}, budget=12) == 2 ** 11


@given(formulas(max_vars=10).flatmap(lambda f: st.tuples(st.just(f), partial_assignments(f))))
def test_count_matches_brute_force(pair):
    phi, a = pair
    assert count_sat(phi, a) == brute_count(phi, a)


@given(formulas(max_vars=8), st.integers(1, 8))
def test_partition_identity(phi, v):
    v = min(v, phi.num_variables)
    assert count_sat(phi) == count_sat(phi, {v: True}) + count_sat(phi, {v: False})


@given(formulas(max_vars=8))
def test_enumeration_is_sorted_and_complete(phi):
    sols = list(enumerate_sat(phi))
    assert sorted(sols) == sols
    assert set(sols) == set(brute_solutions(phi))
    assert len(sols) == count_sat(phi)


@given(formulas(max_vars=8), st.integers(0, 2**32))
def test_sample_is_a_solution_consistent_with_condition(phi, seed):
    rng = random.Random(seed)
    if count_sat(phi) == 0:
        with pytest.raises(UnsatisfiableError):
            exact_sample(phi, rng)
        return
    a = exact_sample(phi, rng)
    assert phi.evaluate(a)
    v = 1 + seed % phi.num_variables
    if count_sat(phi, {v: a[v - 1]}):
        b = exact_sample(phi, rng, {v: a[v - 1]})
        assert b[v - 1] == a[v - 1] and phi.evaluate(b)


def test_sampler_is_uniform():
    phi = gen_cnf(8, 2, 3, 3, seed=5)
    support = list(enumerate_sat(phi))
    rng = random.Random(0)
    counts = Counter(exact_sample(phi, rng) for _ in range(20000))
    assert set(counts) <= set(support)
    assert tv_distance(counts, support) < 0.03


def test_large_component_uses_unranking():
    # one component with more than 2^15 solutions exercises the unranking path
    phi = gen_cnf(18, 3, 3, 2, seed=1)
    rng = random.Random(3)
    for _ in range(5):
        assert phi.evaluate(exact_sample(phi, rng))
