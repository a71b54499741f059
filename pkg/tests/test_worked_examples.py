"""Small hand-checkable cases, one per documented behaviour."""
import random
from collections import Counter
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from conftest import tv_distance
from lllcount.certify import LpInstance, LpRow, _Block, build_lp, certify_marginal, solve_feasibility
from lllcount.cli import main
from lllcount.cnf import (CnfFormula, DuplicateVariableError, FormulaStats, LLLVariant, Status, build_variable_graph,
                          check_lll_condition, connected_components, parse_dimacs, simplify)
from lllcount.coupling import (COUPLED, couple_step, coupling_table, decision_tree_sampling, error_ledger, max_3tree,
                               next_to_set, root_state, run_coupling, verify_factorization)
from lllcount.dtree import (annotate_probabilities, build_tree, check_balance, balance_terms, leaf_counts,
                            path_products, side_product, to_one_sided)
from lllcount.generate import gen_cnf
from lllcount.inference import AND, OR, CauseNetwork, check_regular, posterior_sample, preprocess, sample_forward
from lllcount.lll import (DEFAULT_BETA, DEFAULT_SEED_PROBS, InfeasibleError, MarginalBoundParams, ResampleConfig,
                          ResampleLimitError, check_marking, check_seed_partial, existence_condition, find_marking,
                          find_seed_partial, marginal_bounds, moser_tardos)
from lllcount.oracle import count_sat, enumerate_sat, exact_marginal, exact_sample
from lllcount.pipeline import MarginalOracleHandle, SampleConfig, approx_count, approx_sample

OR2 = CnfFormula(2, ((1, 2),))
# invariant under flipping every variable, so every marginal is 1/2
SYMMETRIC = CnfFormula(8, ((1, 2, 3, 4), (-1, -2, -3, -4), (5, 6, 7, 8), (-5, -6, -7, -8)))
SYMMETRIC_MARKING = frozenset({1, 2, 5, 6})


# parsing and simplification

def test_parse_examples():
    assert parse_dimacs("p cnf 2 1\n1 2 0").clauses == ((1, 2),)
    with pytest.raises(DuplicateVariableError):
        parse_dimacs("p cnf 1 1\n1 -1 0")
    st_ = parse_dimacs("p cnf 3 2\n1 -2 3 0\n-1 2 0").stats()
    assert (st_.d, st_.k_min, st_.k_max) == (2, 2, 3)


def test_simplify_examples():
    phi = CnfFormula(3, ((1, 2), (-1, 3)))
    assert simplify(phi, {1: True}) == (CnfFormula(3, ((3,),)), Status.OK)
    reduced, status = simplify(OR2, {1: False, 2: False})
    assert reduced.clauses == ((),) and status is Status.FALSIFIED
    assert simplify(OR2, {}) == (OR2, Status.OK)


def test_component_examples():
    assert len(connected_components(CnfFormula(4, ((1, 2), (3, 4)))).parts) == 2
    assert len(connected_components(CnfFormula(3, ((1, 2), (2, 3)))).parts) == 1
    empty = connected_components(CnfFormula(5))
    assert empty.parts == [] and empty.free_variables == 5


def test_condition_examples():
    assert check_lll_condition(FormulaStats(0, 0, 0, 10, 10, 100), LLLVariant.EXISTENCE)
    assert not check_lll_condition(FormulaStats(0, 0, 0, 8, 8, 100), LLLVariant.EXISTENCE)
    assert check_lll_condition(FormulaStats(0, 0, 0, 20, 20, 100), LLLVariant.MARGINAL_BOUND, 100)


def test_variable_graph_examples():
    assert build_variable_graph(CnfFormula(3, ((1, 2),)), {1, 2, 3}) == {1: {2}, 2: {1}, 3: set()}
    assert build_variable_graph(CnfFormula(3, ((1, 2), (2, 3))), {1, 3}) == {1: set(), 3: set()}
    assert build_variable_graph(CnfFormula(3, ((1, 2, 3),)), {1, 2, 3}) == {1: {2, 3}, 2: {1, 3}, 3: {1, 2}}


# exact oracle

def test_count_and_marginal_examples():
    assert count_sat(CnfFormula(3)) == 8
    assert count_sat(OR2) == 3
    assert count_sat(CnfFormula(1, ((1,), (-1,)))) == 0
    assert exact_marginal(OR2, {}, 1) == Fraction(2, 3)
    assert exact_marginal(OR2, {2: False}, 1) == 1


def test_sample_examples():
    rng = random.Random(0)
    assert {exact_sample(CnfFormula(2, ((1,), (2,))), rng) for _ in range(50)} == {(True, True)}
    ones = sum(exact_sample(CnfFormula(1), rng)[0] for _ in range(10_000))
    assert abs(ones / 10_000 - 0.5) < 0.02
    c = Counter(exact_sample(OR2, rng) for _ in range(10_000))
    assert all(abs(c[a] / 10_000 - 1 / 3) < 0.02 for a in [(True, True), (True, False), (False, True)])


def test_enumeration_examples():
    assert list(enumerate_sat(OR2)) == [(False, True), (True, False), (True, True)]
    assert list(enumerate_sat(CnfFormula(1, ((1,), (-1,))))) == []
    phi = gen_cnf(12, 3, 3, 3, seed=4)
    assert sum(1 for _ in enumerate_sat(phi)) == count_sat(phi)


# local-lemma constructions

def test_resampling_examples():
    assert moser_tardos(CnfFormula(1, ((1,),)), rng=random.Random(5)) == (True,)
    with pytest.raises(ResampleLimitError):
        moser_tardos(CnfFormula(1, ((1,), (-1,))), ResampleConfig(max_resamples=1000))
    phi = gen_cnf(40, 8, 8, 2, seed=1)
    assert existence_condition(phi)
    assert phi.evaluate(moser_tardos(phi, rng=random.Random(1)))


def test_marking_examples():
    phi = gen_cnf(32, 8, 8, 2, seed=2)
    marking = find_marking(phi, rng=random.Random(2))
    assert all(2 <= len(vs & marking) <= 6 for vs in phi.clause_vars) and check_marking(phi, marking) == []
    one = find_marking(OR2, Fraction(1, 2), rng=random.Random(0))
    assert len(one) == 1
    with pytest.raises(InfeasibleError):
        find_marking(CnfFormula(3, ((1, 2, 3),)), Fraction(1, 2))


def test_seed_partial_examples():
    phi = CnfFormula(4, ((1, 2, 3, 4),))
    a = find_seed_partial(phi, beta=Fraction(1, 2), rng=random.Random(0))
    assert any(a.get(v) for v in (1, 2, 3, 4)) and sum(v not in a for v in (1, 2, 3, 4)) >= 2
    with pytest.raises(InfeasibleError):
        find_seed_partial(phi, beta=Fraction(7, 8))  # ceil(7/8 * 4) = 4: nothing left to satisfy it


def test_seed_partial_default_parameters_on_width_eight():
    for seed in range(100):
        phi = gen_cnf(32, 8, 8, 2, monotone=True, seed=seed)
        a = find_seed_partial(phi, DEFAULT_SEED_PROBS, DEFAULT_BETA, rng=random.Random(seed))
        assert check_seed_partial(phi, a, DEFAULT_BETA) == []


def test_marginal_bound_examples():
    b = marginal_bounds(MarginalBoundParams(20, 100, Fraction(100)))
    assert (b.lo, b.hi) == (Fraction(48, 100), Fraction(52, 100)) and b.condition_holds
    b = marginal_bounds(MarginalBoundParams(20, 100, Fraction(8)))
    assert (b.lo, b.hi) == (Fraction(1, 4), Fraction(3, 4))


# coupling

def test_transition_examples():
    phi = CnfFormula(3, ((1, 2, 3),))
    y, state = next_to_set(root_state(phi, 1), phi, frozenset({2}))
    assert (state.current, y) == (0, 2)
    # x2 set and agreeing makes the clause true on both sides; x1 is the one disagreeing variable
    y, state = next_to_set(state.with_setting(2, True, True), phi, frozenset({2}))
    assert y is None and state.v_inner == {1} and state.remaining == frozenset()


def test_coupling_table_examples():
    assert coupling_table(Fraction(1, 2), Fraction(1, 2)) == {(True, True): Fraction(1, 2), (False, False): Fraction(1, 2),
                                                             (True, False): 0, (False, True): 0}
    t = coupling_table(Fraction(3, 5), Fraction(1, 2))
    assert (t[(True, True)], t[(False, False)], t[(True, False)]) == (Fraction(1, 2), Fraction(2, 5), Fraction(1, 10))
    t = coupling_table(Fraction(1, 2), Fraction(3, 5))
    assert t[(False, True)] == Fraction(1, 10) and t[(True, False)] == 0


def test_run_coupling_examples():
    phi = CnfFormula(3, ((2, 3),))
    outcome, ledger = run_coupling(phi, 1, frozenset({2}))
    assert outcome.terminated == COUPLED and outcome.v_inner == {1}
    assert outcome.phi_i1.clauses == outcome.phi_i2.clauses == () and outcome.phi_o == phi
    assert ledger.type1 == {1} and ledger.type2 == frozenset()
    for seed in range(20):
        outcome, _ = run_coupling(OR2, 1, frozenset({2}), rng=random.Random(seed))
        assert outcome.terminated == COUPLED and outcome.v_inner <= {1, 2}


def test_ledger_records_disagreement():
    phi = CnfFormula(3, ((1, 2, 3),))
    marking = frozenset({2})
    # x2 has marginal 1/2 under x1 = T and 2/3 under x1 = F, so the sides sometimes disagree
    seen = set()
    for seed in range(40):
        outcome, ledger = run_coupling(phi, 1, marking, rng=random.Random(seed))
        assert error_ledger(phi, marking, outcome) == ledger
        if outcome.a1[2] != outcome.a2[2]:
            assert 2 in ledger.type1
            seen.add(seed)
    assert seen
    rng = random.Random(0)
    assert {couple_step(Fraction(1, 2), Fraction(2, 3), rng) for _ in range(200)} == {
        (True, True), (False, False), (False, True)}


def test_factorization_diagnostics():
    phi = CnfFormula(3, ((1, 2), (2, 3)))
    outcome, _ = run_coupling(phi, 1, frozenset({2}), rng=random.Random(0))
    assert verify_factorization(phi, outcome) == (True, None)
    shared = outcome._replace(phi_i1=CnfFormula(3, ((3,),)), phi_o=CnfFormula(3, ((3,),)))
    ok, why = verify_factorization(phi, shared)
    assert not ok and why.startswith("(b)")
    apart = outcome._replace(a1={**outcome.a1, 3: True}, a2={**outcome.a2, 3: False})
    ok, why = verify_factorization(phi, apart)
    assert not ok and why.startswith("(a)")


def test_decision_tree_sampling_examples():
    rng = random.Random(1)
    assert {decision_tree_sampling(CnfFormula(1, ((1,),)), 1, frozenset(), rng=rng) for _ in range(30)} == {(True,)}
    c = Counter(decision_tree_sampling(CnfFormula(2), 1, frozenset({2}), rng=rng) for _ in range(10_000))
    assert tv_distance(c, [(a, b) for a in (False, True) for b in (False, True)]) < 0.02
    c = Counter(decision_tree_sampling(OR2, 1, frozenset({2}), rng=rng) for _ in range(10_000))
    assert tv_distance(c, list(enumerate_sat(OR2))) < 0.02


def test_three_tree_examples():
    assert max_3tree({5: set()}, 5).vertices == {5}
    path = {i: {j for j in (i - 1, i + 1) if 1 <= j <= 7} for i in range(1, 8)}
    assert max_3tree(path, 1).vertices == {1, 4, 7}


# decision trees

def test_tree_shape_examples():
    assert len(build_tree(CnfFormula(2, ((2,),)), 1, frozenset({2})).nodes) == 1
    tree = build_tree(OR2, 1, frozenset({2}))
    assert tree.nodes[0].y == 2 and len(tree.nodes) == 5
    assert all(tree.nodes[c].kind == COUPLED for c in tree.nodes[0].children.values())
    s1, s2, _ = to_one_sided(tree)
    assert len(s1.edges) + len(s2.edges) == 12
    assert sum(e.kind == "copy" for e in s1.edges) == 2


def test_side_product_example():
    tree = annotate_probabilities(build_tree(OR2, 1, frozenset({2})))
    root = tree.nodes[0]
    # D1(x2) = 1/2 (x1 = T frees x2), D2(x2) = 1: couple to (T,T)=1/2, (F,T)=1/2
    assert tree.probs[0][(True, True)] == Fraction(1, 2) and tree.probs[0][(False, True)] == Fraction(1, 2)
    tt = root.children[(True, True)]
    assert side_product(tree, tt, 1) == 1
    assert side_product(tree, tt, 2) == Fraction(1, 2)
    p = {(True, True): Fraction(1, 2), (True, False): Fraction(1, 10), (False, True): 0, (False, False): Fraction(2, 5)}
    tree.probs[0] = p
    assert side_product(tree, tt, 1) == Fraction(5, 6)


def test_perfect_coupling_gives_unit_products():
    tree = annotate_probabilities(build_tree(OR2, 1, frozenset({2})))
    tree.probs[0] = {(True, True): Fraction(1, 2), (False, False): Fraction(1, 2), (True, False): 0, (False, True): 0}
    s1, _, matching = to_one_sided(tree)
    for pair in matching:
        if pair.p1 is not None and path_products(tree, pair.leaf)[0]:
            assert path_products(tree, pair.leaf) == (1, 1)
    assert {m for e, m in zip(s1.edges, s1.mass) if e.kind == "split"} <= {0, 1}


def test_leaf_count_ratio_example():
    # nothing marked: Case #2 pulls x2 in; Phi_I1 is empty and Phi_I2 = (x2)
    tree = build_tree(OR2, 1, frozenset())
    assert tree.leaves() == [0]
    assert leaf_counts(OR2, tree, 0) == (2, 1)
    assert check_balance(OR2, annotate_probabilities(tree)) == 0


def test_policy_sum_example():
    for seed in range(5):
        phi = gen_cnf(9, 3, 4, 2, seed=seed)
        marking = find_marking(phi, rng=random.Random(seed))
        x = min(marking)
        tree = annotate_probabilities(build_tree(phi, x, marking, tau=9))
        terms = balance_terms(phi, tree, exact_marginal(phi, {}, x))
        assert sum(m1 for _, m1, _ in terms) == count_sat(phi, {x: True})


def test_symmetric_balance_and_perturbation():
    tree = annotate_probabilities(build_tree(SYMMETRIC, 1, SYMMETRIC_MARKING))
    assert exact_marginal(SYMMETRIC, {}, 1) == Fraction(1, 2)
    for _, m1, m2 in balance_terms(SYMMETRIC, tree, Fraction(1, 2)):
        assert m1 == m2
    u = tree.internal()[0]
    table = dict(tree.probs[u])
    big = max(table, key=table.get)
    small = next(ch for ch in table if ch != big)
    table[big] -= Fraction(1, 1000)
    table[small] += Fraction(1, 1000)
    tree.probs[u] = table
    assert check_balance(SYMMETRIC, tree) != 0


# certification

def _lp(rows, n):
    return LpInstance([f"z{i}" for i in range(n)], _Block(rows), [])


def test_tiny_systems():
    # z0 = z, z1 + z2 = z, z2 <= 0.04 z
    rows = [LpRow({0: 1}, "==", 1, "root"), LpRow({1: 1, 2: 1, 0: -1}, "==", 0, "split"),
            LpRow({2: 25, 0: -1}, "<=", 0, "cap")]
    assert solve_feasibility(_lp(rows, 3)).feasible
    assert solve_feasibility(_lp(rows, 3), backend="exact").feasible
    rows = [LpRow({0: 1}, "==", 1, "root"), LpRow({0: 2}, "<=", 1, "half")]
    assert not solve_feasibility(_lp(rows, 1)).feasible
    assert not solve_feasibility(_lp(rows, 1), backend="exact").feasible


def test_symmetric_lp_windows():
    tree = annotate_probabilities(build_tree(SYMMETRIC, 1, SYMMETRIC_MARKING))
    s1, s2, matching = to_one_sided(tree, with_counts=True)
    lp = build_lp(s1, s2, matching, Fraction(1, 2), Fraction(1, 2), 8)
    assert lp.violations(s1.mass + s2.mass, 0) == []
    assert solve_feasibility(build_lp(s1, s2, matching, Fraction(49, 100), Fraction(51, 100), 8)).feasible
    assert not solve_feasibility(build_lp(s1, s2, matching, Fraction(60, 100), Fraction(61, 100), 8)).feasible


def test_truncated_tree_has_no_leaf_rows():
    phi = gen_cnf(9, 4, 6, 2, seed=1)
    marking = find_marking(phi, rng=random.Random(1))
    tree = build_tree(phi, min(marking), marking, tau=1)
    s1, s2, matching = to_one_sided(tree, with_counts=True)
    assert not any(p.coupled for p in matching)
    for lo, hi in ((0, Fraction(1, 100)), (Fraction(99, 100), 1)):
        lp = build_lp(s1, s2, matching, lo, hi, 8)
        assert lp.extra == [] and solve_feasibility(lp).feasible


def test_certified_interval_examples():
    iv = certify_marginal(SYMMETRIC, 1, SYMMETRIC_MARKING)
    assert iv.contains(Fraction(1, 2)) and iv.hi - iv.lo <= Fraction(6, 100)
    # y unmarked: the tree is one coupled leaf and only the count ratio constrains q
    assert certify_marginal(OR2, 1, frozenset()).contains(Fraction(2, 3))


_tree = annotate_probabilities(build_tree(SYMMETRIC, 1, SYMMETRIC_MARKING))
_sides = to_one_sided(_tree, with_counts=True)


@settings(max_examples=40)
@given(st.lists(st.fractions(0, 1, max_denominator=40), min_size=4, max_size=4))
def test_tightening_never_creates_feasibility(qs):
    a, b, c, d = sorted(qs)
    inner = solve_feasibility(build_lp(*_sides, b, c, 8)).feasible
    outer = solve_feasibility(build_lp(*_sides, a, d, 8)).feasible
    assert outer or not inner


# pipeline

def test_count_examples():
    est = approx_count(CnfFormula(4))
    assert est.t == 0 and est.value == 16
    assert approx_count(OR2).value == 3


def test_certified_count_within_per_step_bound():
    for seed in range(5):
        phi = gen_cnf(10, 4, 6, 2, monotone=True, seed=seed)
        est = approx_count(phi, MarginalOracleHandle.certified())
        rel = abs(est.value / count_sat(phi) - 1)
        assert rel <= Fraction(105, 100) ** est.t - 1


def test_sampling_examples():
    rng = random.Random(3)
    draws = [approx_sample(CnfFormula(3, ((1,),)), rng=rng, cfg=SampleConfig(infeasible_marking="empty"))
             for _ in range(2000)]
    assert all(d[0] for d in draws)
    assert abs(sum(d[1] for d in draws) / 2000 - 0.5) < 0.05
    c = Counter(approx_sample(CnfFormula(3), rng=rng) for _ in range(10_000))
    cube = [(a, b, e) for a in (False, True) for b in (False, True) for e in (False, True)]
    assert tv_distance(c, cube) < 0.03
    phi = CnfFormula(4, ((1, 2), (3, 4)))
    c = Counter(approx_sample(phi, rng=rng) for _ in range(10_000))
    assert tv_distance(c, list(enumerate_sat(phi))) <= 0.02


# inference

def test_evaluation_examples():
    assert CauseNetwork(1, ((OR, (1,)),)).evaluate((True,)) == (True,)
    assert CauseNetwork(1, ((OR, (1,)),)).evaluate((False,)) == (False,)
    assert CauseNetwork(2, ((AND, (1, -2)),)).evaluate((True, False)) == (True,)


def test_observation_frequencies_match_analytic():
    net = CauseNetwork(9, ((OR, (1, 2)), (OR, (3, 4, 5)), (AND, (6, 7)), (OR, (8,))))
    rng = random.Random(0)
    obs = [sample_forward(net, rng)[1] for _ in range(10_000)]
    expected = [1 - 2 ** -2, 1 - 2 ** -3, 2 ** -2, 1 / 2]
    for i, p in enumerate(expected):
        assert abs(sum(o[i] for o in obs) / 10_000 - p) < 0.02


def test_regularity_examples():
    net = CauseNetwork(4, ((OR, (1, 2)), (AND, (2, 3)), (OR, (3, 4))))
    assert check_regular(net, (True, False, True))[0]
    # k = 16: one observation sharing a variable with 16 false ORs
    wide = [(OR, tuple(range(1, 17)))]
    for j in range(16):
        wide.append((OR, (j + 1,) + tuple(range(17 + 15 * j, 17 + 15 * (j + 1)))))
    big = CauseNetwork(17 + 15 * 16, tuple(wide))
    obs = (True,) + (False,) * 16
    regular, report = check_regular(big, obs)
    assert report["limit"] == 15 and not regular


def test_preprocess_examples():
    forced, residual = preprocess(CauseNetwork(2, ((OR, (1, 2)),)), (False,))
    assert forced == {1: False, 2: False} and residual.clauses == ()
    _, residual = preprocess(CauseNetwork(2, ((AND, (1, -2)),)), (False,))
    assert residual.clauses == ((-1, 2),)


def test_posterior_examples():
    net = CauseNetwork(2, ((OR, (1, 2)),))
    rng = random.Random(4)
    c = Counter(posterior_sample(net, (True,), rng=rng) for _ in range(10_000))
    assert tv_distance(c, [(True, True), (True, False), (False, True)]) <= 0.02
    forced = CauseNetwork(3, ((AND, (1, -2, 3)),))
    assert {posterior_sample(forced, (True,), rng=rng) for _ in range(20)} == {(True, False, True)}


# generator and CLI

def test_generator_examples():
    phi = gen_cnf(6, 2, 2, 1, monotone=True, seed=0)
    assert len(phi.clauses) == 3 and sorted(v for vs in phi.clause_vars for v in vs) == [1, 2, 3, 4, 5, 6]
    st_ = gen_cnf(10, 3, 3, 2, seed=0).stats()
    assert st_.k_min == st_.k_max == 3 and st_.d <= 2
    assert gen_cnf(10, 3, 3, 2, seed=9).to_dimacs() == gen_cnf(10, 3, 3, 2, seed=9).to_dimacs()


def test_cli_cross_command_examples(tmp_path, capsys):
    import json
    for seed in range(3):
        path = tmp_path / f"g{seed}.cnf"
        path.write_text(gen_cnf(10 + seed, 4, 6, 2, seed=seed).to_dimacs())
        assert main(["oracle", "count", str(path)]) == 0
        exact = int(capsys.readouterr().out)
        assert main(["count", str(path), "--oracle", "exact"]) == 0
        assert Fraction(json.loads(capsys.readouterr().out)["estimate"]) == exact
        assert main(["oracle", "marginal", str(path), "--var", "1"]) == 0
        q = Fraction(json.loads(capsys.readouterr().out)["marginal"])
        assert main(["certify", str(path), "--var", "1", "--grid-eps", "1/100"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert Fraction(out["lo"]) <= q <= Fraction(out["hi"])
