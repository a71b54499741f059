"""Stochastic decision trees over coupling states and their one-sided forms.

A two-sided tree has one node per reachable coupling state; an internal node
draws one variable y and has four children, one per joint choice
(A1(y), A2(y)).  The structure depends only on the deterministic transition
function, so it is built without any oracle.  ``annotate_probabilities``
adds maximal-coupling edge probabilities from a marginal oracle.

A one-sided tree S_j splits each four-way decision into the choice of side j
(mass copied) followed by the choice of the other side (mass split).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import NamedTuple

from .cnf import CnfFormula
from .coupling import (CHOICES, COUPLED, TRUNCATED, CouplingState, coupling_table, default_oracle,
                       factorize, is_coupled, next_to_set, root_state)
from .oracle import DEFAULT_BUDGET, NullConditionError, count_sat, exact_marginal

INTERNAL = "internal"
DEFAULT_NODE_BUDGET = 200_000


class TreeBudgetError(RuntimeError):
    def __init__(self, budget: int, nodes: int, depth: int):
        super().__init__(f"decision tree exceeds {budget} nodes (built {nodes}, depth reached {depth})")
        self.budget = budget
        self.nodes = nodes
        self.depth = depth


class DegeneratePathError(ArithmeticError):
    def __init__(self, leaf: int, side: int):
        super().__init__(f"zero-probability own-side choice on the path to leaf {leaf} (side {side})")
        self.leaf = leaf
        self.side = side


@dataclass
class TreeNode:
    state: CouplingState
    y: int | None
    kind: str
    parent: int | None = None
    edge: tuple | None = None
    depth: int = 0
    children: dict = field(default_factory=dict)


@dataclass
class StochasticTree:
    phi: CnfFormula
    x: int
    marking: frozenset
    tau: int | None
    nodes: list
    probs: dict | None = None
    poisoned: frozenset = frozenset()
    root: int = 0

    def leaves(self) -> list:
        return [i for i, nd in enumerate(self.nodes) if nd.kind != INTERNAL]

    def internal(self) -> list:
        return [i for i, nd in enumerate(self.nodes) if nd.kind == INTERNAL]

    def path(self, leaf: int) -> list:
        """[(node, choice taken), ...] from the root down to ``leaf``."""
        out = []
        u = leaf
        while self.nodes[u].parent is not None:
            out.append((self.nodes[u].parent, self.nodes[u].edge))
            u = self.nodes[u].parent
        return out[::-1]

    def path_probability(self, leaf: int) -> Fraction:
        p = Fraction(1)
        for u, choice in self.path(leaf):
            p *= self.probs[u][choice]
        return p

    def to_json(self) -> dict:
        nodes = []
        for i, nd in enumerate(self.nodes):
            entry = {
                "id": i,
                "parent": nd.parent,
                "edge": None if nd.edge is None else "".join("T" if b else "F" for b in nd.edge),
                "kind": nd.kind,
                "y": nd.y,
                "state": nd.state.to_json(),
                "children": {"".join("T" if b else "F" for b in ch): j for ch, j in nd.children.items()},
            }
            if self.probs is not None and i in self.probs:
                entry["probs"] = {"".join("T" if b else "F" for b in ch): _frac_str(p)
                                  for ch, p in self.probs[i].items()}
                entry["poisoned"] = i in self.poisoned
            nodes.append(entry)
        return {"x": self.x, "tau": self.tau, "marking": sorted(self.marking), "nodes": nodes}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def _frac_str(p: Fraction) -> str:
    return f"{p.numerator}/{p.denominator}"


def build_tree(phi: CnfFormula, x: int, marking, tau=None, node_budget: int = DEFAULT_NODE_BUDGET) -> StochasticTree:
    """Explicit tree of every reachable coupling state (breadth-first ids)."""
    if node_budget <= 0:
        raise ValueError("node_budget must be positive")
    if tau is not None and tau < 1:
        raise ValueError("tau must be at least 1")
    marking = frozenset(marking)
    nodes: list[TreeNode] = []

    def make(state, parent, edge, depth):
        y, state = next_to_set(state, phi, marking, tau)
        if y is None:
            kind = COUPLED if is_coupled(state, phi) else TRUNCATED
        else:
            kind = INTERNAL
        nodes.append(TreeNode(state, y, kind, parent, edge, depth))
        if len(nodes) > node_budget:
            raise TreeBudgetError(node_budget, len(nodes), depth)
        return len(nodes) - 1

    make(root_state(phi, x), None, None, 0)
    head = 0
    while head < len(nodes):
        nd = nodes[head]
        if nd.kind == INTERNAL:
            for choice in CHOICES:
                child = nd.state.with_setting(nd.y, *choice)
                nd.children[choice] = make(child, head, choice, nd.depth + 1)
        head += 1
    return StochasticTree(phi, x, marking, tau, nodes)


def annotate_probabilities(tree: StochasticTree, marginal_oracle=None) -> StochasticTree:
    """Attach maximal-coupling edge probabilities computed from the oracle's D1(y), D2(y).

    A node where D1 or D2 conditions on an empty set gets all-zero edges and is
    recorded as poisoned; reaching one with positive probability is an error.
    """
    oracle = marginal_oracle or default_oracle
    phi = tree.phi
    probs = {}
    poisoned = set()
    reach = {tree.root: Fraction(1)}
    for u, nd in enumerate(tree.nodes):
        if nd.kind != INTERNAL:
            continue
        try:
            p1 = oracle(phi, nd.state.a1, nd.y)
            p2 = oracle(phi, nd.state.a2, nd.y)
            table = coupling_table(p1, p2)
        except NullConditionError:
            if reach[u] > 0:
                raise
            poisoned.add(u)
            table = {ch: Fraction(0) for ch in CHOICES}
        probs[u] = table
        for ch, child in nd.children.items():
            reach[child] = reach[u] * table[ch]
    return replace(tree, probs=probs, poisoned=frozenset(poisoned))


def side_product(tree: StochasticTree, leaf: int, side: int) -> Fraction:
    """Product over the path of P(taken) / P(same own-side choice), for side 1 or 2.

    An own-side choice of probability zero keeps all mass on the agreeing
    child, the same convention the one-sided trees use; nothing is consistent
    with such a path, so its count is zero either way.
    """
    p = Fraction(1)
    for u, (a1, a2) in tree.path(leaf):
        if not p:
            return p
        table = tree.probs[u]
        alt = (a1, not a2) if side == 1 else (not a1, a2)
        den = table[(a1, a2)] + table[alt]
        p *= (a1 == a2) if den == 0 else table[(a1, a2)] / den
    return p


def path_products(tree: StochasticTree, leaf: int) -> tuple:
    if tree.probs is None:
        raise ValueError("tree has no probabilities")
    return side_product(tree, leaf, 1), side_product(tree, leaf, 2)


@dataclass
class OneSidedEdge:
    parent: tuple
    child: tuple
    kind: str  # "copy" or "split"
    node: int  # two-sided node whose decision this edge belongs to
    own: bool  # this side's value of y
    flip: bool = False  # split edge where the other side disagrees


@dataclass
class OneSidedTree:
    side: int
    edges: list
    into: dict  # node key -> index of its incoming edge
    mass: list | None = None

    def leaf_edge(self, leaf: int):
        return self.into.get(("s", leaf))

    def leaf_mass(self, leaf: int) -> Fraction:
        e = self.leaf_edge(leaf)
        return Fraction(1) if e is None else self.mass[e]


class MatchedLeafPair(NamedTuple):
    leaf: int  # two-sided leaf; S1 and S2 leaves are keyed by it
    leaf_in_s1: int | None  # incoming edge index in S1, None for a root leaf
    leaf_in_s2: int | None
    p1: Fraction | None
    p2: Fraction | None
    n1: int | None
    n2: int | None
    coupled: bool


def _one_sided(tree: StochasticTree, side: int) -> OneSidedTree:
    edges, into = [], {}
    mass = [] if tree.probs is not None else None
    state_mass = {tree.root: Fraction(1)}
    for u in tree.internal():
        nd = tree.nodes[u]
        z = state_mass.get(u) if mass is not None else None
        for own in (True, False):
            mid = ("m", u, own)
            into[mid] = len(edges)
            edges.append(OneSidedEdge(("s", u), mid, "copy", u, own))
            if mass is not None:
                mass.append(z)
            weights = {}
            for other in (own, not own):
                ch = (own, other) if side == 1 else (other, own)
                weights[other] = tree.probs[u][ch] if mass is not None else None
            den = sum(weights.values()) if mass is not None else None
            for other in (own, not own):
                ch = (own, other) if side == 1 else (other, own)
                child = nd.children[ch]
                into[("s", child)] = len(edges)
                edges.append(OneSidedEdge(mid, ("s", child), "split", u, own, flip=other != own))
                if mass is not None:
                    if z == 0:
                        m = Fraction(0)
                    elif den == 0:
                        # own choice impossible: every split is vacuous, keep the mass on agreement
                        m = z if other == own else Fraction(0)
                    else:
                        m = z * weights[other] / den
                    mass.append(m)
                    state_mass[child] = m
    return OneSidedTree(side, edges, into, mass)


def to_one_sided(tree: StochasticTree, with_counts: bool = False, budget: int = DEFAULT_BUDGET):
    """Return (S1, S2, matching); masses are filled in when the tree is annotated."""
    s1, s2 = _one_sided(tree, 1), _one_sided(tree, 2)
    matching = []
    for leaf in tree.leaves():
        coupled = tree.nodes[leaf].kind == COUPLED
        counts = leaf_counts(tree.phi, tree, leaf, budget) if with_counts else None
        n1, n2 = counts if counts else (None, None)
        p1 = s1.leaf_mass(leaf) if s1.mass is not None else None
        p2 = s2.leaf_mass(leaf) if s2.mass is not None else None
        matching.append(MatchedLeafPair(leaf, s1.leaf_edge(leaf), s2.leaf_edge(leaf), p1, p2, n1, n2, coupled))
    return s1, s2, matching


def leaf_counts(phi: CnfFormula, tree: StochasticTree, leaf: int, budget: int = DEFAULT_BUDGET):
    """Inner-side counts (N1, N2): satisfying assignments of Phi_I1 / Phi_I2 over the unset V_I variables.

    The shared Phi_O factor is left out, so only the ratio N1/N2 is meaningful.
    Returns None for truncated leaves.
    """
    nd = tree.nodes[leaf]
    if nd.kind != COUPLED:
        return None
    _, _, phi_i1, phi_i2, _ = factorize(phi, nd.state)
    values = nd.state.values
    unset_inner = sum(1 for v in nd.state.v_inner if v not in values)
    shift = phi.num_variables - unset_inner
    n1 = count_sat(phi_i1, budget=budget)
    n2 = count_sat(phi_i2, budget=budget)
    assert n1 % (1 << shift) == 0 and n2 % (1 << shift) == 0
    return n1 >> shift, n2 >> shift


def _degenerate(tree, leaf, side) -> bool:
    """A zero-probability own-side choice is met before the product vanishes."""
    p = Fraction(1)
    for u, (a1, a2) in tree.path(leaf):
        if not p:
            return False
        table = tree.probs[u]
        alt = (a1, not a2) if side == 1 else (not a1, a2)
        den = table[(a1, a2)] + table[alt]
        if den == 0:
            return True
        p *= table[(a1, a2)] / den
    return False


def _side_checked(tree, leaf, side, count):
    if count and _degenerate(tree, leaf, side):
        raise DegeneratePathError(leaf, side)
    return side_product(tree, leaf, side)


def balance_terms(phi: CnfFormula, tree: StochasticTree, q: Fraction, include_truncated: bool = False,
                  budget: int = DEFAULT_BUDGET):
    """Per leaf: (leaf, p1*N1, p2*N2) with N_j the full counts consistent with A_j."""
    out = []
    for leaf in tree.leaves():
        nd = tree.nodes[leaf]
        if nd.kind != COUPLED and not include_truncated:
            continue
        n1 = count_sat(phi, nd.state.a1, budget)
        n2 = count_sat(phi, nd.state.a2, budget)
        p1 = _side_checked(tree, leaf, 1, n1)
        p2 = _side_checked(tree, leaf, 2, n2)
        out.append((leaf, p1 * n1, p2 * n2))
    return out


def check_balance(phi: CnfFormula, tree: StochasticTree, marginal_oracle=None, include_truncated: bool = False,
                  budget: int = DEFAULT_BUDGET) -> Fraction:
    """max |p1 N1 (1 - q) - p2 N2 q| over leaves; exactly zero for exact-oracle trees."""
    if tree.probs is None:
        raise ValueError("tree has no probabilities")
    if marginal_oracle is None:
        q = exact_marginal(phi, {}, tree.x, budget)
    else:
        q = Fraction(marginal_oracle(phi, {}, tree.x))
    worst = Fraction(0)
    for _, m1, m2 in balance_terms(phi, tree, q, include_truncated, budget):
        worst = max(worst, abs(m1 * (1 - q) - m2 * q))
    return worst
