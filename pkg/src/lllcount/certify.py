"""LP-feasibility certification of a variable's marginal.

For a window [q_lo, q_hi] we ask whether edge masses exist on the two
one-sided trees such that every flip is capped at (4/s) of its parent mass and
every coupled leaf satisfies

    q_lo/(1-q_lo) * p2 N2  <=  p1 N1  <=  q_hi/(1-q_hi) * p2 N2.

The true masses are a solution whenever the window holds the true marginal and
the true flips respect the cap, so a feasible window certifies an interval.

Two backends: scipy's HiGHS for speed, and an exact rational simplex.  A float
"feasible" answer is re-checked against every constraint; a float "infeasible"
answer is accepted only with a Farkas certificate verified in rationals.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import csr_matrix, hstack, vstack

from .cnf import CnfFormula
from .dtree import DEFAULT_NODE_BUDGET, INTERNAL, OneSidedTree, build_tree, to_one_sided
from .oracle import DEFAULT_BUDGET

EXACT_LIMIT = 400  # largest variable count handed to the rational simplex


class NumericalFailure(RuntimeError):
    pass


class CertificationError(RuntimeError):
    pass


class LpRow(NamedTuple):
    coeffs: dict  # variable index -> int
    sense: str  # "==" or "<="
    rhs: int
    label: str

    @property
    def scale(self) -> int:
        return max((abs(c) for c in self.coeffs.values()), default=0) or abs(self.rhs) or 1


@dataclass
class _Block:
    """Rows shared between LP instances, with their float form cached."""
    rows: list
    _arrays: dict = field(default_factory=dict)

    def arrays(self, nvars: int):
        if nvars not in self._arrays:
            self._arrays[nvars] = _to_sparse(self.rows, nvars)
        return self._arrays[nvars]


@dataclass
class LpInstance:
    """Integer-coefficient feasibility system over 0 <= x_i <= 1.

    The upper bounds are implied (no edge mass exceeds the root mass) and only
    help the float solver.
    """
    names: list
    base: _Block
    extra: list

    @property
    def rows(self) -> list:
        return self.base.rows + self.extra

    @property
    def num_variables(self) -> int:
        return len(self.names)

    def violations(self, x, tol=Fraction(1, 10**9)) -> list:
        """Labels of rows violated by more than ``tol`` after scaling each row to unit max coefficient.

        Evaluated exactly over the rationals, independently of the solver's arrays.
        """
        xs = [Fraction(v) for v in x]
        tol = Fraction(tol)
        bad = [f"bound x{i}" for i, v in enumerate(xs) if v < -tol or v > 1 + tol]
        for row in self.rows:
            lhs = sum((c * xs[i] for i, c in row.coeffs.items()), Fraction(0))
            gap = (lhs - row.rhs) / row.scale
            if (abs(gap) if row.sense == "==" else gap) > tol:
                bad.append(row.label)
        return bad


class LpResult(NamedTuple):
    feasible: bool
    witness: list | None
    backend: str
    certificate: dict | None = None


def _to_sparse(rows, nvars):
    out = {}
    for sense in ("==", "<="):
        data, ri, ci, rhs = [], [], [], []
        sel = [r for r in rows if r.sense == sense]
        for k, r in enumerate(sel):
            sc = r.scale
            for i, c in r.coeffs.items():
                data.append(c / sc)
                ri.append(k)
                ci.append(i)
            rhs.append(r.rhs / sc)
        out[sense] = (csr_matrix((data, (ri, ci)), shape=(len(sel), nvars)), np.array(rhs), sel)
    return out


class LpStructure(NamedTuple):
    names: list
    block: _Block
    leaf_var: tuple  # per side: two-sided leaf -> variable index (None for a root leaf)


def lp_structure(s1: OneSidedTree, s2: OneSidedTree, slack_s) -> LpStructure:
    """Variables and the oracle-free constraint classes: root mass, copies, conservation, flip caps."""
    slack_s = Fraction(slack_s)
    if slack_s <= 0:
        raise ValueError("slack_s must be positive")
    # flip <= (4/s) copy  <=>  s_num flip - 4 s_den copy <= 0
    s_num, s_den = slack_s.numerator, slack_s.denominator
    names, rows, leaf_var = [], [], []
    for tree in (s1, s2):
        j = tree.side
        base = len(names)
        names.extend(f"S{j}:{e.kind}:{e.node}:{'TF'[not e.own]}{'' if e.kind == 'copy' else ('f' if e.flip else 'a')}"
                     for e in tree.edges)
        by_mid = {}
        for ix, e in enumerate(tree.edges):
            var = base + ix
            if e.kind == "copy":
                parent = tree.into.get(e.parent)
                if parent is None:
                    rows.append(LpRow({var: 1}, "==", 1, f"S{j} root copy {e.node}{'TF'[not e.own]}"))
                else:
                    rows.append(LpRow({var: 1, base + parent: -1}, "==", 0, f"S{j} copy {e.node}{'TF'[not e.own]}"))
            else:
                by_mid.setdefault(e.parent, []).append((var, e))
        for mid, splits in by_mid.items():
            copy_var = base + tree.into[mid]
            tag = f"{mid[1]}{'TF'[not mid[2]]}"
            coeffs = {var: 1 for var, _ in splits}
            coeffs[copy_var] = -1
            rows.append(LpRow(coeffs, "==", 0, f"S{j} split {tag}"))
            for var, e in splits:
                if e.flip:
                    rows.append(LpRow({var: s_num, copy_var: -4 * s_den}, "<=", 0, f"S{j} cap {tag}"))
        leaf_var.append({key[1]: base + ix for key, ix in tree.into.items() if key[0] == "s"})
    return LpStructure(names, _Block(rows), tuple(leaf_var))


def leaf_rows(structure: LpStructure, matching, q_lo, q_hi) -> list:
    """Ratio bounds on coupled matched leaves, cleared of denominators.

    With q = a/b:  a n2 P2 - (b-a) n1 P1 <= 0 (lower) and (b-a) n1 P1 - a n2 P2 <= 0 (upper).
    At q_lo = 0 or q_hi = 1 the corresponding row only restates non-negativity.
    """
    q_lo, q_hi = Fraction(q_lo), Fraction(q_hi)
    if not 0 <= q_lo <= q_hi <= 1:
        raise ValueError("need 0 <= q_lo <= q_hi <= 1")
    lo_a, lo_b = q_lo.numerator, q_lo.denominator
    hi_a, hi_b = q_hi.numerator, q_hi.denominator
    rows = []
    for pair in matching:
        if not pair.coupled:
            continue
        v1 = structure.leaf_var[0].get(pair.leaf)
        v2 = structure.leaf_var[1].get(pair.leaf)
        n1, n2 = pair.n1, pair.n2
        for label, a1, a2 in ((f"leaf {pair.leaf} lower", -(lo_b - lo_a) * n1, lo_a * n2),
                              (f"leaf {pair.leaf} upper", (hi_b - hi_a) * n1, -hi_a * n2)):
            coeffs, rhs = {}, 0
            for var, c in ((v1, a1), (v2, a2)):
                if var is None:
                    rhs -= c  # root leaf: its mass is the constant 1
                elif c:
                    coeffs[var] = coeffs.get(var, 0) + c
            rows.append(LpRow(coeffs, "<=", rhs, label))
    return rows


def build_lp(s1, s2, matching, q_lo, q_hi, slack_s, structure: LpStructure | None = None) -> LpInstance:
    if any(p.coupled and p.n1 is None for p in matching):
        raise ValueError("matching lacks leaf counts")
    structure = structure or lp_structure(s1, s2, slack_s)
    return LpInstance(structure.names, structure.block, leaf_rows(structure, matching, q_lo, q_hi))


def _float_system(lp: LpInstance):
    n = lp.num_variables
    base = lp.base.arrays(n)
    extra = _to_sparse(lp.extra, n)
    out = {}
    for sense in ("==", "<="):
        a0, b0, r0 = base[sense]
        a1, b1, r1 = extra[sense]
        out[sense] = (vstack([a0, a1]).tocsr(), np.concatenate([b0, b1]), r0 + r1)
    return out


def verify_certificate(lp: LpInstance, multipliers: dict) -> bool:
    """Exact integer check of a Farkas certificate given as {row label: integer multiplier}."""
    by_label = {r.label: r for r in lp.rows}
    r, yb = {}, 0
    for label, yk in multipliers.items():
        row = by_label.get(label)
        if row is None or (row.sense == "<=" and yk < 0):
            return False
        yb += yk * row.rhs
        for i, c in row.coeffs.items():
            r[i] = r.get(i, 0) + yk * c
    return yb < sum(v for v in r.values() if v < 0)


def _farkas(lp: LpInstance, system):
    """Search and exactly verify y (y_ub >= 0) proving the integer system infeasible on [0,1]^n.

    For feasible x: y.(Ax) <= y.b and y.(Ax) = r.x >= sum of negative r_i (x <= 1),
    so y.b < sum(min(r_i, 0)) is a contradiction.  The float multipliers of the
    scaled rows are mapped back to the integer rows and rounded to integers, so
    the verification is pure integer arithmetic.
    """
    a_eq, b_eq, rows_eq = system["=="]
    a_ub, b_ub, rows_ub = system["<="]
    m_eq, m_ub = a_eq.shape[0], a_ub.shape[0]
    at = hstack([a_eq.T, a_ub.T]).tocsr()
    n = lp.num_variables
    rhs_row = np.concatenate([b_eq, b_ub])
    res = linprog(np.zeros(m_eq + m_ub), A_ub=-at, b_ub=np.zeros(n),
                  A_eq=rhs_row.reshape(1, -1), b_eq=np.array([-1.0]),
                  bounds=[(None, None)] * m_eq + [(0, None)] * m_ub, method="highs")
    if res.status != 0:
        return None
    rows = rows_eq + rows_ub
    raw = [(k, float(v) / rows[k].scale) for k, v in enumerate(res.x) if v != 0]
    top = max((abs(v) for _, v in raw), default=0.0)
    if top == 0:
        return None
    for bits in (40, 52, 30):
        mult = 2.0 ** bits / top
        ys = {}
        for k, v in raw:
            yk = round(v * mult)
            if k >= m_eq and yk < 0:
                yk = 0
            if yk:
                ys[k] = yk
        if verify_certificate(lp, {rows[k].label: yk for k, yk in ys.items()}):
            return {"multipliers": {rows[k].label: yk for k, yk in ys.items()}}
    return None


def _solve_float(lp: LpInstance, tol):
    system = _float_system(lp)
    a_eq, b_eq, _ = system["=="]
    a_ub, b_ub, _ = system["<="]
    n = lp.num_variables
    if n == 0:
        bad = lp.violations([], tol)
        return LpResult(not bad, [] if not bad else None, "float", None if not bad else {"constant rows": bad})
    kw = dict(A_ub=a_ub if a_ub.shape[0] else None, b_ub=b_ub if a_ub.shape[0] else None,
              A_eq=a_eq if a_eq.shape[0] else None, b_eq=b_eq if a_eq.shape[0] else None,
              bounds=[(0, 1)] * n, method="highs")
    for feas_tol in (1e-10, 1e-12):
        res = linprog(np.zeros(n), options={"primal_feasibility_tolerance": feas_tol}, **kw)
        if res.status == 0:
            x = [min(max(float(v), 0.0), 1.0) for v in res.x]
            if not lp.violations(x, tol):
                return LpResult(True, x, "float")
            continue
        if res.status == 2:
            cert = _farkas(lp, system)
            if cert is not None:
                return LpResult(False, None, "float+farkas", cert)
        return None
    return None


def solve_feasibility(lp: LpInstance, tolerance=Fraction(1, 10**9), backend: str = "auto",
                      hints=()) -> LpResult:
    """Decide feasibility.  ``backend`` is "float", "exact" or "auto" (float, exact as fallback).

    ``hints`` are earlier Farkas certificates; one that verifies on this system
    settles infeasibility without solving.
    """
    tol = Fraction(tolerance)
    if backend not in ("auto", "float", "exact"):
        raise ValueError(f"unknown backend {backend!r}")
    for cert in hints:
        if verify_certificate(lp, cert["multipliers"]):
            return LpResult(False, None, "certificate", cert)
    if backend in ("auto", "float"):
        res = _solve_float(lp, tol)
        if res is not None:
            return res
        if backend == "float" or lp.num_variables > EXACT_LIMIT:
            raise NumericalFailure("float solver result could not be validated")
    return solve_exact(lp)


def solve_exact(lp: LpInstance) -> LpResult:
    """Phase-1 simplex in rationals with Bland's rule; upper bounds are implied and omitted."""
    n = lp.num_variables
    rows = lp.rows
    n_slack = sum(r.sense == "<=" for r in rows)
    width = n + n_slack
    tab = []
    basis = []
    slack = n
    for r in rows:
        coeffs = [Fraction(0)] * width
        for i, c in r.coeffs.items():
            coeffs[i] = Fraction(c)
        rhs = Fraction(r.rhs)
        if r.sense == "<=":
            coeffs[slack] = Fraction(1)
            slack += 1
        if rhs < 0:
            coeffs = [-c for c in coeffs]
            rhs = -rhs
        tab.append(coeffs + [rhs])
        basis.append(None)
    m = len(tab)
    # artificial j sits at column width + j, kept implicitly: the row starts basic in it
    art_cols = width + m
    for j, row in enumerate(tab):
        row[width:width] = [Fraction(0)] * m
        row[width + j] = Fraction(1)
        basis[j] = width + j
    cost = [Fraction(0)] * art_cols + [Fraction(0)]
    for row in tab:
        for c in range(width):
            cost[c] -= row[c]
        cost[-1] -= row[-1]
    while True:
        enter = next((c for c in range(art_cols) if cost[c] < 0), None)
        if enter is None:
            break
        best, leave = None, None
        for j, row in enumerate(tab):
            if row[enter] > 0:
                ratio = row[-1] / row[enter]
                if best is None or ratio < best or (ratio == best and basis[j] < basis[leave]):
                    best, leave = ratio, j
        if leave is None:
            raise NumericalFailure("phase-1 objective unbounded")
        piv = tab[leave][enter]
        tab[leave] = [v / piv for v in tab[leave]]
        for j, row in enumerate(tab):
            if j != leave and row[enter]:
                f = row[enter]
                tab[j] = [a - f * b for a, b in zip(row, tab[leave])]
        f = cost[enter]
        cost = [a - f * b for a, b in zip(cost, tab[leave])]
        basis[leave] = enter
    if cost[-1] != 0:
        return LpResult(False, None, "exact", {"phase1_residual": -cost[-1]})
    x = [Fraction(0)] * n
    for j, b in enumerate(basis):
        if b < n:
            x[b] = tab[j][-1]
    bad = lp.violations(x, Fraction(0))
    if bad:
        raise NumericalFailure(f"exact witness fails rows {bad[:3]}")
    return LpResult(True, x, "exact")


@dataclass(frozen=True)
class CertifyConfig:
    grid_eps: Fraction = Fraction(1, 100)
    slack_s: Fraction | None = None  # None: max(8, d^3)
    tau: int | None = None
    node_budget: int = DEFAULT_NODE_BUDGET
    oracle_budget: int = DEFAULT_BUDGET
    backend: str = "auto"
    tolerance: Fraction = Fraction(1, 10**9)
    scan: str = "bracketed"  # or "full": solve every window directly

    def __post_init__(self):
        if self.scan not in ("bracketed", "full"):
            raise ValueError(f"unknown scan mode {self.scan!r}")
        eps = Fraction(self.grid_eps)
        if not 0 < eps < Fraction(1, 2):
            raise ValueError("grid_eps must lie in (0, 1/2)")
        if (1 / eps).denominator != 1:
            raise ValueError("grid_eps must be 1/N for an integer N")


def default_slack(phi: CnfFormula) -> Fraction:
    return Fraction(max(8, phi.stats().d ** 3))


class WindowResult(NamedTuple):
    center: Fraction
    lo: Fraction
    hi: Fraction
    feasible: bool
    backend: str


@dataclass
class MarginalInterval:
    lo: Fraction
    hi: Fraction
    slack_s: Fraction
    tau: int | None
    certified: bool
    windows: list = field(default_factory=list)
    interval_shaped: bool = True
    truncated_mass: Fraction | float = 0
    tree_nodes: int = 0

    @property
    def midpoint(self) -> Fraction:
        return (self.lo + self.hi) / 2

    @property
    def half_width(self) -> Fraction:
        return (self.hi - self.lo) / 2

    def contains(self, q) -> bool:
        return self.lo <= q <= self.hi

    def to_json(self) -> dict:
        fr = lambda p: f"{Fraction(p).numerator}/{Fraction(p).denominator}"
        return {
            "lo": fr(self.lo), "hi": fr(self.hi), "lo_float": float(self.lo), "hi_float": float(self.hi),
            "slack_s": fr(self.slack_s), "tau": self.tau, "certified": self.certified,
            "interval_shaped": self.interval_shaped, "truncated_mass": float(self.truncated_mass),
            "tree_nodes": self.tree_nodes,
            "windows": [{"q": fr(w.center), "lo": fr(w.lo), "hi": fr(w.hi), "feasible": w.feasible,
                         "backend": w.backend} for w in self.windows],
        }


def truncated_mass(tree, s1: OneSidedTree, structure: LpStructure, witness) -> float:
    """Largest witness mass on truncated S1 leaves over all A1-choice policies."""
    leaf_var = structure.leaf_var[0]
    memo = {}
    for u in reversed(range(len(tree.nodes))):
        nd = tree.nodes[u]
        if nd.kind != INTERNAL:
            if nd.kind == "truncated":
                var = leaf_var.get(u)
                memo[u] = 1.0 if var is None else float(witness[var])
            else:
                memo[u] = 0.0
            continue
        memo[u] = max(sum(memo[nd.children[(own, other)]] for other in (True, False))
                      for own in (True, False))
    return memo[tree.root]


def _threshold(values, feasible_at, want_first_feasible: bool):
    """Binary search on a monotone predicate over sorted ``values``.

    want_first_feasible: predicate is F..F T..T, return index of the first T
    (len(values) if none).  Otherwise it is T..T F..F; return the last T (-1 if none).
    """
    lo, hi = 0, len(values)
    while lo < hi:
        mid = (lo + hi) // 2
        ok = feasible_at(values[mid])
        if ok == want_first_feasible:
            hi = mid
        else:
            lo = mid + 1
    return lo if want_first_feasible else lo - 1


def certify_marginal(phi: CnfFormula, x: int, marking, cfg: CertifyConfig = CertifyConfig(), tree=None) -> MarginalInterval:
    """Scan windows [q - eps, q + eps], q = eps, 2 eps, ..., 1 - eps, and bracket the feasible ones.

    The end windows reach 0 and 1, where one ratio bound is vacuous.

    In "bracketed" mode each window is still decided, but most infeasible ones
    by implication: the system with only the upper ratio rows at h is implied
    by the one at any h' <= h, so once it is infeasible at h every window with
    hi <= h is infeasible (symmetrically for the lower rows).  Binary searches
    find both thresholds; windows between them are solved in full.
    """
    eps = Fraction(cfg.grid_eps)
    slack = Fraction(cfg.slack_s) if cfg.slack_s is not None else default_slack(phi)
    if tree is None:
        tree = build_tree(phi, x, marking, cfg.tau, cfg.node_budget)
    s1, s2, matching = to_one_sided(tree, with_counts=True, budget=cfg.oracle_budget)
    structure = lp_structure(s1, s2, slack)
    steps = int(1 / eps)
    spans = [(i * eps, max(i * eps - eps, Fraction(0)), min(i * eps + eps, Fraction(1))) for i in range(1, steps)]

    def solve(lo, hi, hints=()):
        return solve_feasibility(build_lp(s1, s2, matching, lo, hi, slack, structure), cfg.tolerance,
                                 cfg.backend, hints)

    h_min, l_max = Fraction(0), Fraction(1)
    if cfg.scan == "bracketed":
        his = sorted({hi for _, _, hi in spans})
        los = sorted({lo for _, lo, _ in spans})
        j = _threshold(his, lambda h: solve(Fraction(0), h).feasible, True)
        h_min = his[j] if j < len(his) else Fraction(2)
        j = _threshold(los, lambda l: solve(l, Fraction(1)).feasible, False)
        l_max = los[j] if j >= 0 else Fraction(-1)
    windows, witnesses, hints = [], {}, []
    for i, (q, lo, hi) in enumerate(spans):
        if hi < h_min:
            windows.append(WindowResult(q, lo, hi, False, "implied-upper"))
            continue
        if lo > l_max:
            windows.append(WindowResult(q, lo, hi, False, "implied-lower"))
            continue
        res = solve(lo, hi, hints[-2:])
        if res.certificate is not None and res.backend != "certificate" and "multipliers" in res.certificate:
            hints.append(res.certificate)
        windows.append(WindowResult(q, lo, hi, res.feasible, res.backend))
        if res.feasible:
            witnesses[i] = res.witness
    feas = [k for k, w in enumerate(windows) if w.feasible]
    if not feas:
        raise CertificationError(f"no window of width {2 * eps} is feasible for variable {x}")
    shaped = feas == list(range(feas[0], feas[-1] + 1))
    lo, hi = windows[feas[0]].lo, windows[feas[-1]].hi
    mid_key = sorted(witnesses)[len(witnesses) // 2]
    return MarginalInterval(lo, hi, slack, cfg.tau, True, windows, shaped,
                            truncated_mass(tree, s1, structure, witnesses[mid_key]), len(tree.nodes))
