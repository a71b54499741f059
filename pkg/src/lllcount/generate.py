"""Random instance families with bounded clause width and variable degree."""
from __future__ import annotations

import random

from .cnf import CnfFormula, FormulaError


class GenerationError(FormulaError):
    pass


def gen_cnf(n: int, k_min: int, k_max: int, d: int, monotone: bool = False, seed: int = 0,
            m: int | None = None, max_retries: int = 200) -> CnfFormula:
    """Random formula: widths uniform in [k_min, k_max], every variable in at most d clauses.

    Each clause picks its variables among those with spare degree; a clause that
    cannot be placed is redrawn, and the whole formula after ``max_retries``
    failed clauses in a row.  ``m`` defaults to as many clauses as the degree
    budget allows on average.
    """
    if not 1 <= k_min <= k_max <= n:
        raise GenerationError(f"need 1 <= k_min <= k_max <= n, got {k_min}, {k_max}, {n}")
    if d < 1:
        raise GenerationError("d must be at least 1")
    if m is None:
        m = (n * d * 2) // (k_min + k_max)
    if m * k_min > n * d:
        raise GenerationError(f"{m} clauses of width >= {k_min} exceed the degree budget {n * d}")
    rng = random.Random(seed)
    for _ in range(max_retries):
        deg = [0] * (n + 1)
        clauses = []
        fails = 0
        while len(clauses) < m and fails < max_retries:
            k = rng.randint(k_min, k_max)
            spare = [v for v in range(1, n + 1) if deg[v] < d]
            if len(spare) < k:
                fails += 1
                if len(spare) < k_min:
                    break
                continue
            vs = sorted(rng.sample(spare, k))
            lits = tuple(v if monotone or rng.getrandbits(1) else -v for v in vs)
            for v in vs:
                deg[v] += 1
            clauses.append(lits)
        if len(clauses) == m:
            return CnfFormula(n, tuple(clauses))
    raise GenerationError(f"could not place {m} clauses (n={n}, k in [{k_min},{k_max}], d={d})")
