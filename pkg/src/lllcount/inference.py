"""Two-layer cause networks: fair-coin hidden variables, OR/AND observations.

Posterior inference reduces to uniform sampling: observations that pin their
variables (OR = false, AND = true) are forced, every other observation forbids
exactly one configuration and becomes a clause.
"""
from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from typing import NamedTuple

from .cnf import CnfFormula, FormulaError, Status, simplify
from .pipeline import MarginalOracleHandle, SampleConfig, approx_sample

OR, AND = "or", "and"


class InconsistentObservations(ValueError):
    pass


class Observation(NamedTuple):
    kind: str
    lits: tuple


@dataclass(frozen=True)
class CauseNetwork:
    num_hidden: int
    observed: tuple  # of Observation

    def __post_init__(self):
        obs = tuple(Observation(o[0], tuple(int(l) for l in o[1])) for o in self.observed)
        object.__setattr__(self, "observed", obs)
        for i, o in enumerate(obs):
            if o.kind not in (OR, AND):
                raise FormulaError(f"observation {i}: kind must be 'or' or 'and'")
            if not o.lits:
                raise FormulaError(f"observation {i}: no literals")
            vs = [abs(l) for l in o.lits]
            if len(set(vs)) != len(vs) or min(vs) < 1 or max(vs) > self.num_hidden or 0 in o.lits:
                raise FormulaError(f"observation {i}: literals must be distinct variables in 1..{self.num_hidden}")

    @property
    def k(self) -> int:
        """Smallest observation width."""
        return min((len(o.lits) for o in self.observed), default=0)

    @property
    def degree(self) -> int:
        deg = [0] * (self.num_hidden + 1)
        for o in self.observed:
            for l in o.lits:
                deg[abs(l)] += 1
        return max(deg)

    def width_window_ok(self) -> bool:
        """Every observation has between k and 2k literals."""
        return all(len(o.lits) <= 2 * self.k for o in self.observed)

    def evaluate(self, hidden) -> tuple:
        out = []
        for o in self.observed:
            vals = [hidden[abs(l) - 1] != (l < 0) for l in o.lits]
            out.append(any(vals) if o.kind == OR else all(vals))
        return tuple(out)

    def to_json(self) -> dict:
        return {"hidden": self.num_hidden, "observed": [{"kind": o.kind, "lits": list(o.lits)} for o in self.observed]}

    @classmethod
    def from_json(cls, data) -> "CauseNetwork":
        if isinstance(data, str):
            data = json.loads(data)
        return cls(int(data["hidden"]), tuple((o["kind"], tuple(o["lits"])) for o in data["observed"]))


def random_network(num_hidden: int, num_observed: int, k: int, d: int, and_fraction: float = 0.5,
                   seed: int = 0) -> CauseNetwork:
    """Observations of width k..2k on distinct hidden variables, each hidden variable in at most d."""
    rng = random.Random(seed)
    deg = [0] * (num_hidden + 1)
    observed = []
    for _ in range(num_observed):
        spare = [v for v in range(1, num_hidden + 1) if deg[v] < d]
        if len(spare) < k:
            break
        width = rng.randint(k, min(2 * k, len(spare)))
        vs = sorted(rng.sample(spare, width))
        for v in vs:
            deg[v] += 1
        kind = AND if rng.random() < and_fraction else OR
        observed.append((kind, tuple(v if rng.getrandbits(1) else -v for v in vs)))
    return CauseNetwork(num_hidden, tuple(observed))


def sample_forward(network: CauseNetwork, rng) -> tuple:
    hidden = tuple(bool(rng.getrandbits(1)) for _ in range(network.num_hidden))
    return hidden, network.evaluate(hidden)


def _pinning(o: Observation, value: bool) -> bool:
    return (o.kind == OR and not value) or (o.kind == AND and value)


def check_regular(network: CauseNetwork, obs) -> tuple:
    """(regular, report).

    Regular: no observation shares a variable with more than floor(15k/16)
    false ORs or more than floor(15k/16) true ANDs.  The report also gives,
    per residual clause, its unset-variable count against ceil(7k/8); that
    check is informational only.
    """
    obs = tuple(obs)
    if len(obs) != len(network.observed):
        raise ValueError("observation count does not match the network")
    k = network.k
    limit = (15 * k) // 16
    var_sets = [frozenset(abs(l) for l in o.lits) for o in network.observed]
    false_or = [o.kind == OR and not v for o, v in zip(network.observed, obs)]
    true_and = [o.kind == AND and v for o, v in zip(network.observed, obs)]
    violators = []
    for i, vs in enumerate(var_sets):
        nb = [j for j, ws in enumerate(var_sets) if j != i and vs & ws]
        n_or = sum(false_or[j] for j in nb)
        n_and = sum(true_and[j] for j in nb)
        if n_or > limit or n_and > limit:
            violators.append({"observation": i, "false_or": n_or, "true_and": n_and})
    need = math.ceil(7 * k / 8)
    residual = []
    try:
        forced, _ = preprocess(network, obs)
    except InconsistentObservations:
        forced = None
    if forced is not None:
        for i, (o, v) in enumerate(zip(network.observed, obs)):
            if _pinning(o, v):
                continue
            unset = sum(abs(l) not in forced for l in o.lits)
            residual.append({"observation": i, "unset": unset, "meets_7k_8": unset >= need})
    report = {
        "k": k, "limit": limit, "violators": violators, "residual_width_threshold": need,
        "residual": residual, "residual_width_ok": all(r["meets_7k_8"] for r in residual),
        "consistent": forced is not None,
    }
    return not violators, report


def preprocess(network: CauseNetwork, obs):
    """(forced hidden values, residual CNF over the unforced variables)."""
    obs = tuple(obs)
    if len(obs) != len(network.observed):
        raise ValueError("observation count does not match the network")
    forced = {}
    for i, (o, v) in enumerate(zip(network.observed, obs)):
        if not _pinning(o, v):
            continue
        for l in o.lits:
            want = (l > 0) if o.kind == AND else (l < 0)
            if forced.get(abs(l), want) != want:
                raise InconsistentObservations(f"observation {i} forces variable {abs(l)} both ways")
            forced[abs(l)] = want
    clauses = []
    for o, v in zip(network.observed, obs):
        if _pinning(o, v):
            continue
        # OR = true is the clause itself; AND = false forbids the all-true configuration
        clauses.append(o.lits if o.kind == OR else tuple(-l for l in o.lits))
    residual, status = simplify(CnfFormula(network.num_hidden, tuple(clauses)), forced)
    if status is Status.FALSIFIED:
        raise InconsistentObservations("forced values falsify an observation")
    return forced, residual


POSTERIOR_SAMPLING = SampleConfig(infeasible_marking="empty")


def posterior_sample(network: CauseNetwork, obs, oracle: MarginalOracleHandle | None = None,
                     cfg: SampleConfig = POSTERIOR_SAMPLING, rng=None) -> tuple:
    """Hidden assignment from the posterior; irregular observations are allowed."""
    rng = rng if rng is not None else random.Random(0)
    forced, residual = preprocess(network, obs)
    free = approx_sample(residual, oracle, cfg, rng)
    hidden = tuple(forced.get(v, free[v - 1]) for v in range(1, network.num_hidden + 1))
    assert network.evaluate(hidden) == tuple(obs), "posterior sample does not reproduce the observations"
    return hidden
