"""Counting and sampling CNF solutions in local-lemma regimes, with exact oracles for checking."""
from .cnf import CnfFormula, parse_dimacs, simplify
from .oracle import count_sat, enumerate_sat, exact_marginal, exact_sample

__all__ = ["CnfFormula", "parse_dimacs", "simplify", "count_sat", "enumerate_sat", "exact_marginal", "exact_sample"]
