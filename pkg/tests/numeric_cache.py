"""Session-wide memo of the expensive Bayesian optima shared by test modules."""
from functools import lru_cache

from squeezed_mzi.optimizer import bayesian_half_width, numeric_optimum


@lru_cache(maxsize=None)
def optimum(n_atoms: int, theta: float):
    return numeric_optimum(n_atoms, theta)


@lru_cache(maxsize=None)
def half_width(n_atoms: int, sigma: float, theta: float):
    return bayesian_half_width(n_atoms, sigma, theta)
