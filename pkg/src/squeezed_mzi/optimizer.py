"""Optimal squeezing: closed-form laws, numeric Bayesian optimum, robustness."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .bayes import averaged_inferred, confidence_interval, flat_prior, gaussian_prior
from .groundstate import WellParameters, exact_ground_state, u_of_sigma
from .spinspace import get_space, moments

# Jx input noise: dJx = alpha N / sigma^2
ALPHA_NUMERIC = 0.09
ALPHA_GEOMETRIC = 0.06

MAX_NUMERIC_N = 5000
LN_SIGMA_TOL = 1e-3
SCAN_POINTS = 33
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def error_propagation_uncertainty(
    n_atoms: float, sigma: float, theta: float, alpha: float = ALPHA_NUMERIC
) -> float:
    """Linearized phase uncertainty (2 sigma/N) sqrt(1 + (alpha N tan(theta)/sigma^3)^2)."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if abs(theta) >= math.pi / 2:
        raise ValueError(f"|theta| must be < pi/2, got {theta}")
    ratio = alpha * n_atoms * math.tan(theta) / sigma**3
    return 2.0 * sigma / n_atoms * math.sqrt(1.0 + ratio * ratio)


class AnalyticOptimum(NamedTuple):
    sigma: float
    delta_theta: float
    extrapolated: bool


def analytic_optimum(n_atoms: float, theta: float) -> AnalyticOptimum:
    """Minimum of :func:`error_propagation_uncertainty` over sigma.

    sigma = 0.503 (N tan|theta|)^(1/3), dtheta = 1.23 tan|theta|^(1/3) / N^(2/3).
    ``extrapolated`` is set outside 10/N < |theta| < arctan(0.137 sqrt(N)),
    boundaries included.
    """
    t = math.tan(abs(theta))
    inside = 10.0 / n_atoms < abs(theta) < math.atan(0.137 * math.sqrt(n_atoms))
    sigma = 0.503 * (n_atoms * t) ** (1.0 / 3.0)
    dtheta = 1.23 * t ** (1.0 / 3.0) / n_atoms ** (2.0 / 3.0)
    return AnalyticOptimum(sigma, dtheta, not inside)


def _small_angle(n_atoms, theta):
    return abs(theta) < 10.0 / n_atoms


def fitted_sigma_min(n_atoms: float, theta: float) -> float:
    if _small_angle(n_atoms, theta):
        return 1.0
    return 0.45 * (n_atoms * math.tan(abs(theta))) ** (1.0 / 3.0)


def fitted_u_min(n_atoms: float, theta: float) -> float:
    if _small_angle(n_atoms, theta):
        return n_atoms / 16.0 - 1.0 / n_atoms
    t = math.tan(abs(theta))
    return 1.52 / (t ** (4.0 / 3.0) * n_atoms ** (1.0 / 3.0)) - 1.0 / n_atoms


def fitted_delta_theta_min(n_atoms: float, theta: float) -> float:
    if _small_angle(n_atoms, theta):
        return 3.50 / n_atoms
    return 1.63 * math.tan(abs(theta)) ** (1.0 / 3.0) / n_atoms ** (2.0 / 3.0)


def robustness(n_atoms, theta, delta_n_fraction: float, delta_u_fraction: float) -> float:
    """Fractional increase of the single-shot uncertainty for mis-set N and u.

    (2/3) dN/N + (1/8) (du/u_min)^2; independent of N and theta.
    """
    if delta_n_fraction < 0 or delta_u_fraction < 0:
        raise ValueError("fractions must be non-negative")
    return (2.0 / 3.0) * delta_n_fraction + 0.125 * delta_u_fraction**2


@dataclass(frozen=True)
class OptimizationResult:
    n_atoms: int
    theta_assumed: float
    sigma_min: float
    u_min: float
    delta_theta_min: float
    evaluations: int
    method: str = "golden"
    prior_width: float | None = None


def bayesian_half_width(
    n_atoms: int, sigma: float, theta: float, prior_width: float | None = None
) -> float:
    """68% half-width of P(phi|theta) for the exact ground state of width sigma.

    ``prior_width=None`` uses a flat prior on (-pi/2, pi/2); otherwise a
    Gaussian of that std centered at 0 (the rebalanced frame).
    """
    space = get_space(n_atoms)
    state = exact_ground_state(
        space, WellParameters(interaction_ratio=u_of_sigma(n_atoms, sigma))
    )
    prior = flat_prior() if prior_width is None else gaussian_prior(0.0, prior_width)
    dist = averaged_inferred(state, theta, prior)
    return confidence_interval(dist, theta)


def golden_section(
    f: Callable[[float], float], lo: float, hi: float, tol: float
) -> tuple[float, float]:
    """Minimize a unimodal ``f`` on [lo, hi] to bracket width ``tol``."""
    a, b = lo, hi
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def numeric_optimum(
    n_atoms: int,
    theta_assumed: float,
    prior_width: float | None = None,
    max_atoms: int = MAX_NUMERIC_N,
    tol: float = LN_SIGMA_TOL,
) -> OptimizationResult:
    """Minimize the Bayesian 68% half-width over the squeezing width.

    Golden-section search on ln(sigma) in [ln 0.5, ln(sqrt(N)/2)]. If an end
    of the bracket beats the golden-section result, the objective is not
    unimodal there; a 33-point scan locates the best cell, which is then
    refined by golden section.
    """
    if n_atoms > max_atoms:
        raise ValueError(
            f"N={n_atoms} exceeds the numeric limit {max_atoms}; use the fitted laws"
        )
    cache: dict[float, float] = {}

    def objective(x):
        if x not in cache:
            cache[x] = bayesian_half_width(n_atoms, math.exp(x), theta_assumed, prior_width)
        return cache[x]

    lo, hi = math.log(0.5), math.log(math.sqrt(n_atoms) / 2)
    x_best, f_best = golden_section(objective, lo, hi, tol)
    method = "golden"
    if min(objective(lo), objective(hi)) < f_best:
        method = "scan"
        xs = np.linspace(lo, hi, SCAN_POINTS)
        fs = [objective(float(x)) for x in xs]
        i = int(np.argmin(fs))
        a, b = float(xs[max(i - 1, 0)]), float(xs[min(i + 1, SCAN_POINTS - 1)])
        x_best, f_best = golden_section(objective, a, b, tol)
        if fs[i] < f_best:
            x_best, f_best = float(xs[i]), fs[i]
    sigma = math.exp(x_best)
    return OptimizationResult(
        n_atoms=n_atoms,
        theta_assumed=theta_assumed,
        sigma_min=sigma,
        u_min=u_of_sigma(n_atoms, sigma),
        delta_theta_min=f_best,
        evaluations=len(cache),
        method=method,
        prior_width=prior_width,
    )


def fit_power_law(x, y) -> tuple[float, float]:
    """Least-squares fit of y = prefactor * x**exponent in log-log space."""
    slope, intercept = np.polyfit(np.log(x), np.log(y), 1)
    return float(slope), float(np.exp(intercept))


def input_noise_law(n_atoms: int, sigmas) -> tuple[float, float]:
    """Fit dJx = alpha N sigma^slope over exact ground states; returns (slope, alpha)."""
    space = get_space(n_atoms)
    djx = [
        moments(
            exact_ground_state(
                space, WellParameters(interaction_ratio=u_of_sigma(n_atoms, s))
            )
        ).djx
        for s in sigmas
    ]
    slope, prefactor = fit_power_law(sigmas, djx)
    return slope, prefactor / n_atoms
