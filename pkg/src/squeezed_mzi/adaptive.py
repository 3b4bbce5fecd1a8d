"""Adaptive measure-rebalance protocol and its closed-form iteration estimates.

Each step prepares the double-well ground state whose width is optimal for
the current uncertainty, measures the number difference at the residual
(rebalanced) phase, updates the posterior, and adds the new estimate to
the accumulated tilt compensation. The posterior is always held in the
rebalanced frame, so its mode sits near zero after every step.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .bayes import PhaseDistribution, confidence_interval, gaussian_prior, map_estimate, posterior
from .groundstate import prepared_state, u_of_sigma
from .interferometer import Channel, outcome_distribution, sample_outcome
from .optimizer import fitted_sigma_min

STOP_MODES = ("threshold", "floor")


@dataclass(frozen=True)
class ProtocolConfig:
    """Settings for one simulated protocol run.

    ``stop_mode="threshold"`` iterates until dtheta <= stop_threshold_coefficient/N
    and then makes one last measurement with sigma = 1. ``stop_mode="floor"``
    iterates until dtheta <= floor_coefficient/N.
    """

    n_atoms: int
    theta_true: float
    delta_theta0: float
    theta0: float = 0.0
    stop_threshold_coefficient: float = 10.0
    floor_coefficient: float = 3.5
    max_iterations: int = 25
    seed: int = 0
    stop_mode: str = "threshold"

    def __post_init__(self):
        if self.n_atoms <= 0 or self.n_atoms % 2:
            raise ValueError(f"n_atoms must be a positive even integer, got {self.n_atoms}")
        if not abs(self.theta_true) < math.pi / 2:
            raise ValueError(f"|theta_true| must be < pi/2, got {self.theta_true}")
        if not abs(self.theta0) < math.pi / 2:
            raise ValueError(f"|theta0| must be < pi/2, got {self.theta0}")
        if not 0 < self.delta_theta0 < math.pi / 2:
            raise ValueError(f"delta_theta0 must be in (0, pi/2), got {self.delta_theta0}")
        if self.stop_mode not in STOP_MODES:
            raise ValueError(f"stop_mode must be one of {STOP_MODES}, got {self.stop_mode!r}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass(frozen=True)
class StepRecord:
    index: int
    sigma: float
    u: float
    n: int
    theta_bar: float
    delta_theta: float
    residual_phase: float


@dataclass(frozen=True)
class ProtocolState:
    accumulated_offset: float
    posterior: PhaseDistribution
    delta_theta: float
    history: tuple[StepRecord, ...] = ()
    final_pending: bool = False
    finished: bool = False
    aborted: bool = False
    diagnostic: str = ""
    monotone: bool = field(default=True)

    @property
    def iterations_used(self) -> int:
        return len(self.history)

    @property
    def estimate(self) -> float:
        return self.accumulated_offset


def initial_state(config: ProtocolConfig) -> ProtocolState:
    """Prior N(theta0, dtheta0) with theta0 already compensated by the tilt."""
    domain = (-math.pi / 2 - config.theta0, math.pi / 2 - config.theta0)
    domain = (max(domain[0], -math.pi / 2), min(domain[1], math.pi / 2))
    prior = gaussian_prior(0.0, config.delta_theta0, domain)
    pending = (
        config.stop_mode == "threshold"
        and config.delta_theta0 <= config.stop_threshold_coefficient / config.n_atoms
    )
    return ProtocolState(
        accumulated_offset=config.theta0,
        posterior=prior,
        delta_theta=config.delta_theta0,
        final_pending=pending,
    )


def choose_sigma(n_atoms: int, delta_theta: float) -> float:
    """Squeezing width for the next measurement, clipped to [1, sqrt(N)/2]."""
    upper = math.sqrt(n_atoms) / 2
    angle = min(delta_theta, math.pi / 2 - 1e-12)
    return float(min(max(fitted_sigma_min(n_atoms, angle), 1.0), upper))


def step(state: ProtocolState, config: ProtocolConfig, rng) -> ProtocolState:
    """One measure-update-rebalance cycle; returns the new state."""
    if state.finished:
        raise ValueError("protocol already finished")
    n_atoms = config.n_atoms
    index = state.iterations_used + 1
    if index > config.max_iterations:
        return replace(
            state,
            finished=True,
            aborted=True,
            diagnostic=f"no convergence within {config.max_iterations} iterations",
        )
    residual = config.theta_true - state.accumulated_offset
    if not abs(residual) < math.pi / 2:
        return replace(
            state,
            finished=True,
            aborted=True,
            diagnostic=f"residual phase {residual:.6g} left the interferometer range",
        )
    final = state.final_pending
    sigma = 1.0 if final else choose_sigma(n_atoms, state.delta_theta)
    channel = _channel(n_atoms, sigma)
    n = sample_outcome(outcome_distribution(channel, residual), rng)
    post = posterior(channel, n, state.posterior)
    theta_bar = map_estimate(post)
    delta = confidence_interval(post, theta_bar)
    record = StepRecord(
        index=index,
        sigma=sigma,
        u=u_of_sigma(n_atoms, sigma),
        n=n,
        theta_bar=theta_bar,
        delta_theta=delta,
        residual_phase=residual,
    )
    monotone = state.monotone and delta < state.delta_theta
    if state.monotone and not monotone:
        warnings.warn(
            f"uncertainty did not shrink at step {index} "
            f"({state.delta_theta:.4g} -> {delta:.4g})",
            RuntimeWarning,
            stacklevel=2,
        )
    if config.stop_mode == "threshold":
        finished = final
        pending = not final and delta <= config.stop_threshold_coefficient / n_atoms
    else:
        finished = delta <= config.floor_coefficient / n_atoms
        pending = False
    return ProtocolState(
        accumulated_offset=state.accumulated_offset + theta_bar,
        posterior=post.recentred(theta_bar),
        delta_theta=delta,
        history=state.history + (record,),
        final_pending=pending,
        finished=finished,
        monotone=monotone,
    )


def _channel(n_atoms: int, sigma: float) -> Channel:
    return _cached_channel(n_atoms, float(sigma))


_CHANNELS: dict[tuple[int, float], Channel] = {}


def _cached_channel(n_atoms: int, sigma: float) -> Channel:
    # First-step and final widths recur in every run; intermediate widths
    # are continuous, so only a bounded number of entries is kept.
    key = (n_atoms, sigma)
    channel = _CHANNELS.get(key)
    if channel is None:
        channel = Channel(prepared_state(n_atoms, sigma))
        if len(_CHANNELS) >= 32:
            _CHANNELS.pop(next(iter(_CHANNELS)))
        _CHANNELS[key] = channel
    return channel


def make_rng(seed: int, run_index: int = 0) -> np.random.Generator:
    """Counter-based stream for run ``run_index`` of master ``seed``."""
    seq = np.random.SeedSequence(seed, spawn_key=(run_index,))
    return np.random.Generator(np.random.Philox(seq))


def run(config: ProtocolConfig, rng=None) -> ProtocolState:
    """Run the protocol to completion (or abort)."""
    if rng is None:
        rng = make_rng(config.seed)
    state = initial_state(config)
    while not state.finished:
        state = step(state, config, rng)
    return state


def predict_iterations(n_atoms: float, delta_theta0: float) -> float:
    """M = 0.9 ln(ln(N tan(dtheta0) / 2.1)) - 0.4."""
    arg = n_atoms * math.tan(delta_theta0) / 2.1
    if not arg > math.e:
        raise ValueError(f"N tan(dtheta0)/2.1 = {arg:.4g} must exceed e")
    return 0.9 * math.log(math.log(arg)) - 0.4


def predict_delta_theta_M(n_atoms: float, delta_theta0: float, iterations: float) -> float:
    """(2.1/N) (N tan(dtheta0)/2.1)^(3^-M)."""
    base = n_atoms * math.tan(delta_theta0) / 2.1
    return 2.1 / n_atoms * base ** (3.0 ** (-iterations))


def asymptotic_total_uncertainty(n_total: float, delta_theta0: float) -> float:
    """(2.1 + 3.2 ln(ln(N_tot tan(dtheta0)))) / N_tot."""
    arg = n_total * math.tan(delta_theta0)
    if not arg > 1:
        raise ValueError(f"N_tot tan(dtheta0) = {arg:.4g} must exceed 1")
    return (2.1 + 3.2 * math.log(math.log(arg))) / n_total
