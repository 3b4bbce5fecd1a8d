"""Ideal Mach-Zehnder channel and its outcome statistics.

The interferometer (beamsplitter, phase shift theta, beamsplitter) is

    exp(i pi/2 Jx) exp(i theta Jz) exp(i pi/2 Jx)
        = exp(i theta Jy) exp(i pi Jx)      (up to a diagonal phase)

With the operator convention of :mod:`squeezed_mzi.spinspace`, the rotation
carries a plus sign, so <Jz>_out = sin(theta) <Jx>_in for n-symmetric
inputs. Outcome probabilities coincide exactly with the three-propagator
form; only the unobservable phases of the |n> amplitudes differ.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spinspace import StateVector, SpinSpace, apply_jx, pi_pulse_x, rotate_y

TAIL_THRESHOLD = 1e-14
_MASS_TOL = 1e-12


def _check_theta(theta: float):
    if not np.isfinite(theta) or abs(theta) >= np.pi / 2:
        raise ValueError(f"|theta| must be < pi/2, got {theta}")


def mzi_output(state_in: StateVector, theta: float) -> StateVector:
    """Output state of the ideal interferometer at phase ``theta``."""
    _check_theta(theta)
    return rotate_y(pi_pulse_x(state_in), -theta)


class Channel:
    """A fixed input state expressed in the Jy eigenbasis after the pi pulse.

    Evaluating <n|output(theta)> then costs O(N) per (n, theta) pair, and a
    whole row of phases can be evaluated at once (see
    :func:`squeezed_mzi.bayes.likelihood`).
    """

    def __init__(self, state_in: StateVector):
        space = state_in.space
        _, w = space.jy_eigen
        pulsed = pi_pulse_x(state_in)
        scaled = space.basis_phases.conj() * pulsed.amplitudes
        mag = np.abs(scaled)
        keep = np.nonzero(mag > 1e-17 * mag.max())[0]
        lo, hi = keep[0], keep[-1] + 1
        self.space = space
        self.state_in = state_in
        self.pulsed = pulsed
        self.coeffs = w[lo:hi].T @ scaled[lo:hi]

    def amplitudes(self, theta: float, rows=None) -> np.ndarray:
        """<n|output> for the given row indices (all rows if None)."""
        space = self.space
        lam, w = space.jy_eigen
        vec = np.exp(1j * theta * lam) * self.coeffs
        if rows is None:
            return space.basis_phases * (w @ vec)
        rows = np.asarray(rows)
        return space.basis_phases[rows] * (w[rows] @ vec)

    def predicted_window(self, theta: float) -> tuple[float, float]:
        """Mean and std of the output number difference, from input moments."""
        space = self.space
        psi = self.pulsed.amplitudes
        n = space.n_values.astype(float)
        p = np.abs(psi) ** 2
        jx_psi = apply_jx(space, psi)
        jz = p @ n
        jz2 = p @ (n * n)
        jx = np.vdot(psi, jx_psi).real
        jx2 = np.linalg.norm(jx_psi) ** 2
        anti = 2 * np.vdot(n * psi, jx_psi).real
        c, s = np.cos(theta), np.sin(theta)
        mean = c * jz + s * jx
        var = (
            c * c * (jz2 - jz * jz)
            + s * s * (jx2 - jx * jx)
            + 2 * s * c * (0.5 * anti - jz * jx)
        )
        return float(mean), float(np.sqrt(max(var, 0.0)))


@dataclass(frozen=True, eq=False)
class OutcomeDistribution:
    """P(n | theta) over ``space.n_values`` with its effective support."""

    space: SpinSpace
    theta: float
    probabilities: np.ndarray
    support: tuple[int, int]

    @property
    def outcomes(self) -> np.ndarray:
        lo, hi = self.support
        return self.space.n_values[lo : hi + 1]

    @property
    def support_probabilities(self) -> np.ndarray:
        lo, hi = self.support
        return self.probabilities[lo : hi + 1]

    def mean(self) -> float:
        return float(self.probabilities @ self.space.n_values)

    def std(self) -> float:
        n = self.space.n_values.astype(float)
        m = self.mean()
        return float(np.sqrt(max(self.probabilities @ (n * n) - m * m, 0.0)))


def outcome_distribution(
    state_in: StateVector | Channel, theta: float
) -> OutcomeDistribution:
    """Exact outcome probabilities P(n|theta) = |<n|output(theta)>|^2.

    Only rows inside a window predicted from the input moments are
    evaluated; the full output is computed if the window misses more than
    1e-12 of the probability. The support is the index range where
    P(n|theta) >= 1e-14.
    """
    _check_theta(theta)
    channel = state_in if isinstance(state_in, Channel) else Channel(state_in)
    space = channel.space
    dim = space.dimension
    mean, std = channel.predicted_window(theta)
    half = 20.0 * std + 30.0
    lo = max(int(np.floor(mean - half)) + space.n_atoms // 2, 0)
    hi = min(int(np.ceil(mean + half)) + space.n_atoms // 2, dim - 1)
    probs = np.zeros(dim)
    if hi - lo + 1 < dim:
        rows = np.arange(lo, hi + 1)
        probs[rows] = np.abs(channel.amplitudes(theta, rows)) ** 2
    if probs.sum() < 1.0 - _MASS_TOL:
        probs = np.abs(channel.amplitudes(theta)) ** 2
    big = np.nonzero(probs >= TAIL_THRESHOLD)[0]
    if big.size == 0:
        raise ArithmeticError("outcome distribution has no entry above the tail threshold")
    probs.flags.writeable = False
    return OutcomeDistribution(space, float(theta), probs, (int(big[0]), int(big[-1])))


def gaussian_approximation(theta: float, theta_a: float, n_atoms: float) -> tuple[float, float]:
    """Gaussian approximation to P(n|theta) for an input optimized at theta_a.

    Returns ``(mean, std)`` with mean = N sin(theta)/2 and
    std = sqrt(1 + tan^2 theta / (2 tan^2 theta_a)) * sigma_min(theta_a, N),
    where sigma_min is the error-propagation optimum
    (:func:`squeezed_mzi.optimizer.analytic_optimum`).
    """
    from .optimizer import analytic_optimum

    if theta_a == 0:
        raise ValueError("theta_a must be nonzero")
    _check_theta(theta)
    _check_theta(theta_a)
    sigma_min = analytic_optimum(n_atoms, theta_a).sigma
    ratio = np.tan(theta) ** 2 / (2.0 * np.tan(theta_a) ** 2)
    return n_atoms * np.sin(theta) / 2.0, float(np.sqrt(1.0 + ratio) * sigma_min)


def sample_outcome(dist: OutcomeDistribution, rng) -> int:
    """Draw n from ``dist`` by inverse CDF over its support.

    ``rng`` needs a ``random()`` method returning a uniform draw on [0, 1),
    e.g. a :class:`numpy.random.Generator`.
    """
    cdf = np.cumsum(dist.support_probabilities)
    draw = float(rng.random()) * cdf[-1]
    k = min(int(np.searchsorted(cdf, draw, side="right")), cdf.size - 1)
    return int(dist.outcomes[k])
