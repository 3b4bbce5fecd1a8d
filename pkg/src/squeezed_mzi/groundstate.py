"""Input states: double-well ground states and ideal comparison states."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import gammaln

from .spinspace import SpinSpace, StateVector, get_space


class DegenerateGroundStateError(ArithmeticError):
    pass


@dataclass(frozen=True)
class WellParameters:
    """Double-well parameters in units of the tunneling rate.

    ``interaction_ratio`` is u = U/tau and ``tilt`` is delta/tau.
    """

    interaction_ratio: float = 0.0
    tilt: float = 0.0
    tunneling: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.interaction_ratio) or self.interaction_ratio < 0:
            raise ValueError(
                f"interaction_ratio must be finite and >= 0, got {self.interaction_ratio}"
            )
        if not self.tunneling > 0:
            raise ValueError(f"tunneling must be positive, got {self.tunneling}")
        if not np.isfinite(self.tilt):
            raise ValueError(f"tilt must be finite, got {self.tilt}")


@dataclass(frozen=True)
class Tridiagonal:
    """Symmetric tridiagonal matrix stored as its two diagonals."""

    diagonal: np.ndarray
    offdiagonal: np.ndarray

    def toarray(self) -> np.ndarray:
        return (
            np.diag(self.diagonal)
            + np.diag(self.offdiagonal, 1)
            + np.diag(self.offdiagonal, -1)
        )


def hamiltonian_matrix(space: SpinSpace, params: WellParameters) -> Tridiagonal:
    """Double-well Hamiltonian -2 tau Jx + delta Jz + 2 U Jz^2 in the |n> basis.

    The interaction enters as 2U Jz^2. With that normalization the ground
    state width obeys sigma^2 = N / (4 sqrt(1 + u N)) (see
    :func:`sigma_of_u`). With U Jz^2 the ground state comes out wider by
    about 2**0.25 once uN >> 1.
    """
    tau = params.tunneling
    u = params.interaction_ratio * tau
    n = space.n_values.astype(float)
    diagonal = params.tilt * tau * n + 2.0 * u * n * n
    offdiagonal = -tau * space.ladder
    return Tridiagonal(diagonal, offdiagonal)


def _fix_phase(vec: np.ndarray, space: SpinSpace) -> np.ndarray:
    centre = vec[space.n_atoms // 2]
    ref = centre if abs(centre) > 1e-300 else vec[np.argmax(np.abs(vec))]
    return vec * (np.conj(ref) / abs(ref))


def exact_ground_state(space: SpinSpace, params: WellParameters) -> StateVector:
    """Lowest eigenvector of the double-well Hamiltonian.

    The phase is fixed so that the n = 0 amplitude is real and non-negative.
    Raises :class:`DegenerateGroundStateError` if the two lowest levels are
    within 1e-12 of each other.
    """
    h = hamiltonian_matrix(space, params)
    if space.dimension == 1:
        return StateVector(space, np.ones(1))
    evals, evecs = eigh_tridiagonal(
        h.diagonal, h.offdiagonal, select="i", select_range=(0, 1)
    )
    scale = max(1.0, abs(evals[0]))
    if evals[1] - evals[0] <= 1e-12 * scale:
        raise DegenerateGroundStateError(
            f"ground level is degenerate (gap {evals[1] - evals[0]:.3e})"
        )
    vec = _fix_phase(evecs[:, 0].astype(complex), space)
    return StateVector.from_amplitudes(space, vec)


def gs_state(space: SpinSpace, sigma: float) -> StateVector:
    """Ideal Gaussian-squeezed state with amplitudes exp(-n^2 / 4 sigma^2)."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if sigma > np.sqrt(space.n_atoms) / 2 * (1 + 1e-12):
        warnings.warn(
            f"sigma={sigma} exceeds sqrt(N)/2; no repulsive ground state has this width",
            stacklevel=2,
        )
    n = space.n_values.astype(float)
    log_amp = -n * n / (4.0 * sigma * sigma)
    return StateVector.from_amplitudes(space, np.exp(log_amp - log_amp.max()))


def sigma_of_u(n_atoms: float, u: float) -> float:
    """Ground-state width: sigma^2 = N / (4 sqrt(1 + u N))."""
    if u < 0:
        raise ValueError(f"u must be >= 0, got {u}")
    return float(np.sqrt(n_atoms / (4.0 * np.sqrt(1.0 + u * n_atoms))))


def u_of_sigma(n_atoms: float, sigma: float) -> float:
    """Interaction ratio giving width ``sigma``: u = N/(16 sigma^4) - 1/N."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    u = n_atoms / (16.0 * sigma**4) - 1.0 / n_atoms
    if u < 0:
        if u > -1e-12 * max(1.0, 1.0 / n_atoms):
            return 0.0
        raise ValueError(
            f"sigma={sigma} > sqrt(N)/2 requires attractive interactions (u={u:.3g})"
        )
    return float(u)


def twin_fock(space: SpinSpace) -> StateVector:
    return StateVector.basis(space, 0)


def coherent_state(space: SpinSpace) -> StateVector:
    """All atoms in the symmetric mode: the +N/2 eigenstate of Jx."""
    n_atoms = space.n_atoms
    k = space.n_values + n_atoms // 2
    log_amp = 0.5 * (
        gammaln(n_atoms + 1) - gammaln(k + 1) - gammaln(n_atoms - k + 1)
    ) - 0.5 * n_atoms * np.log(2.0)
    return StateVector.from_amplitudes(space, np.exp(log_amp))


@lru_cache(maxsize=64)
def prepared_state(n_atoms: int, sigma: float) -> StateVector:
    """Exact ground state at u = u_of_sigma(N, sigma), memoized.

    The adaptive protocol prepares the same few widths over and over
    (first step and the final sigma = 1 step), so these are shared.
    """
    space = get_space(n_atoms)
    u = u_of_sigma(n_atoms, sigma)
    return exact_ground_state(space, WellParameters(interaction_ratio=u))
