"""Pseudo-spin Hilbert space of N atoms in two modes.

States are expanded in the number-difference basis |n>, n = -N/2 .. N/2,
where n is the eigenvalue of Jz. Rotations about y use a one-time
eigen-decomposition of Jy, which is cached on the :class:`SpinSpace`.

The phase convention is the usual one, J+ = Jx + iJy, with

    <n+1|J+|n> = sqrt(j(j+1) - n(n+1)),   j = N/2.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import NamedTuple

import numpy as np
from scipy.linalg import eigh_tridiagonal

NORM_TOL = 1e-12


class SpinSpace:
    """The (N+1)-dimensional space of N atoms shared between two modes.

    Parameters
    ----------
    n_atoms : int
        Total atom number N. Must be a positive even integer so that the
        number difference n is integer valued.
    """

    def __init__(self, n_atoms: int):
        if isinstance(n_atoms, bool) or int(n_atoms) != n_atoms:
            raise ValueError(f"n_atoms must be an integer, got {n_atoms!r}")
        n_atoms = int(n_atoms)
        if n_atoms <= 0:
            raise ValueError(f"n_atoms must be positive, got {n_atoms}")
        if n_atoms % 2:
            raise ValueError(
                f"n_atoms must be even so that n is integer valued, got {n_atoms}"
            )
        self.n_atoms = n_atoms
        self.j = n_atoms / 2
        self.dimension = n_atoms + 1
        self.n_values = np.arange(-(n_atoms // 2), n_atoms // 2 + 1)
        self.n_values.flags.writeable = False
        m = self.n_values[:-1].astype(float)
        # <n+1|J+|n> for n = -N/2 .. N/2 - 1
        ladder = np.sqrt(self.j * (self.j + 1) - m * (m + 1))
        ladder.flags.writeable = False
        self.ladder = ladder

    def __repr__(self):
        return f"SpinSpace(n_atoms={self.n_atoms})"

    def index_of(self, n: int) -> int:
        """Array index of the number difference ``n``."""
        k = int(n) + self.n_atoms // 2
        if int(n) != n or not 0 <= k < self.dimension:
            raise ValueError(f"n={n} is not a number difference for N={self.n_atoms}")
        return k

    @cached_property
    def jy_eigen(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigenvalues and real eigenvectors of the rotated Jy matrix.

        With D = diag(i^k), D^dagger Jy D is the real symmetric tridiagonal
        matrix -Jx, so Jy = (D W) diag(lam) (D W)^dagger with W real. Only W
        is stored; :attr:`jy_eigenvectors` assembles the complex form.
        """
        diag = np.zeros(self.dimension)
        lam, w = eigh_tridiagonal(diag, -0.5 * self.ladder)
        exact = self.n_values.astype(float)
        if np.max(np.abs(lam - exact)) > 1e-9:
            raise ArithmeticError("Jy spectrum deviates from -N/2..N/2")
        lam = exact
        lam.flags.writeable = False
        w.flags.writeable = False
        return lam, w

    @property
    def basis_phases(self) -> np.ndarray:
        """Diagonal of D = diag(i^k) linking Jy to the real matrix -Jx."""
        return 1j ** (np.arange(self.dimension) % 4)

    @property
    def jy_eigenvectors(self) -> np.ndarray:
        """Complex orthonormal eigenvectors V of Jy (columns), V = D W."""
        _, w = self.jy_eigen
        return self.basis_phases[:, None] * w


@lru_cache(maxsize=8)
def get_space(n_atoms: int) -> SpinSpace:
    """Shared :class:`SpinSpace` instances, one per atom number."""
    return SpinSpace(n_atoms)


@dataclass(frozen=True, eq=False)
class StateVector:
    """Normalized complex amplitudes over ``space.n_values``."""

    space: SpinSpace
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex)
        if amps.shape != (self.space.dimension,):
            raise ValueError(
                f"expected {self.space.dimension} amplitudes, got shape {amps.shape}"
            )
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"state is not normalized (norm={norm!r})")
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_amplitudes(cls, space: SpinSpace, amplitudes) -> "StateVector":
        amps = np.asarray(amplitudes, dtype=complex)
        norm = np.linalg.norm(amps)
        if norm == 0 or not np.isfinite(norm):
            raise ValueError("cannot normalize a zero or non-finite vector")
        return cls(space, amps / norm)

    @classmethod
    def basis(cls, space: SpinSpace, n: int) -> "StateVector":
        amps = np.zeros(space.dimension, dtype=complex)
        amps[space.index_of(n)] = 1.0
        return cls(space, amps)

    @property
    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def overlap(self, other: "StateVector") -> complex:
        """<self|other>."""
        _check_same_space(self.space, other.space)
        return complex(np.vdot(self.amplitudes, other.amplitudes))


def _check_same_space(a: SpinSpace, b: SpinSpace):
    if a.n_atoms != b.n_atoms:
        raise ValueError(f"dimension mismatch: N={a.n_atoms} vs N={b.n_atoms}")


def build_operators(space: SpinSpace) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Dense Jx, Jy, Jz matrices in the |n> basis.

    Intended for small N and for oracles; production code works with the
    tridiagonal structure directly.
    """
    jplus = np.diag(space.ladder.astype(complex), -1)
    jx = (jplus + jplus.conj().T) / 2
    jy = (jplus - jplus.conj().T) / 2j
    jz = np.diag(space.n_values.astype(complex))
    return jx, jy, jz


def apply_jplus(space: SpinSpace, amps: np.ndarray) -> np.ndarray:
    out = np.zeros_like(amps, dtype=complex)
    out[1:] = space.ladder * amps[:-1]
    return out


def apply_jx(space: SpinSpace, amps: np.ndarray) -> np.ndarray:
    out = np.zeros_like(amps, dtype=complex)
    out[1:] += 0.5 * space.ladder * amps[:-1]
    out[:-1] += 0.5 * space.ladder * amps[1:]
    return out


def apply_jy(space: SpinSpace, amps: np.ndarray) -> np.ndarray:
    out = np.zeros_like(amps, dtype=complex)
    out[1:] += -0.5j * space.ladder * amps[:-1]
    out[:-1] += 0.5j * space.ladder * amps[1:]
    return out


def rotate_y(state: StateVector, angle: float) -> StateVector:
    """Return exp(-i angle Jy)|state>, via the cached Jy eigenbasis."""
    space = state.space
    lam, w = space.jy_eigen
    d = space.basis_phases
    coeffs = w.T @ (d.conj() * state.amplitudes)
    out = d * (w @ (np.exp(-1j * angle * lam) * coeffs))
    return StateVector.from_amplitudes(space, out)


def pi_pulse_x(state: StateVector) -> StateVector:
    """Return exp(i pi Jx)|state>.

    For integer j this is n -> -n with the uniform phase i^N, i.e. a rotation
    by pi about x maps |j, m> to e^{i pi j}|j, -m>.
    """
    phase = 1j ** (state.space.n_atoms % 4)
    return StateVector(state.space, phase * state.amplitudes[::-1])


class Moments(NamedTuple):
    jx: float
    jy: float
    jz: float
    djx: float
    djy: float
    djz: float


def moments(state: StateVector) -> Moments:
    """Expectation values and standard deviations of Jx, Jy, Jz."""
    space = state.space
    psi = state.amplitudes
    jp = np.vdot(psi, apply_jplus(space, psi))
    jx, jy = jp.real, jp.imag
    p = state.probabilities
    n = space.n_values
    jz = float(p @ n)
    jz2 = float(p @ (n.astype(float) ** 2))
    jx2 = float(np.linalg.norm(apply_jx(space, psi)) ** 2)
    jy2 = float(np.linalg.norm(apply_jy(space, psi)) ** 2)

    def _std(second, first):
        return float(np.sqrt(max(second - first * first, 0.0)))

    return Moments(
        float(jx), float(jy), jz, _std(jx2, jx), _std(jy2, jy), _std(jz2, jz)
    )


def coherent_top(space: SpinSpace) -> StateVector:
    """|n = N/2>, the north pole of the Bloch sphere."""
    return StateVector.basis(space, space.n_atoms // 2)


def bloch_quasiprobability(state: StateVector, thetas, phis) -> np.ndarray:
    """Bloch-sphere quasiprobability of ``state`` on a (theta, phi) grid.

    P(theta, phi) = |<N/2| exp(i Jy (pi/2 - theta)) exp(i Jz phi) |psi>|^2,
    with theta the latitude (theta = 0 on the equator, +x at phi = 0).
    Returns an array of shape ``(len(thetas), len(phis))``.
    """
    space = state.space
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    phis = np.atleast_1d(np.asarray(phis, dtype=float))
    lam, w = space.jy_eigen
    d = space.basis_phases
    # exp(-i beta Jy)|N/2>, one column per latitude
    top = d[-1].conjugate() * w[-1, :]
    beta = np.pi / 2 - thetas
    rotated = d[:, None] * (w @ (np.exp(-1j * np.outer(lam, beta)) * top[:, None]))
    weighted = rotated.conj() * state.amplitudes[:, None]
    phase = np.exp(1j * np.outer(space.n_values, phis))
    amp = weighted.T @ phase
    return np.abs(amp) ** 2
