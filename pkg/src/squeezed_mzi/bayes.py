"""Bayesian phase inference on a discretized phase axis.

Likelihoods P(n|phi) are evaluated from a :class:`~squeezed_mzi.interferometer.Channel`.
Because the Jy spectrum is the integer ladder -N/2..N/2, the output
amplitude <n|output(phi)> is a trigonometric polynomial in phi, so on a
uniform grid a whole row of phases is one chirp-z transform.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import CZT

from .interferometer import Channel, outcome_distribution
from .spinspace import StateVector, moments

HALF_PI = np.pi / 2
NODES_PER_WIDTH = 12
MIN_NODES = 2048
MAX_NODES = 2**21
# log-density drop treated as "outside the prior"
_LOG_FLOOR = 40.0
_ROW_CHUNK = 64


@dataclass(frozen=True, eq=False)
class PhaseGrid:
    """Strictly increasing phase nodes with trapezoid quadrature weights."""

    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ValueError("a phase grid needs at least two nodes")
        if not np.all(np.diff(nodes) > 0):
            raise ValueError("grid nodes must be strictly increasing")
        if nodes[0] < -HALF_PI - 1e-12 or nodes[-1] > HALF_PI + 1e-12:
            raise ValueError("grid nodes must lie in [-pi/2, pi/2]")
        nodes.flags.writeable = False
        object.__setattr__(self, "nodes", nodes)
        gaps = np.diff(nodes)
        weights = np.zeros_like(nodes)
        weights[:-1] += gaps / 2
        weights[1:] += gaps / 2
        weights.flags.writeable = False
        object.__setattr__(self, "weights", weights)
        spacing = gaps.mean()
        uniform = bool(np.all(np.abs(gaps - spacing) <= 1e-9 * spacing))
        object.__setattr__(self, "is_uniform", uniform)

    @classmethod
    def uniform(cls, lo: float, hi: float, count: int) -> "PhaseGrid":
        return cls(np.linspace(lo, hi, int(count)))

    @property
    def spacing(self) -> float:
        return float((self.nodes[-1] - self.nodes[0]) / (self.nodes.size - 1))

    def __len__(self):
        return self.nodes.size


@dataclass(frozen=True, eq=False)
class PhaseDistribution:
    """A probability density sampled on a :class:`PhaseGrid`."""

    grid: PhaseGrid
    density: np.ndarray

    def __post_init__(self):
        density = np.array(self.density, dtype=float)
        if density.shape != self.grid.nodes.shape:
            raise ValueError("density and grid sizes differ")
        if np.any(density < 0) or not np.all(np.isfinite(density)):
            raise ValueError("density must be finite and non-negative")
        total = density @ self.grid.weights
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"density is not normalized (integral {total!r})")
        density.flags.writeable = False
        object.__setattr__(self, "density", density)

    @classmethod
    def from_unnormalized(cls, grid: PhaseGrid, values) -> "PhaseDistribution":
        values = np.asarray(values, dtype=float)
        total = values @ grid.weights
        if not total > 0:
            raise ValueError("cannot normalize a density with zero mass")
        return cls(grid, values / total)

    @property
    def nodes(self) -> np.ndarray:
        return self.grid.nodes

    def cdf(self) -> np.ndarray:
        d, x = self.density, self.grid.nodes
        return np.concatenate([[0.0], np.cumsum(0.5 * (d[1:] + d[:-1]) * np.diff(x))])

    def mean(self) -> float:
        return float((self.density * self.nodes) @ self.grid.weights)

    def std(self) -> float:
        m = self.mean()
        var = (self.density * (self.nodes - m) ** 2) @ self.grid.weights
        return float(np.sqrt(max(var, 0.0)))

    def log_density_at(self, x) -> np.ndarray:
        """Log density linearly interpolated in log space; -inf off the grid."""
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            logd = np.log(self.density)
        finite = np.isfinite(logd)
        floor = logd[finite].max() - 2 * _LOG_FLOOR
        logd = np.where(finite, logd, floor)
        out = np.interp(x, self.nodes, logd)
        out[(x < self.nodes[0]) | (x > self.nodes[-1])] = -np.inf
        out[out <= floor] = -np.inf
        return out

    def effective_range(self, log_drop: float = _LOG_FLOOR) -> tuple[float, float]:
        """Smallest node interval outside which density < exp(-log_drop) * max."""
        d = self.density
        keep = np.nonzero(d > d.max() * np.exp(-log_drop))[0]
        lo = max(keep[0] - 1, 0)
        hi = min(keep[-1] + 1, d.size - 1)
        return float(self.nodes[lo]), float(self.nodes[hi])

    def recentred(self, shift: float) -> "PhaseDistribution":
        """The same density in a frame moved by ``shift`` (phi -> phi - shift).

        Nodes that leave [-pi/2, pi/2] or carry negligible mass are dropped.
        """
        nodes = self.nodes - shift
        lo, hi = self.effective_range()
        keep = (
            (nodes >= -HALF_PI)
            & (nodes <= HALF_PI)
            & (self.nodes >= lo)
            & (self.nodes <= hi)
        )
        if keep.sum() < 2:
            raise ValueError("recentred distribution has no support inside the domain")
        grid = PhaseGrid(nodes[keep])
        return PhaseDistribution.from_unnormalized(grid, self.density[keep])


def gaussian_prior(
    center: float, width: float, domain: tuple[float, float] = (-HALF_PI, HALF_PI)
) -> PhaseDistribution:
    """Gaussian prior of std ``width`` truncated to ``domain`` and renormalized."""
    if not width > 0:
        raise ValueError(f"prior width must be positive, got {width}")
    lo = max(domain[0], center - 9.0 * width)
    hi = min(domain[1], center + 9.0 * width)
    if not hi > lo:
        raise ValueError("prior has no support inside the domain")
    count = max(401, int(np.ceil((hi - lo) / (width / 50.0))) + 1)
    grid = PhaseGrid.uniform(lo, hi, count)
    z = (grid.nodes - center) / width
    return PhaseDistribution.from_unnormalized(grid, np.exp(-0.5 * z * z))


def flat_prior(lo: float = -HALF_PI, hi: float = HALF_PI) -> PhaseDistribution:
    grid = PhaseGrid.uniform(lo, hi, 2049)
    return PhaseDistribution.from_unnormalized(grid, np.ones(len(grid)))


def _as_channel(state) -> Channel:
    return state if isinstance(state, Channel) else Channel(state)


def likelihood_width(channel: Channel) -> float:
    """Rough single-shot phase resolution of the input state near phi = 0."""
    m = moments(channel.pulsed)
    n_atoms = channel.space.n_atoms
    return max(m.djz, 0.5) / max(abs(m.jx), n_atoms / 4.0)


def design_grid(
    state: StateVector | Channel,
    prior: PhaseDistribution,
    nodes_per_width: int = NODES_PER_WIDTH,
) -> PhaseGrid:
    """Uniform grid over the prior's support, resolving the narrower of the
    prior and the state's single-shot likelihood by ``nodes_per_width``.
    """
    channel = _as_channel(state)
    lo, hi = prior.effective_range()
    lo, hi = max(lo, -HALF_PI), min(hi, HALF_PI)
    width = min(likelihood_width(channel), prior.std())
    count = int(np.ceil((hi - lo) / (width / nodes_per_width))) + 1
    count = min(max(count, MIN_NODES), MAX_NODES)
    return PhaseGrid.uniform(lo, hi, count)


def likelihood(state: StateVector | Channel, outcomes, grid: PhaseGrid) -> np.ndarray:
    """P(n|phi) for each outcome n (rows) at each grid node (columns)."""
    channel = _as_channel(state)
    space = channel.space
    _, w = space.jy_eigen
    rows = np.array([space.index_of(n) for n in np.atleast_1d(outcomes)])
    out = np.empty((rows.size, len(grid)))
    if grid.is_uniform:
        h = grid.spacing
        transform = CZT(
            space.dimension,
            len(grid),
            w=np.exp(1j * h),
            a=np.exp(-1j * grid.nodes[0]),
        )
    for start in range(0, rows.size, _ROW_CHUNK):
        chunk = rows[start : start + _ROW_CHUNK]
        weighted = w[chunk] * channel.coeffs[None, :]
        if grid.is_uniform:
            amps = transform(weighted, axis=-1)
        else:
            m = np.arange(space.dimension)
            amps = weighted @ np.exp(1j * np.outer(m, grid.nodes))
        out[start : start + chunk.size] = amps.real**2 + amps.imag**2
    return out


def posterior(
    state: StateVector | Channel,
    n_measured: int,
    prior: PhaseDistribution,
    grid: PhaseGrid | None = None,
) -> PhaseDistribution:
    """P(phi | n) proportional to P(n | phi) * prior(phi), normalized on the grid."""
    channel = _as_channel(state)
    if grid is None:
        grid = design_grid(channel, prior)
    lik = likelihood(channel, [n_measured], grid)[0]
    if not lik.max() > 0:
        raise ValueError(
            f"likelihood of n={n_measured} vanishes on the whole grid; "
            "the grid does not cover the outcome's support"
        )
    with np.errstate(divide="ignore"):
        logp = prior.log_density_at(grid.nodes) + np.log(lik)
    if not np.isfinite(logp).any():
        raise ValueError("prior and likelihood do not overlap on the grid")
    dens = np.exp(logp - logp.max())
    return PhaseDistribution.from_unnormalized(grid, dens)


def averaged_inferred(
    state: StateVector | Channel,
    theta_true: float,
    prior: PhaseDistribution,
    grid: PhaseGrid | None = None,
) -> PhaseDistribution:
    """P(phi | theta) = sum_n P(phi | n) P(n | theta) over the outcome support."""
    channel = _as_channel(state)
    dist = outcome_distribution(channel, theta_true)
    if grid is None:
        grid = design_grid(channel, prior)
    logprior = prior.log_density_at(grid.nodes)
    if not np.isfinite(logprior).any():
        raise ValueError("prior has no support on the grid")
    prior_vals = np.exp(logprior - logprior[np.isfinite(logprior)].max())
    outcomes = dist.outcomes
    p_n = dist.support_probabilities
    acc = np.zeros(len(grid))
    for start in range(0, outcomes.size, _ROW_CHUNK):
        sl = slice(start, start + _ROW_CHUNK)
        rows = likelihood(channel, outcomes[sl], grid) * prior_vals
        z = rows @ grid.weights
        if np.any(z <= 0):
            bad = outcomes[sl][z <= 0][0]
            raise ValueError(f"likelihood of n={bad} vanishes on the whole grid")
        acc += (p_n[sl] / z) @ rows
    return PhaseDistribution.from_unnormalized(grid, acc)


def confidence_interval(
    dist: PhaseDistribution, center: float, mass: float = 0.68
) -> float:
    """Smallest half-width whose centered interval holds ``mass``.

    The CDF is the cumulative trapezoid integral, linear between nodes, so
    the interval mass is piecewise linear in the half-width and the answer
    is found exactly between consecutive breakpoints.
    """
    x = dist.nodes
    if not x[0] <= center <= x[-1]:
        raise ValueError(f"center {center} lies outside the grid")
    if not 0 < mass <= 1:
        raise ValueError(f"mass must be in (0, 1], got {mass}")
    cdf = dist.cdf()
    total = cdf[-1]
    if mass > total + 1e-9:
        raise ValueError(f"grid holds mass {total:.6g} < requested {mass}")
    target = min(mass, total)

    def enclosed(half):
        return np.interp(center + half, x, cdf) - np.interp(center - half, x, cdf)

    breaks = np.unique(np.abs(x - center))
    values = enclosed(breaks)
    k = int(np.searchsorted(values, target - 1e-15, side="left"))
    if k >= breaks.size:
        k = breaks.size - 1
    if k == 0:
        return float(breaks[0])
    b0, b1 = breaks[k - 1], breaks[k]
    v0, v1 = values[k - 1], values[k]
    if v1 <= v0:
        return float(b1)
    return float(b0 + (target - v0) * (b1 - b0) / (v1 - v0))


def map_estimate(dist: PhaseDistribution) -> float:
    """Maximum of the density, refined by a parabola through three nodes.

    Ties resolve to the leftmost maximal node; flat tops are not refined.
    """
    d, x = dist.density, dist.nodes
    k = int(np.argmax(d))
    if k == 0 or k == d.size - 1:
        return float(x[k])
    x0, x1, x2 = x[k - 1 : k + 2]
    y0, y1, y2 = d[k - 1 : k + 2]
    denom = (x0 - x1) * (x0 - x2) * (x1 - x2)
    a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom
    if not a < 0:
        return float(x1)
    b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / denom
    vertex = -b / (2 * a)
    return float(min(max(vertex, x0), x2))
