"""Discretization metadata: spatial mesh, angular quadrature, frequency groups
and the time grid with its block partition."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ConfigurationError(ValueError):
    """Raised for inconsistent discretization or run parameters."""


@dataclass(frozen=True)
class SpatialMesh:
    """Uniform orthogonal 2D mesh on ``[0, lx] x [0, ly]``.

    Cell fields are stored as arrays of shape ``(nx, ny)`` indexed ``[i, j]``;
    flattened vectors use C order (``k = i * ny + j``).  Faces normal to x
    form an ``(nx + 1, ny)`` array, faces normal to y an ``(nx, ny + 1)`` array.
    """

    nx: int
    ny: int
    lx: float
    ly: float

    def __post_init__(self):
        if int(self.nx) < 1 or int(self.ny) < 1:
            raise ConfigurationError("mesh needs at least one cell per axis")
        if not (self.lx > 0 and self.ly > 0):
            raise ConfigurationError("domain extents must be positive")

    @property
    def dx(self) -> float:
        return self.lx / self.nx

    @property
    def dy(self) -> float:
        return self.ly / self.ny

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def ncells(self) -> int:
        return self.nx * self.ny

    @property
    def cell_volume(self) -> float:
        return self.dx * self.dy

    def cell_centers(self):
        x = (np.arange(self.nx) + 0.5) * self.dx
        y = (np.arange(self.ny) + 0.5) * self.dy
        return np.meshgrid(x, y, indexing="ij")


# Quadrant sign pattern for directions, in storage order.
QUADRANT_SIGNS = ((1, 1), (-1, 1), (-1, -1), (1, -1))


@dataclass(frozen=True)
class AngularQuadrature:
    """Discrete ordinates on the unit sphere reduced to 2D.

    Directions are stored quadrant-major: ``m = q * per_quadrant + k`` with
    quadrant signs from ``QUADRANT_SIGNS``.  Every quadrant holds the same
    magnitudes ``(|mu|, |eta|)`` in the same order, so reflections map index
    ``k`` onto itself.  Each stored direction stands for the pair ``+-xi``;
    its weight covers both hemispheres so the weights sum to ``4 pi``.
    """

    mu: np.ndarray
    eta: np.ndarray
    xi: np.ndarray
    weights: np.ndarray

    @property
    def count(self) -> int:
        return self.weights.size

    @property
    def per_quadrant(self) -> int:
        return self.weights.size // 4

    def quadrant_view(self, a: np.ndarray) -> np.ndarray:
        """Reshape the direction axis of ``a`` (axis 0) into ``(4, per_quadrant)``."""
        return a.reshape((4, self.per_quadrant) + a.shape[1:])


def build_quadrature(n_polar: int, n_azimuthal: int) -> AngularQuadrature:
    """Product Gauss-Legendre (polar) x Chebyshev (azimuthal) set.

    ``n_polar`` positive Gauss points in the polar cosine and ``n_azimuthal``
    equally weighted midpoint angles per quadrant give
    ``M = 4 * n_polar * n_azimuthal`` directions.
    """
    n_polar = int(n_polar)
    n_azimuthal = int(n_azimuthal)
    if n_polar < 1 or n_azimuthal < 1:
        raise ConfigurationError("quadrature orders must be positive integers")

    nodes, wts = np.polynomial.legendre.leggauss(2 * n_polar)
    keep = nodes > 0
    xi_k, wxi = nodes[keep], wts[keep]
    phi = (np.arange(n_azimuthal) + 0.5) * (0.5 * np.pi / n_azimuthal)
    wphi = 0.5 * np.pi / n_azimuthal

    # Both hemispheres folded into one stored direction: factor 2.
    xi_q = np.repeat(xi_k, n_azimuthal)
    sin_q = np.sqrt(1.0 - xi_q**2)
    mu_q = sin_q * np.tile(np.cos(phi), n_polar)
    eta_q = sin_q * np.tile(np.sin(phi), n_polar)
    w_q = 2.0 * np.repeat(wxi, n_azimuthal) * wphi

    if np.any(mu_q == 0.0) or np.any(eta_q == 0.0):
        raise ConfigurationError("quadrature has a direction parallel to a mesh axis")

    mu = np.concatenate([sx * mu_q for sx, _ in QUADRANT_SIGNS])
    eta = np.concatenate([sy * eta_q for _, sy in QUADRANT_SIGNS])
    xi = np.tile(xi_q, 4)
    w = np.tile(w_q, 4)
    return AngularQuadrature(mu=mu, eta=eta, xi=xi, weights=w)


@dataclass(frozen=True)
class FrequencyGroups:
    """Photon frequency group boundaries ``nu_0 < ... < nu_G`` in keV.

    With ``fold_tails`` the Planck spectrum below ``nu_0`` is assigned to
    the first group and the tail above ``nu_G`` to the last one, so the group
    Planck functions add up to the full spectrum.
    """

    bounds: np.ndarray
    fold_tails: bool = True

    def __post_init__(self):
        b = np.asarray(self.bounds, dtype=float)
        if b.ndim != 1 or b.size < 2:
            raise ConfigurationError("need at least two group boundaries")
        if not b[0] > 0 or np.any(np.diff(b) <= 0) or not np.all(np.isfinite(b)):
            raise ConfigurationError("group boundaries must be positive, finite and increasing")
        object.__setattr__(self, "bounds", b)

    @property
    def count(self) -> int:
        return self.bounds.size - 1

    @property
    def edges(self) -> np.ndarray:
        """Integration limits actually used (tails folded to 0 and inf)."""
        e = self.bounds.copy()
        if self.fold_tails:
            e[0] = 0.0
            e[-1] = np.inf
        return e

    @classmethod
    def logarithmic(cls, count: int, nu_min: float = 1e-2, nu_max: float = 1e2,
                    fold_tails: bool = True) -> "FrequencyGroups":
        if int(count) < 1:
            raise ConfigurationError("group count must be positive")
        return cls(np.geomspace(nu_min, nu_max, int(count) + 1), fold_tails)


@dataclass(frozen=True)
class TimeBlockPartition:
    """Uniform time steps grouped into consecutive blocks.

    ``block_edges`` holds the step indices ``N_0 = 0 < N_1 < ... < N_B = N``.
    """

    step_edges: np.ndarray
    block_edges: np.ndarray = field(repr=False)
    step: float = 0.0

    @property
    def nsteps(self) -> int:
        return self.step_edges.size - 1

    @property
    def nblocks(self) -> int:
        return self.block_edges.size - 1

    @property
    def block_sizes(self) -> np.ndarray:
        return np.diff(self.block_edges)

    def steps_in_block(self, b: int) -> range:
        """1-based step indices ``n`` with ``t^n`` inside block ``b`` (0-based)."""
        return range(int(self.block_edges[b]) + 1, int(self.block_edges[b + 1]) + 1)

    def dt(self, n: int) -> float:
        # nominal uniform step; edges may differ from n*dt in the last ulp
        return self.step


def build_time_blocks(dt: float, t_end: float, block_len: float,
                      rtol: float = 1e-12) -> TimeBlockPartition:
    if not (dt > 0 and t_end > 0 and block_len > 0):
        raise ConfigurationError("dt, t_end and block_len must be positive")
    nsteps = int(round(t_end / dt))
    if nsteps < 1 or abs(nsteps * dt - t_end) > rtol * t_end:
        raise ConfigurationError(f"t_end={t_end} is not a multiple of dt={dt}")
    if abs(block_len - t_end) <= rtol * t_end:
        per_block = nsteps
    else:
        per_block = int(round(block_len / dt))
        if per_block < 1 or abs(per_block * dt - block_len) > rtol * block_len:
            raise ConfigurationError(
                f"block length {block_len} is not a multiple of dt={dt}")
    part = partition_by_steps(dt, nsteps, per_block)
    part.step_edges[-1] = t_end
    return part


def partition_by_steps(dt: float, nsteps: int, per_block: int) -> TimeBlockPartition:
    """Blocks of ``per_block`` steps; the last block may be shorter."""
    if nsteps < 1 or per_block < 1:
        raise ConfigurationError("step and block counts must be positive")
    edges = np.arange(nsteps + 1) * float(dt)
    blocks = list(range(0, nsteps, per_block)) + [nsteps]
    return TimeBlockPartition(step_edges=edges, block_edges=np.asarray(blocks), step=float(dt))
