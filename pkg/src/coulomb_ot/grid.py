"""Uniform cell-centred grids, densities and product fields.

A :class:`GridSpec` is a cubic grid of ``n`` cells per axis on a box in
``R^d``.  Values live at cell centres and integrals use the midpoint rule,
so the piecewise-constant representation is integrated exactly.

Product fields (plans, wavefunction amplitudes) live on ``grid^N`` and are
stored with shape ``(n,) * (d * N)``: particle ``i`` owns axes
``i*d .. i*d + d - 1``.  The same memory reshaped to ``(n**d,) * N`` is the
"slot" view used for kernel contractions.
"""

from dataclasses import dataclass, field
from math import erf, sqrt
from pathlib import Path

import numpy as np

from .exceptions import InvalidDataError, InvalidGridError, InvalidInputError, TruncationError
from .validation import DEFAULT_FIELD_CAP, check_cells

MASS_TOL = 1e-12
TRUNCATION_TOL = 1e-6


@dataclass(frozen=True)
class GridSpec:
    d: int
    box_min: tuple
    box_max: tuple
    n: int

    @property
    def h(self):
        """Spacing per axis, shape ``(d,)``."""
        return (np.asarray(self.box_max) - np.asarray(self.box_min)) / self.n

    @property
    def cell_volume(self):
        return float(np.prod(self.h))

    @property
    def shape(self):
        return (self.n,) * self.d

    @property
    def n_cells(self):
        return self.n**self.d

    @property
    def volume(self):
        return float(np.prod(np.asarray(self.box_max) - np.asarray(self.box_min)))

    def axis_centers(self, axis=0):
        return self.box_min[axis] + (np.arange(self.n) + 0.5) * self.h[axis]

    def center(self, index):
        """Coordinates of the cell with multi-index ``index``."""
        index = np.asarray(index, dtype=float)
        return np.asarray(self.box_min) + (index + 0.5) * self.h

    def cell_centers(self):
        """All cell centres, shape ``(n**d, d)`` in row-major cell order."""
        axes = [self.axis_centers(k) for k in range(self.d)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def distance_matrix(self):
        """Euclidean distances between all pairs of cell centres."""
        c = self.cell_centers()
        diff = c[:, None, :] - c[None, :, :]
        return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))

    def product_spacing(self, N):
        return np.tile(self.h, N)


def build_grid(d, box_min, box_max, n):
    """Build a cubic ``n**d`` grid on ``[box_min, box_max]``.

    Scalars for the box bounds are broadcast to all ``d`` axes.
    """
    if int(d) != d or d < 1:
        raise InvalidGridError(f"dimension must be a positive integer, got {d!r}")
    if int(n) != n or n < 2:
        raise InvalidGridError(f"need at least 2 points per axis, got {n!r}")
    d, n = int(d), int(n)
    lo = np.broadcast_to(np.asarray(box_min, dtype=float), (d,))
    hi = np.broadcast_to(np.asarray(box_max, dtype=float), (d,))
    if not np.all(np.isfinite(lo)) or not np.all(np.isfinite(hi)) or np.any(hi <= lo):
        raise InvalidGridError(f"box must have positive extent, got {lo} .. {hi}")
    return GridSpec(d, tuple(float(v) for v in lo), tuple(float(v) for v in hi), n)


def _readonly(values):
    values = np.array(values, copy=True)
    values.setflags(write=False)
    return values


@dataclass(frozen=True, eq=False)
class DiscreteDensity:
    """Nonnegative grid function with unit midpoint-rule mass."""

    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.size != self.grid.n_cells:
            raise InvalidDataError(f"expected {self.grid.n_cells} values, got {values.size}")
        values = values.reshape(self.grid.shape)
        if not np.all(np.isfinite(values)) or values.min() < 0:
            raise InvalidDataError("density values must be finite and nonnegative")
        mass = values.sum() * self.grid.cell_volume
        if abs(mass - 1.0) > MASS_TOL:
            raise InvalidDataError(f"density must have unit mass, got {mass!r}")
        object.__setattr__(self, "values", _readonly(values))

    @classmethod
    def from_masses(cls, grid, masses):
        masses = np.asarray(masses, dtype=float)
        total = masses.sum()
        if not total > 0:
            raise InvalidDataError("masses must have positive total")
        return cls(grid, masses.reshape(grid.shape) / (total * grid.cell_volume))

    @property
    def masses(self):
        """Cell masses ``values * h**d``, flattened in cell order."""
        return self.values.ravel() * self.grid.cell_volume


@dataclass(frozen=True, eq=False)
class ProductField:
    """A field on ``grid**arity``; plans hold a density per unit volume."""

    grid: GridSpec
    arity: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if int(self.arity) != self.arity or self.arity < 1:
            raise InvalidInputError(f"arity must be a positive integer, got {self.arity!r}")
        shape = (self.grid.n,) * (self.grid.d * self.arity)
        values = np.asarray(self.values)
        if values.size != np.prod(shape, dtype=np.int64):
            raise InvalidDataError(f"expected {np.prod(shape)} values, got {values.size}")
        object.__setattr__(self, "values", _readonly(values.reshape(shape)))

    @classmethod
    def from_masses(cls, grid, arity, masses):
        vol = grid.cell_volume**arity
        return cls(grid, arity, np.asarray(masses, dtype=float) / vol)

    @property
    def cell_volume(self):
        return self.grid.cell_volume**self.arity

    @property
    def slot_shape(self):
        return (self.grid.n_cells,) * self.arity

    def slots(self):
        """Values viewed with one axis per particle."""
        return self.values.reshape(self.slot_shape)

    @property
    def masses(self):
        """Cell masses in the slot view."""
        return self.slots() * self.cell_volume

    @property
    def total_mass(self):
        return float(self.values.sum() * self.cell_volume)

    @property
    def spacing(self):
        return self.grid.product_spacing(self.arity)


# --- analytic sources -------------------------------------------------------


def _gauss_interval_mass(mu, sigma, lo, hi):
    s = sigma * sqrt(2.0)
    return 0.5 * (erf((hi - mu) / s) - erf((lo - mu) / s))


@dataclass(frozen=True)
class Gaussian:
    """Isotropic normal density with mean ``mu`` and standard deviation ``sigma``."""

    mu: tuple
    sigma: float

    def pdf(self, points):
        mu = np.broadcast_to(np.asarray(self.mu, dtype=float), (points.shape[-1],))
        d = points.shape[-1]
        r2 = ((points - mu) ** 2).sum(axis=-1)
        return np.exp(-r2 / (2 * self.sigma**2)) / (2 * np.pi * self.sigma**2) ** (d / 2)

    def mass_inside(self, lo, hi):
        mu = np.broadcast_to(np.asarray(self.mu, dtype=float), (len(lo),))
        out = 1.0
        for m, a, b in zip(mu, lo, hi):
            out *= _gauss_interval_mass(m, self.sigma, a, b)
        return out


@dataclass(frozen=True)
class GaussianMixture:
    weights: tuple
    components: tuple

    def pdf(self, points):
        w = np.asarray(self.weights, dtype=float)
        w = w / w.sum()
        return sum(wi * c.pdf(points) for wi, c in zip(w, self.components))

    def mass_inside(self, lo, hi):
        w = np.asarray(self.weights, dtype=float)
        w = w / w.sum()
        return float(sum(wi * c.mass_inside(lo, hi) for wi, c in zip(w, self.components)))


@dataclass(frozen=True)
class Uniform:
    """Uniform density on the sub-box ``[low, high]``."""

    low: tuple
    high: tuple

    def _bounds(self, d):
        lo = np.broadcast_to(np.asarray(self.low, dtype=float), (d,))
        hi = np.broadcast_to(np.asarray(self.high, dtype=float), (d,))
        return lo, hi

    def pdf(self, points):
        lo, hi = self._bounds(points.shape[-1])
        inside = np.all((points >= lo) & (points <= hi), axis=-1)
        return inside / np.prod(hi - lo)

    def mass_inside(self, lo, hi):
        a, b = self._bounds(len(lo))
        overlap = np.clip(np.minimum(b, hi) - np.maximum(a, lo), 0, None)
        return float(np.prod(overlap / (b - a)))


def gaussian(mu, sigma):
    if not sigma > 0:
        raise InvalidInputError(f"sigma must be > 0, got {sigma!r}")
    return Gaussian(tuple(np.atleast_1d(np.asarray(mu, dtype=float)).tolist()), float(sigma))


def mixture(weights, components):
    if len(weights) != len(components) or not len(weights):
        raise InvalidInputError("mixture needs one weight per component")
    if min(weights) < 0 or sum(weights) <= 0:
        raise InvalidInputError("mixture weights must be nonnegative with positive sum")
    return GaussianMixture(tuple(float(w) for w in weights), tuple(components))


def uniform(low, high):
    lo = np.atleast_1d(np.asarray(low, dtype=float))
    hi = np.atleast_1d(np.asarray(high, dtype=float))
    if np.any(hi <= lo):
        raise InvalidInputError("uniform needs high > low on every axis")
    return Uniform(tuple(lo.tolist()), tuple(hi.tolist()))


def ingest_density(grid, source):
    """Sample ``source`` at cell centres and renormalise to unit mass.

    ``source`` is one of the analytic families above, a path to a DGF1
    file, or an array of nonnegative values with the grid's shape.
    """
    if isinstance(source, (str, Path)):
        from .dgf1 import read_density

        return read_density(source, grid)
    if isinstance(source, np.ndarray):
        values = np.asarray(source, dtype=float)
        if values.size != grid.n_cells:
            raise InvalidDataError(f"expected {grid.n_cells} values, got {values.size}")
        if not np.all(np.isfinite(values)) or values.min() < 0:
            raise InvalidDataError("density values must be finite and nonnegative")
        return DiscreteDensity.from_masses(grid, values.ravel())
    inside = source.mass_inside(grid.box_min, grid.box_max)
    if inside < 1.0 - TRUNCATION_TOL:
        raise TruncationError(f"only {inside:.3g} of the mass lies inside the box")
    values = source.pdf(grid.cell_centers())
    if not values.sum() > 0:
        raise TruncationError("source vanishes at every cell centre")
    return DiscreteDensity.from_masses(grid, values)


# --- quadrature and derivatives ---------------------------------------------


def integrate(grid_or_spacing, values):
    """Midpoint-rule integral of a cell-centred field."""
    if isinstance(grid_or_spacing, GridSpec):
        vol = grid_or_spacing.cell_volume
    else:
        vol = float(np.prod(grid_or_spacing))
    return values.sum() * vol


def gradient(values, spacing, axis):
    """Central differences in the interior, one-sided at the box faces."""
    return np.gradient(values, spacing[axis], axis=axis, edge_order=1)


def dirichlet_energy(values, spacing):
    """Finite-difference ``\\int |grad f|^2`` over all axes of ``values``.

    Complex fields use the squared modulus.  Axes are processed one at a
    time so only a single gradient temporary is alive.
    """
    spacing = np.broadcast_to(np.asarray(spacing, dtype=float), (values.ndim,))
    total = 0.0
    for k in range(values.ndim):
        g = gradient(values, spacing, k)
        total += float(np.sum(g.real**2 + g.imag**2) if np.iscomplexobj(g) else np.sum(g * g))
    return total * float(np.prod(spacing))


def gradient_sq(values, spacing):
    """Pointwise ``|grad f|^2`` (finite differences), same shape as ``values``."""
    spacing = np.broadcast_to(np.asarray(spacing, dtype=float), (values.ndim,))
    out = np.zeros(values.shape)
    for k in range(values.ndim):
        g = gradient(values, spacing, k)
        out += g.real**2 + g.imag**2 if np.iscomplexobj(g) else g * g
    return out


def sqrt_density_h1(rho):
    """``||sqrt(rho)||^2_{H^1} = \\int rho + \\int |grad sqrt(rho)|^2``."""
    root = np.sqrt(rho.values)
    return integrate(rho.grid, rho.values) + dirichlet_energy(root, rho.grid.h)


def marginal(plan, axis):
    """One-particle marginal of ``plan`` on slot ``axis`` (0-based)."""
    if not 0 <= axis < plan.arity:
        raise InvalidInputError(f"axis must be in [0, {plan.arity}), got {axis!r}")
    others = tuple(i for i in range(plan.arity) if i != axis)
    masses = plan.masses.sum(axis=others) if others else plan.masses
    return masses.reshape(plan.grid.shape) / plan.grid.cell_volume


def marginal_density(plan, axis):
    """Like :func:`marginal` but wrapped as a validated :class:`DiscreteDensity`."""
    return DiscreteDensity(plan.grid, marginal(plan, axis))


def marginal_l1_errors(plan, rho):
    """Per-axis L1 distance between the plan's marginals and ``rho``."""
    return [float(np.abs(marginal(plan, i) - rho.values).sum() * rho.grid.cell_volume)
            for i in range(plan.arity)]


def product_cells(grid, N, cap=DEFAULT_FIELD_CAP):
    return check_cells(grid.n_cells**N, cap, what=f"product field (N={N})")
