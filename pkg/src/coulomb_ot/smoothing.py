"""Smoothing transport plans while keeping their marginals exact.

The pipeline has three stages:

1. mollify the plan with the product bump kernel, which blurs the
   marginals to ``rho * eta_eps``;
2. push every particle back through the composition kernel
   ``gamma_eps(x, y) = rho(x) eta_eps(y - x) / rho_eps(y)``, which restores
   the marginal ``rho`` exactly;
3. take the square root of the result as an ``H^1`` amplitude whose
   Dirichlet energy is bounded by ``N (||sqrt rho||^2_{H^1} + K / (4 eps^2))``.

On a grid the kernel is column-normalised so that mass, and with it the
marginal identities, hold to rounding.  Convolutions are evaluated as dense
per-particle contractions, never by FFT, so cells outside the kernel
support stay exactly zero.
"""

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate

from .exceptions import InputMismatchError, InvalidInputError, UnderResolvedKernelError
from .grid import (DiscreteDensity, ProductField, dirichlet_energy, gradient, marginal_l1_errors,
                   sqrt_density_h1)
from .transport import (cost_of_plan, is_symmetric, lp_cap, min_pair_distance, solve_mmot,
                        support_gap, symmetrize)
from .validation import check_density, check_plan, check_positive

ZERO_DENSITY = 1e-300
MARGINAL_MISMATCH_TOL = 1e-8


# --- the bump kernel ---------------------------------------------------------


def _log_bump(s):
    # log of exp(-1/s) for s = 1 - |u|^2 > 0
    return -1.0 / s


def _sphere_area(d):
    return 2 * math.pi ** (d / 2) / math.gamma(d / 2)


@lru_cache(maxsize=None)
def mollifier_constant(d):
    """Normalisation ``k(d)`` and relative-energy constant ``K(d)`` of the bump.

    ``k`` makes ``k exp(-1/(1-|u|^2))`` a probability density on the unit
    ball; ``K`` is ``\\int |grad eta|^2 / eta`` over the ball.  Both come
    from adaptive radial quadrature.
    """
    if d not in (1, 2, 3, 4):
        raise InvalidInputError(f"mollifier constants are tabulated for d in 1..4, got {d!r}")
    area = _sphere_area(d)

    def mass(r):
        s = 1.0 - r * r
        return r ** (d - 1) * math.exp(_log_bump(s)) if s > 0 else 0.0

    def energy(r):
        s = 1.0 - r * r
        if s <= 0:
            return 0.0
        return 4.0 * r ** (d + 1) * math.exp(_log_bump(s) - 4.0 * math.log(s))

    m, _ = integrate.quad(mass, 0.0, 1.0, epsabs=0.0, epsrel=1e-12, limit=200)
    e, _ = integrate.quad(energy, 0.0, 1.0, epsabs=0.0, epsrel=1e-12, limit=200)
    k = 1.0 / (area * m)
    return k, k * area * e


@dataclass(frozen=True)
class MollifierSpec:
    d: int
    eps: float
    k: float
    K: float

    def __call__(self, r):
        """``eta_eps`` at distance ``r`` from the origin."""
        u2 = (np.asarray(r, dtype=float) / self.eps) ** 2
        s = 1.0 - u2
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            out = np.where(s > 0, self.k * np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
        return out / self.eps**self.d

    def sqrt(self, r):
        u2 = (np.asarray(r, dtype=float) / self.eps) ** 2
        s = 1.0 - u2
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            out = np.where(s > 0, math.sqrt(self.k) * np.exp(-0.5 / np.where(s > 0, s, 1.0)), 0.0)
        return out / self.eps ** (self.d / 2)

    @property
    def relative_energy(self):
        """``\\int |grad eta_eps|^2 / eta_eps = K / eps^2``."""
        return self.K / self.eps**2


def mollifier(d, eps):
    eps = check_positive("eps", eps)
    k, K = mollifier_constant(d)
    return MollifierSpec(d, eps, k, K)


def discrete_relative_energy(d, eps, h):
    """Grid estimate of ``\\int |grad eta_eps|^2 / eta_eps`` at spacing ``h``.

    Evaluated as ``4 \\int |grad sqrt(eta_eps)|^2`` with central differences,
    which stays finite where the bump is tiny.
    """
    spec = mollifier(d, eps)
    half = int(math.ceil(eps / h)) + 2
    c = (np.arange(-half, half) + 0.5) * h
    r2 = 0.0
    for k in range(d):
        shape = [1] * d
        shape[k] = -1
        r2 = r2 + (c**2).reshape(shape)
    root = spec.sqrt(np.sqrt(r2))
    return 4.0 * dirichlet_energy(root, np.full(d, h))


# --- kernels on a grid -------------------------------------------------------


def _check_resolved(grid, eps):
    if eps < 2.0 * float(grid.h.max()) * (1 - 1e-12):
        raise UnderResolvedKernelError(f"eps={eps:g} is below twice the grid spacing {grid.h.max():g}")


def kernel_matrix(grid, eps):
    """Column-stochastic mollifier matrix ``E[y, x] ~ eta_eps(y - x) h^d``."""
    eps = check_positive("eps", eps)
    _check_resolved(grid, eps)
    E = mollifier(grid.d, eps)(grid.distance_matrix())
    return E / E.sum(axis=0, keepdims=True)


def composition_kernel(rho, eps, E=None):
    """``G[x, y] = m(x) E[y, x] / m_eps(y)`` with the zero convention.

    ``m`` are the cell masses of ``rho`` and ``m_eps = E m``.  Every column
    with ``m_eps(y) > 0`` sums to one.
    """
    if E is None:
        E = kernel_matrix(rho.grid, eps)
    m = rho.masses
    m_eps = E @ m
    safe = m_eps > ZERO_DENSITY
    inv = np.where(safe, 1.0 / np.where(safe, m_eps, 1.0), 0.0)
    return (m[:, None] * E.T) * inv[None, :], m_eps


def apply_per_particle(matrix, masses):
    """Apply ``matrix`` to every particle axis of a slot-view array."""
    out = masses
    for i in range(masses.ndim):
        out = np.moveaxis(np.tensordot(matrix, out, axes=([1], [i])), 0, i)
    return out


def mollify_plan(plan, eps, E=None):
    """Convolve ``plan`` with the product kernel ``prod_i eta_eps(y_i - x_i)``."""
    check_plan(plan)
    if E is None:
        E = kernel_matrix(plan.grid, eps)
    return ProductField.from_masses(plan.grid, plan.arity, apply_per_particle(E, plan.masses))


def restore_marginals(p_tilde, rho, eps, E=None):
    """Compose a mollified plan with ``gamma_eps`` so every marginal is ``rho``."""
    check_plan(p_tilde)
    check_density(rho)
    if E is None:
        E = kernel_matrix(rho.grid, eps)
    G, m_eps = composition_kernel(rho, eps, E)
    pt = p_tilde.masses
    for i in range(p_tilde.arity):
        others = tuple(k for k in range(p_tilde.arity) if k != i)
        err = float(np.abs(pt.sum(axis=others) - m_eps).sum())
        if err > MARGINAL_MISMATCH_TOL:
            raise InputMismatchError(f"marginal {i} of the mollified plan is off rho*eta_eps by {err:.3g}")
    return ProductField.from_masses(p_tilde.grid, p_tilde.arity, apply_per_particle(G, pt))


# --- energies ----------------------------------------------------------------


def kinetic_energy(phi):
    """Finite-difference ``\\int |grad phi|^2`` over all ``dN`` coordinates."""
    return dirichlet_energy(phi.values, phi.spacing)


def kinetic_bound(rho, eps, N):
    """``N (||sqrt rho||^2_{H^1} + K(d) / (4 eps^2))``."""
    eps = check_positive("eps", eps)
    _, K = mollifier_constant(rho.grid.d)
    return N * (sqrt_density_h1(rho) + K / (4.0 * eps**2))


@dataclass(frozen=True, eq=False)
class SmoothedPlan:
    eps: float
    p_tilde: ProductField = field(repr=False)
    p_restored: ProductField = field(repr=False)
    phi: ProductField = field(repr=False)
    kinetic: float
    kinetic_bound: float
    cost: float
    marginal_err: float
    info: dict = field(default_factory=dict, repr=False)

    @property
    def mass(self):
        return math.nan if self.p_restored is None else self.p_restored.total_mass

    def summary(self):
        return {
            "eps": self.eps,
            "mass": self.mass,
            "marginal_err": self.marginal_err,
            "kinetic": self.kinetic,
            "kinetic_bound": self.kinetic_bound,
            "cost": self.cost,
        }


def smooth_plan(plan, rho, eps, E=None):
    """Run the mollify / restore / square-root pipeline on an off-diagonal plan."""
    check_plan(plan)
    check_density(rho)
    if E is None:
        E = kernel_matrix(rho.grid, eps)
    p_tilde = mollify_plan(plan, eps, E)
    p_eps = restore_marginals(p_tilde, rho, eps, E)
    phi = ProductField(plan.grid, plan.arity, np.sqrt(p_eps.values))
    return SmoothedPlan(
        eps=float(eps),
        p_tilde=p_tilde,
        p_restored=p_eps,
        phi=phi,
        kinetic=kinetic_energy(phi),
        kinetic_bound=kinetic_bound(rho, eps, plan.arity),
        cost=cost_of_plan(p_eps),
        marginal_err=max(marginal_l1_errors(p_eps, rho)),
    )


def regularize_general(plan, rho, r, eps, **solver_kwargs):
    """Smooth a plan that may touch the diagonal.

    The mass on the strip ``D_r`` is removed, its marginals are renormalised
    and transported optimally (symmetric minimiser), and the result is put
    back with the original weight before running :func:`smooth_plan`.  The
    replacement never raises the cost.  A non-symmetric input is
    symmetrised first, which leaves its cost unchanged.

    ``info`` on the result holds ``strip_mass``, ``source_cost``,
    ``replaced_cost``, ``alpha_r`` (support gap of the strip optimum) and
    ``plan_r``.
    """
    check_plan(plan)
    check_density(rho)
    r = check_positive("r", r)
    source_cost = cost_of_plan(plan)
    if not math.isfinite(source_cost):
        return SmoothedPlan(float(eps), None, None, None, math.nan, kinetic_bound(rho, eps, plan.arity),
                            math.inf, math.nan, {"source_cost": math.inf, "skipped": True})
    if not is_symmetric(plan, 1e-12):
        plan = symmetrize(plan)
    near = np.asarray(min_pair_distance(plan.grid, plan.arity) < r)
    p = plan.masses
    strip = np.where(near, p, 0.0)
    strip_mass = float(strip.sum())
    info = {"strip_mass": strip_mass, "source_cost": source_cost, "r": r}
    if strip_mass == 0.0:
        out = smooth_plan(plan, rho, eps)
        info.update(replaced_cost=source_cost, alpha_r=support_gap(plan), plan_r=plan)
        return _with_info(out, info)
    N = plan.arity
    strip_marginal = strip.sum(axis=tuple(range(1, N)))
    strip_rho = DiscreteDensity.from_masses(rho.grid, strip_marginal)
    method = solver_kwargs.pop("method", None)
    if method is None:
        n_vars = rho.grid.n_cells**N
        method = "exact-lp" if n_vars <= lp_cap() else "entropic"
    sol = solve_mmot(strip_rho, N, method, **solver_kwargs)
    replacement = symmetrize(sol.plan)
    p_r = np.where(near, 0.0, p) + replacement.masses * strip_mass
    plan_r = ProductField.from_masses(plan.grid, N, p_r)
    out = smooth_plan(plan_r, rho, eps)
    info.update(replaced_cost=cost_of_plan(plan_r), alpha_r=support_gap(replacement),
                strip_cost=cost_of_plan(ProductField.from_masses(plan.grid, N, strip)), plan_r=plan_r,
                strip_solution=sol)
    return _with_info(out, info)


def _with_info(smoothed, info):
    merged = dict(smoothed.info)
    merged.update(info)
    return SmoothedPlan(smoothed.eps, smoothed.p_tilde, smoothed.p_restored, smoothed.phi,
                        smoothed.kinetic, smoothed.kinetic_bound, smoothed.cost,
                        smoothed.marginal_err, merged)


# --- diagnostics -------------------------------------------------------------


def kinetic_split(smoothed, rho):
    """Split the energy of ``phi`` per particle into density, kernel and cross parts.

    Writes ``P_eps = rho(x_j) J_j`` and returns, for each particle ``j``,
    ``a = \\int |A|^2 / 4P``, ``b = \\int |B|^2 / 4P`` and
    ``cross = \\int A.B / 2P`` with ``A = grad rho(x_j) J_j`` and
    ``B = rho(x_j) grad_j J_j``.  In the continuum ``cross`` vanishes; on a
    grid it is a finite-difference residue.
    """
    plan = smoothed.p_restored
    g = plan.grid
    d, N = g.d, plan.arity
    P = plan.values
    r = rho.values
    spacing = plan.spacing
    out = []
    for j in range(N):
        shape = [1] * (d * N)
        shape[j * d:(j + 1) * d] = g.shape
        rj = r.reshape(shape)
        safe = rj > 0
        J = np.where(safe, P / np.where(safe, rj, 1.0), 0.0)
        a = b = c = 0.0
        occupied = P > 0
        for k in range(d):
            axis = j * d + k
            dr = gradient(r, g.h, k).reshape(shape)
            A = dr * J
            B = rj * gradient(J, spacing, axis)
            with np.errstate(divide="ignore", invalid="ignore"):
                inv = np.where(occupied, 1.0 / np.where(occupied, P, 1.0), 0.0)
            a += float(np.sum(A * A * inv)) / 4
            b += float(np.sum(B * B * inv)) / 4
            c += float(np.sum(A * B * inv)) / 2
        vol = plan.cell_volume
        out.append({"a": a * vol, "b": b * vol, "cross": c * vol})
    return out


def bl_distance(p, q, n_test=64, seed=0):
    """Bounded-Lipschitz surrogate ``max_f |\\int f dp - \\int f dq|``.

    ``f`` ranges over seeded random plane waves ``cos(w.X + b) / max(1, |w|)``,
    each bounded by one and one-Lipschitz.
    """
    if p.grid != q.grid or p.arity != q.arity:
        raise InvalidInputError("plans must live on the same product grid")
    rng = np.random.default_rng(seed)
    g = p.grid
    coords = []
    for i in range(p.arity):
        for k in range(g.d):
            coords.append(g.axis_centers(k))
    mesh = np.meshgrid(*coords, indexing="ij", sparse=True)
    scale = 2 * math.pi / max(np.asarray(g.box_max) - np.asarray(g.box_min))
    diff = (p.values - q.values) * p.cell_volume
    best = 0.0
    for _ in range(n_test):
        w = rng.normal(scale=scale * 4, size=len(mesh))
        b = rng.uniform(0, 2 * math.pi)
        phase = b + sum(wk * mk for wk, mk in zip(w, mesh))
        f = np.cos(phase) / max(1.0, float(np.linalg.norm(w)))
        best = max(best, abs(float(np.sum(f * diff))))
    return best
