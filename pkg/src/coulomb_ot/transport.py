"""Multimarginal optimal transport with Coulomb cost on grids.

Plans are :class:`~coulomb_ot.grid.ProductField` objects whose one-particle
marginals all equal a prescribed density.  Two solvers are provided: an
exact linear program (HiGHS dual simplex, vertex solutions) and a
log-domain multimarginal Sinkhorn iteration for instances past the LP cap.
"""

import itertools
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import linprog
from scipy.signal import convolve
from scipy.special import gamma as gamma_fn
from scipy.special import logsumexp

from .exceptions import CapExceededError, ConvergenceError, InvalidExponentError, InvalidInputError
from .grid import ProductField, marginal_l1_errors, product_cells
from .validation import check_arity, check_density, check_option, check_plan, check_positive

DEFAULT_LP_CAP = 1_000_000
LP_TOLERANCES = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}
DIAGONAL_POLICIES = ("forbid", "truncate")
OFFDIAG_SAFETY = 1e-6


def lp_cap():
    """LP variable cap, overridable through the ``MMOT_CAP`` environment variable."""
    raw = os.environ.get("MMOT_CAP")
    return int(raw) if raw else DEFAULT_LP_CAP


# --- costs -------------------------------------------------------------------


def _as_points(points):
    pts = np.asarray(points, dtype=float)
    return pts[:, None] if pts.ndim == 1 else pts


def coulomb_cost(points):
    """``sum_{i<j} 1/|x_i - x_j|`` for ``points`` of shape ``(N, d)``.

    Returns ``inf`` when two points coincide.
    """
    pts = _as_points(points)
    total = 0.0
    for i, j in itertools.combinations(range(len(pts)), 2):
        r = float(np.linalg.norm(pts[i] - pts[j]))
        if r == 0.0:
            return math.inf
        total += 1.0 / r
    return total


def truncated_cost(points, alpha):
    """Coulomb cost with each pair term capped at ``4/alpha`` below ``alpha/4``."""
    alpha = check_positive("alpha", alpha)
    pts = _as_points(points)
    total = 0.0
    for i, j in itertools.combinations(range(len(pts)), 2):
        r = float(np.linalg.norm(pts[i] - pts[j]))
        total += 1.0 / r if r >= alpha / 4 else 4.0 / alpha
    return total


def _pair_view(D, N, i, j):
    shape = [1] * N
    shape[i] = shape[j] = D.shape[0]
    return D.reshape(shape)


def min_pair_distance(grid, N):
    """Smallest pairwise centre distance of every cell of ``grid**N`` (slot view)."""
    D = grid.distance_matrix()
    out = None
    for i, j in itertools.combinations(range(N), 2):
        v = _pair_view(D, N, i, j)
        out = v if out is None else np.minimum(out, v)
    return np.broadcast_to(out, (grid.n_cells,) * N)


def cost_tensor(grid, N, diagonal="forbid", alpha=None):
    """Pair-summed cost on all cells of ``grid**N`` (slot view).

    With ``diagonal="forbid"`` coincident cells cost ``inf``; with
    ``"truncate"`` each pair term below ``alpha/4`` is replaced by ``4/alpha``.
    """
    check_option("diagonal", diagonal, DIAGONAL_POLICIES)
    D = grid.distance_matrix()
    with np.errstate(divide="ignore"):
        if diagonal == "forbid":
            pair = np.where(D > 0, 1.0 / D, np.inf)
        else:
            alpha = check_positive("alpha", alpha)
            pair = np.where(D >= alpha / 4, 1.0 / np.where(D > 0, D, 1.0), 4.0 / alpha)
    total = np.zeros((1,) * N)
    for i, j in itertools.combinations(range(N), 2):
        total = total + _pair_view(pair, N, i, j)
    return np.broadcast_to(total, (grid.n_cells,) * N)


def cost_of_plan(plan, diagonal="forbid", alpha=None):
    """``sum_X c(X) P(X) h**(dN)``; ``inf`` if a forbidden cell carries mass."""
    check_plan(plan)
    c = cost_tensor(plan.grid, plan.arity, diagonal, alpha)
    p = plan.masses
    finite = np.isfinite(c)
    if np.any(p[~finite] > 0):
        return math.inf
    return float(np.sum(c[finite] * p[finite]))


# --- simple plans ------------------------------------------------------------


def product_plan(rho, N, cap=None):
    """The independent plan ``rho(x_1) ... rho(x_N)``."""
    check_density(rho)
    if cap is None:
        product_cells(rho.grid, N)
    else:
        product_cells(rho.grid, N, cap)
    v = rho.values.ravel()
    out = v
    for _ in range(N - 1):
        out = np.multiply.outer(out, v)
    return ProductField(rho.grid, N, out)


def permute_plan(plan, perm):
    """Push-forward of ``plan`` by the coordinate permutation ``perm``."""
    return ProductField(plan.grid, plan.arity, np.transpose(plan.slots(), perm))


def symmetrize(plan):
    """Average of ``plan`` over all ``N!`` permutations of its particles."""
    check_plan(plan)
    s = plan.slots()
    perms = list(itertools.permutations(range(plan.arity)))
    acc = np.zeros_like(s, dtype=float)
    for perm in perms:
        acc += np.transpose(s, perm)
    return ProductField(plan.grid, plan.arity, acc / len(perms))


def is_symmetric(plan, tol=1e-12):
    s = plan.slots()
    scale = max(float(np.abs(s).max()), 1e-300)
    return all(np.abs(np.transpose(s, p) - s).max() <= tol * scale
               for p in itertools.permutations(range(plan.arity)))


# --- finiteness bound for product plans -------------------------------------


def unit_ball_volume(d):
    return math.pi ** (d / 2) / gamma_fn(d / 2 + 1)


def holder_terms(d, p, a):
    """Norms of the near/far split of ``1/|x - y|`` at radius ``a``.

    Returns a dict with ``f_norm`` = ``||chi_B(a) / |y| ||_{L^{p'}}`` (the
    radial integral taken to the ``1/p'`` power), ``g_norm`` =
    ``||chi_{B(a)^c} / |y| ||_inf = 1/a``, and the unrooted/``a`` variants
    under ``f_norm_unrooted`` / ``g_norm_alt`` for comparison.
    """
    if d < 2:
        raise InvalidExponentError("the split bound needs d >= 2")
    if p < d / (d - 1):
        raise InvalidExponentError(f"need p >= d/(d-1) = {d / (d - 1):.6g}, got {p!r}")
    a = check_positive("a", a)
    q = math.inf if p == 1 else p / (p - 1)
    area = unit_ball_volume(d) * d
    if q >= d:
        radial = math.inf
    else:
        radial = area * a ** (d - q) / (d - q)
    return {
        "p_conjugate": q,
        "f_norm": radial ** (1.0 / q) if math.isfinite(radial) else math.inf,
        "f_norm_unrooted": radial,
        "g_norm": 1.0 / a,
        "g_norm_alt": a,
    }


def lp_norm(rho, p):
    return float((np.sum(rho.values**p) * rho.grid.cell_volume) ** (1.0 / p))


def finite_cost_bound(rho, p, a, N=2):
    """Hölder split bound on the product-plan cost.

    ``binom(N, 2) * (||rho||_p ||f_a||_{p'} + ||rho||_1 / a)`` bounds
    ``binom(N, 2) * sup_x \\int rho(y) / |x - y| dy``.
    """
    check_density(rho)
    t = holder_terms(rho.grid.d, p, a)
    one = float(np.sum(rho.values) * rho.grid.cell_volume)
    return math.comb(N, 2) * (lp_norm(rho, p) * t["f_norm"] + one * t["g_norm"])


# --- solvers -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PlanSolution:
    plan: ProductField
    cost: float
    method: str
    residuals: list
    iterations: int = 0
    status: str = "optimal"
    info: dict = field(default_factory=dict)


def _marginal_rows(n_cells, N, flat_index):
    """Row indices of the N marginal constraints hit by each variable."""
    idx = np.unravel_index(flat_index, (n_cells,) * N)
    return [k * n_cells + idx[k] for k in range(N)]


def _solve_exact(rho, N, diagonal, alpha, cap):
    grid = rho.grid
    mu = rho.masses
    c = np.ascontiguousarray(cost_tensor(grid, N, diagonal, alpha)).ravel()
    cols = np.flatnonzero(np.isfinite(c))
    if cols.size > cap:
        raise CapExceededError(f"exact LP needs {cols.size} variables, cap is {cap}")
    M = grid.n_cells
    if cols.size == 0:
        return None, math.inf, "infeasible"
    rows = _marginal_rows(M, N, cols)
    A = sparse.csr_matrix(
        (np.ones(N * cols.size), (np.concatenate(rows), np.tile(np.arange(cols.size), N))),
        shape=(N * M, cols.size),
    )
    b = np.tile(mu, N)
    res = linprog(c[cols], A_eq=A, b_eq=b, bounds=(0, None), method="highs-ds",
                  options=LP_TOLERANCES)
    if res.status == 2:
        return None, math.inf, "infeasible"
    if res.status != 0:
        raise ConvergenceError(f"LP failed: {res.message}")
    x = np.zeros(c.size)
    x[cols] = np.clip(res.x, 0.0, None)
    return x.reshape((M,) * N), float(res.fun), "optimal"


def _entropic_sweep(logK, logmu, f, N):
    for i in range(N):
        acc = logK
        for j in range(N):
            if j != i:
                acc = acc + f[j]
        others = tuple(k for k in range(N) if k != i)
        lse = logsumexp(acc, axis=others)
        with np.errstate(invalid="ignore"):
            new = np.where(np.isfinite(logmu), logmu - lse, -np.inf)
        shape = [1] * N
        shape[i] = -1
        f[i] = new.reshape(shape)
    return f


def _entropic_plan(logK, f, N):
    acc = logK
    for j in range(N):
        acc = acc + f[j]
    return np.exp(acc)


def _plan_residuals(p, mu, N):
    out = []
    for i in range(N):
        others = tuple(k for k in range(N) if k != i)
        out.append(float(np.abs(p.sum(axis=others) - mu).sum()))
    return out


def _solve_entropic(rho, N, diagonal, alpha, etas, tol, max_iter):
    grid = rho.grid
    mu = rho.masses
    c = cost_tensor(grid, N, diagonal, alpha)
    with np.errstate(divide="ignore"):
        logmu = np.log(mu)
    f = []
    for i in range(N):
        shape = [1] * N
        shape[i] = -1
        f.append(np.where(np.isfinite(logmu), 0.0, -np.inf).reshape(shape))
    iterations = 0
    residuals = [math.inf] * N
    for eta in etas:
        with np.errstate(invalid="ignore"):
            logK = np.where(np.isfinite(c), -c / eta, -np.inf)
        for _ in range(max_iter):
            f = _entropic_sweep(logK, logmu, f, N)
            iterations += 1
            # the last sweep fixes the last marginal exactly; check all of them
            p = _entropic_plan(logK, f, N)
            residuals = _plan_residuals(p, mu, N)
            if max(residuals) <= tol:
                break
    p = _entropic_plan(logK, f, N)
    residuals = _plan_residuals(p, mu, N)
    return p, residuals, iterations


def solve_mmot(rho, N, method="exact-lp", *, diagonal="forbid", alpha=None, eta=(1e-1, 3e-2, 1e-2),
               tol=1e-8, max_iter=5000, cap=None):
    """Minimise the Coulomb transport cost over plans with all marginals ``rho``.

    Parameters
    ----------
    rho : DiscreteDensity
    N : int
        Number of marginals (2 or 3).
    method : {"exact-lp", "entropic"}
    diagonal : {"forbid", "truncate"}
        ``"forbid"`` drops coincident cells from the problem.
    eta : float or sequence of float
        Entropic regularisation, or a decreasing schedule used with warm
        starts.  Only the transport part of the objective is reported.
    tol, max_iter :
        Entropic stopping rule: max per-axis marginal L1 residual.
    cap : int, optional
        Variable cap for the exact LP (defaults to :func:`lp_cap`).

    Returns
    -------
    PlanSolution
        ``cost`` is ``inf`` when no plan avoids the forbidden cells.
    """
    check_density(rho)
    check_arity(N)
    check_option("method", method, ("exact-lp", "entropic"))
    if cap is None:
        cap = lp_cap()
    product_cells(rho.grid, N)
    grid = rho.grid
    if method == "exact-lp":
        p, fun, status = _solve_exact(rho, N, diagonal, alpha, cap)
        if p is None:
            # the product plan is the only witness left; it sits on the diagonal
            plan = product_plan(rho, N)
            return PlanSolution(plan, math.inf, method, marginal_l1_errors(plan, rho), 0, status)
        plan = ProductField.from_masses(grid, N, p)
        cost = cost_of_plan(plan, diagonal, alpha)
        return PlanSolution(plan, cost, method, marginal_l1_errors(plan, rho), 0, status,
                            {"lp_objective": fun})
    etas = [float(eta)] if np.isscalar(eta) else [float(e) for e in eta]
    for e in etas:
        check_positive("eta", e)
    p, residuals, iterations = _solve_entropic(rho, N, diagonal, alpha, etas, tol, max_iter)
    plan = ProductField.from_masses(grid, N, p)
    sol = PlanSolution(plan, cost_of_plan(plan, diagonal, alpha), method, residuals, iterations,
                       "optimal" if max(residuals) <= tol else "not-converged", {"eta": etas[-1]})
    if sol.status != "optimal":
        raise ConvergenceError(f"Sinkhorn residual {max(residuals):.3g} > {tol:g} after "
                               f"{iterations} iterations", residuals, iterations, sol)
    return sol


def entropic_path(rho, N, etas, **kwargs):
    """Entropic solutions along a decreasing regularisation schedule, warm-started."""
    out = []
    for k in range(len(etas)):
        out.append(solve_mmot(rho, N, "entropic", eta=list(etas[: k + 1]), **kwargs))
    return out


# --- concentration and the off-diagonal certificate --------------------------


@dataclass(frozen=True, eq=False)
class ConcentrationProfile:
    radii: np.ndarray
    values: np.ndarray
    limit: float


def _offsets(grid):
    o = np.arange(-(grid.n - 1), grid.n)
    return [o * grid.h[k] for k in range(grid.d)]


def _cell_fraction_kernel(grid, t, supersample=8):
    """Fraction of each offset cell covered by the ball ``B(0, t)``."""
    offs = _offsets(grid)
    if grid.d == 1:
        h = grid.h[0]
        lo, hi = offs[0] - h / 2, offs[0] + h / 2
        return np.clip(np.minimum(hi, t) - np.maximum(lo, -t), 0, None) / h
    sub = (np.arange(supersample) + 0.5) / supersample - 0.5
    out = np.zeros([len(o) for o in offs])
    for idx in itertools.product(range(supersample), repeat=grid.d):
        r2 = 0.0
        for k in range(grid.d):
            shape = [1] * grid.d
            shape[k] = -1
            r2 = r2 + ((offs[k] + sub[idx[k]] * grid.h[k]) ** 2).reshape(shape)
        out += r2 < t * t
    return out / supersample**grid.d


def _window_kernel(grid, t):
    """Atom indicator for the largest open ball of radius ``t`` containing an atom."""
    offs = _offsets(grid)
    if grid.d == 1:
        # exact in 1-d: windows [c_i, c_i + 2t)
        return ((offs[0] >= 0) & (offs[0] < 2 * t)).astype(float)
    r2 = sum(np.meshgrid(*[o**2 for o in offs], indexing="ij"))
    return (r2 < (2 * t) ** 2).astype(float)


def _ball_masses(masses, grid, kernel):
    n = grid.n
    full = convolve(masses.reshape(grid.shape), kernel[(slice(None, None, -1),) * grid.d])
    sl = (slice(n - 1, 2 * n - 1),) * grid.d
    return np.clip(full[sl], 0.0, 1.0)


def concentration_profile(rho, radii, mode="cells"):
    """``mu_rho(t)``: the most mass any grid-centred ball of radius ``t`` holds.

    ``mode="cells"`` integrates the piecewise-constant density over the
    ball (exactly in 1-d, by 8-point-per-axis supersampling otherwise).
    ``mode="atoms"`` treats cells as point masses at their centres and
    returns an upper bound on the supremum over *all* ball centres
    (exact in 1-d).
    """
    check_density(rho)
    check_option("mode", mode, ("cells", "atoms"))
    radii = np.asarray(radii, dtype=float)
    if radii.ndim != 1 or radii.size == 0 or np.any(radii <= 0) or np.any(np.diff(radii) < 0):
        raise InvalidInputError("radii must be a nonempty sorted array of positive values")
    m = rho.masses
    vals = []
    for t in radii:
        kernel = _cell_fraction_kernel(rho.grid, t) if mode == "cells" else _window_kernel(rho.grid, t)
        vals.append(float(_ball_masses(m, rho.grid, kernel).max()))
    vals = np.maximum.accumulate(np.asarray(vals))
    return ConcentrationProfile(radii, vals, float(vals[0]))


def offdiag_threshold(N):
    return 1.0 / (N * (N - 1) ** 2)


def offdiag_radius(rho, N, radii=None):
    """Radius ``alpha`` of a diagonal strip every optimal plan avoids, or ``None``.

    Tabulates ``beta`` on half-cell multiples, keeps the largest one whose
    (atomic, conservative) concentration is below ``1/(N (N-1)^2)`` and
    returns ``(1 - 1e-6) * 2 beta / (N^2 (N-1))``.
    """
    check_density(rho)
    g = rho.grid
    if radii is None:
        diameter = float(np.linalg.norm(np.asarray(g.box_max) - np.asarray(g.box_min)))
        step = 0.5 * float(g.h.min())
        radii = step * np.arange(1, int(math.ceil(diameter / step)) + 2)
    prof = concentration_profile(rho, radii, mode="atoms")
    ok = np.flatnonzero(prof.values < offdiag_threshold(N))
    if ok.size == 0:
        return None
    beta = float(prof.radii[ok[-1]])
    return (1.0 - OFFDIAG_SAFETY) * 2.0 * beta / (N**2 * (N - 1))


def diagonal_mass(plan, alpha):
    """Mass the plan puts on cells with some pair closer than ``alpha``."""
    check_plan(plan)
    check_positive("alpha", alpha, strict=False)
    near = min_pair_distance(plan.grid, plan.arity) < alpha
    return float(plan.masses[near].sum())


def support_gap(plan, threshold=0.0):
    """Smallest pair distance over cells carrying mass above ``threshold``."""
    check_plan(plan)
    dist = min_pair_distance(plan.grid, plan.arity)
    occupied = plan.masses > threshold
    if not occupied.any():
        return math.inf
    return float(dist[occupied].min())
