"""Recovery sequences and hbar-sweeps of the Hohenberg-Kohn upper bound.

For each ``hbar`` an optimal plan is smoothed at width ``eps(hbar)``, its
square root is dressed as a bosonic or fermionic wavefunction, and the
energy ``T_hbar + V_ee`` is compared with the transport cost ``C(rho)``.
"""

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import CoulombOTError, InvalidInputError, InvalidProfileError
from .fermion import build_bosonic, build_fermionic
from .grid import sqrt_density_h1
from .smoothing import kernel_matrix, mollifier_constant, smooth_plan
from .transport import cost_tensor, lp_cap, solve_mmot, support_gap, symmetrize
from .validation import check_density, check_option, check_positive

STATISTICS = ("bosonic", "fermionic")
CSV_COLUMNS = ("hbar", "eps", "alpha", "T", "Vee", "F_upper", "C_ref", "gap")
GRID_RESOLUTION = 2.0


def _fmt(x):
    return format(float(x), ".17g")


# --- schedules ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AlphaProfile:
    """Measured off-diagonal radius ``alpha(eps)`` on increasing widths."""

    eps: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.eps, dtype=float)
        a = np.asarray(self.alpha, dtype=float)
        if e.ndim != 1 or e.size == 0 or e.shape != a.shape:
            raise InvalidProfileError("alpha profile needs two equal-length nonempty 1-d tables")
        if not (np.all(np.isfinite(e)) and np.all(np.isfinite(a))):
            raise InvalidProfileError("alpha profile entries must be finite")
        if np.any(np.diff(e) <= 0):
            raise InvalidProfileError("alpha profile widths must be strictly increasing")
        da = np.diff(a)
        if not (np.all(da >= 0) or np.all(da <= 0)):
            raise InvalidProfileError("alpha profile must be monotone")
        object.__setattr__(self, "eps", e)
        object.__setattr__(self, "alpha", a)

    def inverse(self, s):
        """Smallest ``eps`` in the table range with ``alpha(eps) >= s``.

        ``alpha`` is read piecewise linearly.  When no tabulated width
        reaches ``s`` the width with the largest ``alpha`` is returned.
        """
        e, a = self.eps, self.alpha
        hit = np.flatnonzero(a >= s)
        if hit.size == 0:
            return float(e[int(np.argmax(a))])
        i = int(hit[0])
        if i == 0:
            return float(e[0])
        t = (s - a[i - 1]) / (a[i] - a[i - 1])
        return float(e[i - 1] + t * (e[i] - e[i - 1]))


def epsilon_schedule(hbar, statistics="bosonic", alpha_profile=None):
    """Smoothing width for ``hbar``.

    Bosonic: ``sqrt(hbar)``.  Fermionic: ``max(sqrt(hbar), alpha^{-1}(sqrt(hbar)))``
    with the inverse taken on a measured :class:`AlphaProfile`.
    """
    hbar = check_positive("hbar", hbar)
    check_option("statistics", statistics, STATISTICS)
    root = math.sqrt(hbar)
    if statistics == "bosonic":
        return root
    if alpha_profile is None:
        raise InvalidProfileError("fermionic schedule needs an alpha profile")
    if not isinstance(alpha_profile, AlphaProfile):
        alpha_profile = AlphaProfile(*alpha_profile)
    return max(root, alpha_profile.inverse(root))


def hbar_schedule(hbar_max, hbar_min, per_decade=4):
    """Log-spaced ``hbar`` values from ``hbar_max`` down to ``hbar_min``."""
    hi = math.log10(check_positive("hbar_max", hbar_max))
    lo = math.log10(check_positive("hbar_min", hbar_min))
    if lo > hi:
        raise InvalidInputError("hbar_min must not exceed hbar_max")
    count = int(round((hi - lo) * per_decade)) + 1
    return [float(v) for v in np.logspace(hi, lo, count)]


# --- energies ----------------------------------------------------------------


def vee_of(wf):
    """``\\int c(X) sum_s |psi_s(X)|^2 dX``; ``inf`` on forbidden diagonal mass."""
    dens = wf.density().reshape((wf.grid.n_cells,) * wf.N)
    c = cost_tensor(wf.grid, wf.N)
    finite = np.isfinite(c)
    if np.any(dens[~finite] > 0):
        return math.inf
    return float(np.sum(c[finite] * dens[finite]) * wf.psi.cell_volume)


def bosonic_kinetic_bound(rho, hbar, N):
    """``(N hbar^2 / 2) ||sqrt rho||^2_{H^1} + K N hbar / 8``."""
    _, K = mollifier_constant(rho.grid.d)
    return N * hbar**2 / 2 * sqrt_density_h1(rho) + K * N * hbar / 8


@dataclass(frozen=True)
class UpperBound:
    hbar: float
    eps: float
    alpha: float
    T: float
    V: float
    C_plan: float
    T_bound: float = math.nan

    @property
    def F(self):
        return self.T + self.V


class RecoveryContext:
    """Shared state for building recovery wavefunctions from one optimal plan.

    Smoothings and kernels are cached by width so a sweep reuses them.
    """

    def __init__(self, rho, N=2, solution=None, *, method=None, aux="trig", **solver_kwargs):
        self.rho = check_density(rho)
        self.N = N
        if solution is None:
            if method is None:
                method = "exact-lp" if rho.grid.n_cells**N <= lp_cap() else "entropic"
            solution = solve_mmot(rho, N, method, **solver_kwargs)
        self.solution = solution
        # the wavefunction constructions need the symmetric minimiser
        self.plan = symmetrize(solution.plan)
        self.aux = aux
        self._smoothed = {}

    @property
    def min_eps(self):
        return GRID_RESOLUTION * float(self.rho.grid.h.max())

    def resolve(self, eps):
        """Clamp ``eps`` to the smallest width the grid resolves."""
        return max(float(eps), self.min_eps)

    def smoothed(self, eps):
        eps = self.resolve(eps)
        if eps not in self._smoothed:
            E = kernel_matrix(self.rho.grid, eps)
            self._smoothed[eps] = smooth_plan(self.plan, self.rho, eps, E)
        return self._smoothed[eps]

    def alpha(self, eps):
        return support_gap(self.smoothed(eps).p_restored)

    def alpha_profile(self, widths):
        widths = sorted({self.resolve(e) for e in widths})
        return AlphaProfile(np.array(widths), np.array([self.alpha(e) for e in widths]))

    def wavefunction(self, eps, statistics):
        sp = self.smoothed(eps)
        psi = sp.phi
        if statistics == "bosonic":
            return build_bosonic(psi, self.N)
        return build_fermionic(psi, self.N, self.rho.grid.d, self.alpha(eps), self.aux)

    def upper_bound(self, hbar, statistics="bosonic", alpha_profile=None):
        hbar = check_positive("hbar", hbar)
        check_option("statistics", statistics, STATISTICS)
        if statistics == "fermionic" and alpha_profile is None:
            alpha_profile = self.alpha_profile([self.min_eps, math.sqrt(hbar)])
        eps = self.resolve(epsilon_schedule(hbar, statistics, alpha_profile))
        wf = self.wavefunction(eps, statistics)
        T = hbar**2 / 2 * wf.kinetic_energy()
        T_bound = bosonic_kinetic_bound(self.rho, hbar, self.N) if statistics == "bosonic" else math.nan
        return UpperBound(hbar, eps, self.alpha(eps), T, vee_of(wf), self.solution.cost, T_bound)


def hk_upper_bound(rho, hbar, statistics="bosonic", N=2, **solver_kwargs):
    """``(T, V, T + V)`` for the recovery wavefunction at ``hbar``."""
    ub = RecoveryContext(rho, N, **solver_kwargs).upper_bound(hbar, statistics)
    return ub.T, ub.V, ub.F


# --- sweeps ------------------------------------------------------------------


@dataclass(eq=False)
class SweepReport:
    statistics: str
    C_ref: float
    rows: list = field(default_factory=list)
    density: str = ""
    provenance: dict = field(default_factory=dict)
    complete: bool = True
    error: str = ""

    def column(self, name):
        return np.array([row[name] for row in self.rows], dtype=float)

    @property
    def gaps(self):
        return self.column("gap")

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in self.rows:
            w.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def summary(self):
        rows = [{k: float(v) for k, v in r.items()} for r in self.rows]
        return {
            "statistics": self.statistics,
            "density": self.density,
            "C_ref": self.C_ref,
            "complete": self.complete,
            "error": self.error,
            "provenance": self.provenance,
            "rows": rows,
        }

    def to_json(self):
        return json.dumps(_json_floats(self.summary()), indent=2, sort_keys=True) + "\n"


def _json_floats(obj):
    # fixed 17-digit floats; non-finite values become strings
    if isinstance(obj, float):
        return float(_fmt(obj)) if math.isfinite(obj) else repr(obj)
    if isinstance(obj, dict):
        return {k: _json_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_floats(v) for v in obj]
    return obj


def sweep(rho, hbar_list, statistics="bosonic", N=2, *, context=None, density="", **solver_kwargs):
    """One :class:`UpperBound` row per ``hbar`` (given in descending order).

    ``C_ref`` is the cost of the shared optimal plan.  A row that fails with
    a library error stops the sweep and marks the report incomplete.
    """
    check_option("statistics", statistics, STATISTICS)
    hbars = [check_positive("hbar", h) for h in hbar_list]
    if not hbars or any(b > a for a, b in zip(hbars, hbars[1:])):
        raise InvalidInputError("hbar_list must be nonempty and sorted in descending order")
    ctx = context if context is not None else RecoveryContext(rho, N, **solver_kwargs)
    sol = ctx.solution
    report = SweepReport(statistics, float(sol.cost), density=density,
                         provenance={"method": sol.method, "status": sol.status,
                                     "residual": max(sol.residuals), "n": rho.grid.n, "d": rho.grid.d,
                                     "N": ctx.N})
    profile = None
    if statistics == "fermionic":
        profile = ctx.alpha_profile([ctx.min_eps] + [math.sqrt(h) for h in hbars])
        report.provenance["alpha_profile"] = {"eps": profile.eps.tolist(), "alpha": profile.alpha.tolist()}
    for h in hbars:
        try:
            ub = ctx.upper_bound(h, statistics, profile)
        except CoulombOTError as exc:
            report.complete = False
            report.error = f"{type(exc).__name__}: {exc}"
            break
        row = {"hbar": h, "eps": ub.eps, "alpha": ub.alpha, "T": ub.T, "Vee": ub.V, "F_upper": ub.F,
               "C_ref": report.C_ref, "gap": ub.F - report.C_ref, "smoothing_excess": ub.V - report.C_ref}
        if statistics == "bosonic":
            row["T_bound"] = ub.T_bound
        report.rows.append(row)
    return report
