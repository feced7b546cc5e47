"""Bosonic and fermionic spin wavefunctions with a prescribed square density.

A spin wavefunction on ``N`` particles has ``2**N`` components indexed by
binary strings ``s``; particle ``i`` carries spin ``s[i]``.  Fermionic
statistics means ``psi_{sigma s}(sigma X) = sign(sigma) psi_s(X)`` for every
permutation ``sigma``.

The fermionic construction multiplies a symmetric amplitude ``psi`` that
vanishes near the diagonal by sign-carrying factors ``g(x, y)`` built from
an auxiliary pair ``(a, b) = (sin theta, cos theta)`` of the coordinate
differences.  Away from the diagonal the factors have unit total modulus,
so the square density is unchanged.
"""

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import fresnel

from .dgf1 import read_dgf1, write_dgf1
from .exceptions import InvalidInputError, PreconditionError
from .grid import ProductField, gradient, gradient_sq
from .transport import is_symmetric, min_pair_distance
from .validation import check_arity, check_option, check_positive

XI = complex(-0.5, math.sqrt(3) / 2)
VANISH_TOL = 1e-12
SYMMETRY_TOL = 1e-10
VARIANTS = ("trig", "smoothstep")
SMOOTHSTEP_RAMP = 0.1
QUARTER = math.pi / 4


# --- the auxiliary pair ------------------------------------------------------


def _smoothstep_tau(theta, delta):
    """``\\int_0^theta m / w`` with ``m = max(cos, sin)`` and an end ramp ``w``."""
    theta = np.asarray(theta, dtype=float)
    z1 = math.sqrt(2 * delta / math.pi)
    edge = math.pi / 2 - delta
    tau_edge = math.sqrt(2) - math.cos(edge)
    out = np.where(theta <= QUARTER, np.sin(theta), math.sqrt(2) - np.cos(theta))
    v = np.sqrt(np.clip((math.pi / 2 - theta) / delta, 0.0, 1.0))
    ramp = tau_edge + math.sqrt(2 * math.pi * delta) * (fresnel(z1)[1] - fresnel(v * z1)[1])
    return np.where(theta > edge, ramp, out)


@dataclass(frozen=True, eq=False)
class AuxiliaryPair:
    """Odd ``a`` and even ``b`` with ``a^2 + b^2 = 1`` switching over ``|t| <= r``.

    ``a = sin(theta(t))`` and ``b = cos(theta(t))`` where ``theta`` rises
    from ``-pi/2`` to ``pi/2`` on ``[-r, r]``.  ``k`` is the achieved
    derivative factor: ``max(|a'|, |b'|) <= k / r``.

    The ``"trig"`` variant uses a linear ``theta`` (``k = pi/2``).  The
    ``"smoothstep"`` variant moves ``theta`` at the fastest rate the bound
    allows while ``max(|cos|, |sin|)`` is small and ramps ``theta'`` to zero
    at ``|t| = r``, which makes ``a`` and ``b`` C^1 and gives
    ``k = sqrt(2) + O(ramp)``.
    """

    r: float
    variant: str = "trig"
    ramp: float = SMOOTHSTEP_RAMP
    _table: tuple = field(default=None, repr=False)

    def __post_init__(self):
        check_positive("r", self.r)
        check_option("variant", self.variant, VARIANTS)
        if self.variant == "smoothstep":
            if not 0 < self.ramp < QUARTER:
                raise InvalidInputError(f"ramp must lie in (0, pi/4), got {self.ramp!r}")
            th = np.linspace(0.0, math.pi / 2, 20001)
            # denser near the flat end, where tau is steepest
            th = np.union1d(th, math.pi / 2 - self.ramp * np.linspace(0, 1, 4001) ** 2)
            tau = _smoothstep_tau(th, self.ramp)
            object.__setattr__(self, "_table", (tau / tau[-1], th, float(tau[-1])))

    @property
    def k(self):
        return math.pi / 2 if self.variant == "trig" else self._table[2]

    def theta(self, t):
        u = np.clip(np.asarray(t, dtype=float) / self.r, -1.0, 1.0)
        if self.variant == "trig":
            return (math.pi / 2) * u
        s, th, _ = self._table
        return np.sign(u) * np.interp(np.abs(u), s, th)

    def dtheta(self, t):
        t = np.asarray(t, dtype=float)
        inside = np.abs(t) < self.r
        if self.variant == "trig":
            return np.where(inside, math.pi / (2 * self.r), 0.0)
        th = np.abs(self.theta(t))
        m = np.maximum(np.cos(th), np.sin(th))
        w = np.minimum(1.0, np.sqrt(np.clip((math.pi / 2 - th) / self.ramp, 0.0, None)))
        return np.where(inside, self.k / self.r * w / m, 0.0)

    def a(self, t):
        return np.sin(self.theta(t))

    def b(self, t):
        th = self.theta(t)
        # cos(pi/2) is not exactly zero in floating point
        return np.where(np.abs(th) >= math.pi / 2, 0.0, np.cos(th))

    def da(self, t):
        return np.cos(self.theta(t)) * self.dtheta(t)

    def db(self, t):
        return -np.sin(self.theta(t)) * self.dtheta(t)

    def table(self, samples=401):
        """Sampled ``t, a, b, a', b'`` on ``[-2r, 2r]``."""
        t = np.linspace(-2 * self.r, 2 * self.r, samples)
        return {"t": t, "a": self.a(t), "b": self.b(t), "da": self.da(t), "db": self.db(t)}


def aux_pair(r, variant="trig", ramp=SMOOTHSTEP_RAMP):
    return AuxiliaryPair(float(r), variant, ramp)


def aux_radius(alpha, d):
    """Switching radius ``alpha / sqrt(d)``: the box of half-side ``r`` fits in ``B(0, alpha)``."""
    return check_positive("alpha", alpha) / math.sqrt(d)


def fermionic_constant(d, k):
    """``C`` in the gradient bound: ``24 k^2`` for ``d=3`` and ``36 k^2`` for ``d=4``."""
    if d == 3:
        return 24.0 * k * k
    if d == 4:
        return 36.0 * k * k
    raise InvalidInputError(f"fermionic constructions need d in (3, 4), got {d!r}")


# --- sign-carrying factors ---------------------------------------------------


def _chain_terms(a, b):
    """``a_1, b_1 a_2, b_1 b_2 a_3, ...`` from per-axis lists."""
    terms, prefix = [], 1.0
    for j in range(len(a)):
        terms.append(prefix * a[j])
        prefix = prefix * b[j]
    return terms


def _combine(terms, d):
    if d == 3:
        t1, t2, t3 = terms
        g1 = (t1 + t2 + t3) / math.sqrt(3)
        g2 = math.sqrt(2) * (t1 + XI * t2 + XI.conjugate() * t3) / math.sqrt(3)
        return g1, g2
    t1, t2, t3, t4 = terms
    g1 = (t1 + 1j * t2 + t3 + 1j * t4) / math.sqrt(2)
    g2 = (t1 + 1j * t2 - t3 - 1j * t4) / math.sqrt(2)
    return g1, g2


def g_factors(x, y, d, aux):
    """The pair ``(g_1, g_2)`` at points ``x, y`` (arrays of shape ``(..., d)``).

    ``|g_1|^2 + |g_2|^2 = a_1^2 + b_1^2 a_2^2 + ...`` with ``a_j, b_j``
    evaluated at ``x_j - y_j``.  For ``d=3`` the second factor uses the
    cube root of unity, for ``d=4`` the imaginary unit.
    """
    if d not in (3, 4):
        raise InvalidInputError(f"fermionic constructions need d in (3, 4), got {d!r}")
    u = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    if u.shape[-1] != d:
        raise InvalidInputError(f"points must have trailing dimension {d}, got {u.shape}")
    a = [aux.a(u[..., j]) for j in range(d)]
    b = [aux.b(u[..., j]) for j in range(d)]
    return _combine(_chain_terms(a, b), d)


def modulus_chain(x, y, d, aux):
    """Right-hand side ``a_1^2 + b_1^2 a_2^2 + ...`` of the modulus identity."""
    u = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    a = [aux.a(u[..., j]) for j in range(d)]
    b = [aux.b(u[..., j]) for j in range(d)]
    return sum(t * t for t in _chain_terms(a, b))


def _pair_differences(grid, N, p, q):
    """Per-axis ``x_p - x_q`` at cell centres, broadcastable to the product field."""
    d, n = grid.d, grid.n
    out = []
    for j in range(d):
        c = grid.axis_centers(j)
        sp = [1] * (d * N)
        sp[p * d + j] = n
        sq = [1] * (d * N)
        sq[q * d + j] = n
        out.append(c.reshape(sp) - c.reshape(sq))
    return out


def _pair_factors(grid, N, p, q, aux):
    u = _pair_differences(grid, N, p, q)
    a = [aux.a(t) for t in u]
    b = [aux.b(t) for t in u]
    return _combine(_chain_terms(a, b), grid.d)


# --- wavefunctions -----------------------------------------------------------


def spin_states(N):
    return ["".join(s) for s in itertools.product("01", repeat=N)]


@dataclass(frozen=True, eq=False)
class SpinWaveFunction:
    """``2**N`` components on ``grid**N``; ``None`` marks an identically zero one."""

    grid: object
    N: int
    statistics: str
    components: dict = field(repr=False)
    psi: ProductField = field(repr=False)
    alpha: float = math.nan
    k: float = math.nan
    C: float = math.nan
    aux: AuxiliaryPair = field(default=None, repr=False)

    @property
    def d(self):
        return self.grid.d

    @property
    def shape(self):
        return self.psi.values.shape

    def component(self, s):
        v = self.components[s]
        return np.zeros(self.shape) if v is None else v

    def nonzero(self):
        return {s: v for s, v in self.components.items() if v is not None}

    def density(self):
        out = np.zeros(self.shape)
        for v in self.nonzero().values():
            out += v.real**2 + v.imag**2 if np.iscomplexobj(v) else v * v
        return out

    def grad_sq(self):
        """Pointwise ``sum_s |grad psi_s|^2`` by finite differences."""
        out = np.zeros(self.shape)
        for v in self.nonzero().values():
            out += gradient_sq(v, self.psi.spacing)
        return out

    def kinetic_energy(self):
        """``\\int sum_s |grad psi_s|^2`` (no ``hbar^2/2`` factor)."""
        return float(self.grad_sq().sum() * self.psi.cell_volume)

    def manifest(self):
        return {"N": self.N, "d": self.d, "alpha": self.alpha, "k": self.k, "C": self.C,
                "statistics": self.statistics, "n": self.grid.n,
                "box_min": list(self.grid.box_min), "box_max": list(self.grid.box_max)}


def _check_symmetric_amplitude(psi_field, N):
    if not isinstance(psi_field, ProductField) or psi_field.arity != N:
        raise InvalidInputError(f"expected a ProductField of arity {N}")
    if np.iscomplexobj(psi_field.values):
        raise InvalidInputError("psi must be real")
    if not is_symmetric(psi_field, SYMMETRY_TOL):
        raise InvalidInputError("psi is not permutation symmetric")


def build_bosonic(psi_field, N=None):
    """All-spin-zero wavefunction carrying ``psi`` unchanged."""
    N = psi_field.arity if N is None else check_arity(N)
    _check_symmetric_amplitude(psi_field, N)
    if psi_field.values.min() < 0:
        raise InvalidInputError("psi must be nonnegative")
    comps = {s: None for s in spin_states(N)}
    comps["0" * N] = np.asarray(psi_field.values, dtype=float)
    return SpinWaveFunction(psi_field.grid, N, "bosonic", comps, psi_field)


def _n3_table():
    # spin string -> (pair, which factor, sign); factors carry 1/sqrt(3)
    return {
        "001": ((0, 1), 0, 1.0),
        "010": ((0, 2), 0, -1.0),
        "100": ((1, 2), 0, 1.0),
        "110": ((0, 1), 1, 1.0),
        "101": ((0, 2), 1, -1.0),
        "011": ((1, 2), 1, 1.0),
    }


def build_fermionic(psi_field, N, d, alpha, aux="trig"):
    """Fermionic wavefunction with square density ``psi**2``.

    Parameters
    ----------
    psi_field : ProductField
        Symmetric real amplitude on ``grid**N`` vanishing wherever two
        particles are closer than ``alpha``.
    N : {2, 3}
    d : {3, 4}
        Must match the grid dimension.
    alpha : float
        Off-diagonal radius of ``psi``.
    aux : {"trig", "smoothstep"} or AuxiliaryPair
        An explicit pair must use the radius ``alpha / sqrt(d)``.

    Raises
    ------
    PreconditionError
        If ``psi`` is non-negligible on the strip ``D_alpha``.
    """
    N = check_arity(N)
    if d not in (3, 4):
        raise InvalidInputError(f"fermionic constructions need d in (3, 4), got {d!r}")
    if psi_field.grid.d != d:
        raise InvalidInputError(f"grid has d={psi_field.grid.d}, expected {d}")
    _check_symmetric_amplitude(psi_field, N)
    r = aux_radius(alpha, d)
    if isinstance(aux, str):
        aux = aux_pair(r, aux)
    elif abs(aux.r - r) > 1e-12 * r:
        raise InvalidInputError(f"aux radius {aux.r!r} does not match alpha/sqrt(d) = {r!r}")
    grid = psi_field.grid
    psi = np.asarray(psi_field.values, dtype=float)
    near = min_pair_distance(grid, N) < alpha
    leak = float(np.abs(psi_field.slots())[near].max()) if near.any() else 0.0
    if leak > VANISH_TOL:
        raise PreconditionError(f"psi reaches {leak:.3g} on the strip of radius {alpha:g}")

    comps = {s: None for s in spin_states(N)}
    if N == 2:
        g1, g2 = _pair_factors(grid, N, 0, 1, aux)
        comps["00"] = g1 * psi
        comps["11"] = g2 * psi
    else:
        cache = {}
        for s, (pair, which, sign) in _n3_table().items():
            if pair not in cache:
                cache[pair] = _pair_factors(grid, N, *pair, aux)
            comps[s] = (sign / math.sqrt(3)) * cache[pair][which] * psi
    return SpinWaveFunction(grid, N, "fermionic", comps, psi_field, float(alpha), aux.k,
                            fermionic_constant(d, aux.k), aux)


# --- verification ------------------------------------------------------------


def _swap_axes(values, d, i, j):
    N = values.ndim // d
    order = list(range(N))
    order[i], order[j] = order[j], order[i]
    axes = [p * d + k for p in order for k in range(d)]
    return np.transpose(values, axes)


def _swap_spin(s, i, j):
    t = list(s)
    t[i], t[j] = t[j], t[i]
    return "".join(t)


def exchange_violation(wf, i, j, sign):
    """``max_s max_X |psi_{sigma s}(sigma X) - sign psi_s(X)|`` for the swap ``(i j)``."""
    worst = 0.0
    for s in spin_states(wf.N):
        t = _swap_spin(s, i, j)
        a, b = wf.components[t], wf.components[s]
        if a is None and b is None:
            continue
        lhs = _swap_axes(wf.component(t), wf.d, i, j)
        worst = max(worst, float(np.abs(lhs - sign * wf.component(s)).max()))
    return worst


def same_spin_violation(wf):
    """Worst failure of antisymmetry under swaps of particles sharing a spin value."""
    worst = 0.0
    for s, v in wf.nonzero().items():
        for i, j in itertools.combinations(range(wf.N), 2):
            if s[i] == s[j]:
                worst = max(worst, float(np.abs(_swap_axes(v, wf.d, i, j) + v).max()))
    return worst


def cross_term_residual(wf):
    """``max |psi v|`` with ``v = 2 sum_j t_j grad t_j`` over the chain terms.

    Gradients are analytic; a nonzero value means the amplitude breaks the
    off-diagonal condition the construction depends on.
    """
    if wf.statistics != "fermionic":
        return 0.0
    aux, grid, N = wf.aux, wf.grid, wf.N
    psi = np.abs(wf.psi.values)
    worst = 0.0
    for p, q in itertools.combinations(range(N), 2):
        u = _pair_differences(grid, N, p, q)
        a = [aux.a(t) for t in u]
        b = [aux.b(t) for t in u]
        da = [aux.da(t) for t in u]
        db = [aux.db(t) for t in u]
        terms = _chain_terms(a, b)
        # d t_m / d u_j for t_m = b_1 ... b_{m-1} a_m
        v_sq = 0.0
        for j in range(grid.d):
            comp = 0.0
            for m, t in enumerate(terms):
                if j > m:
                    continue
                dt = 1.0
                for l in range(m):
                    dt = dt * (db[l] if l == j else b[l])
                dt = dt * (da[m] if j == m else a[m])
                comp = comp + t * dt
            # derivative w.r.t. x_p and -y_q give equal magnitude
            v_sq = v_sq + 2 * (2 * comp) ** 2
        worst = max(worst, float((psi * np.sqrt(v_sq)).max()))
    return worst


@dataclass(frozen=True)
class StatisticsReport:
    statistics: str
    exchange: dict
    same_spin: float
    density_error: float
    gradient_margin: float
    gradient_scale: float
    cross_term: float
    C: float

    @property
    def relative_margin(self):
        """``gradient_margin / gradient_scale``; negative values are finite-difference slack."""
        return self.gradient_margin / self.gradient_scale if self.gradient_scale > 0 else 0.0

    def as_dict(self):
        out = dict(self.__dict__)
        out["exchange"] = {f"{i}{j}": v for (i, j), v in self.exchange.items()}
        out["relative_margin"] = self.relative_margin
        return out


def verify_statistics(wf):
    """Collect exchange, density and gradient-bound diagnostics for ``wf``.

    ``exchange`` maps each transposition to the worst violation of
    antisymmetry (fermionic) or symmetry (bosonic).  ``gradient_margin`` is
    the minimum over cells of ``|grad psi|^2 + (C/alpha^2) psi^2 -
    sum_s |grad psi_s|^2`` (finite differences); bosonic wavefunctions use
    ``C = 0``.
    """
    sign = -1.0 if wf.statistics == "fermionic" else 1.0
    exchange = {(i, j): exchange_violation(wf, i, j, sign)
                for i, j in itertools.combinations(range(wf.N), 2)}
    psi = wf.psi.values
    density_error = float(np.abs(wf.density() - psi * psi).max())
    rhs = gradient_sq(psi, wf.psi.spacing)
    if wf.statistics == "fermionic":
        rhs = rhs + (wf.C / wf.alpha**2) * psi * psi
    margin = rhs - wf.grad_sq()
    C = wf.C if wf.statistics == "fermionic" else 0.0
    return StatisticsReport(wf.statistics, exchange, same_spin_violation(wf) if sign < 0 else 0.0,
                            density_error, float(margin.min()), float(rhs.max()),
                            cross_term_residual(wf), C)


# --- serialisation -----------------------------------------------------------


def write_wavefunction(directory, wf):
    """Write ``2**N`` component blocks and ``manifest.json`` into ``directory``.

    Complex components are split into ``<s>_re.dgf1`` and ``<s>_im.dgf1``.
    """
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    g = wf.grid
    files = {}
    for s in spin_states(wf.N):
        v = wf.component(s)
        if np.iscomplexobj(v):
            write_dgf1(out / f"{s}_re.dgf1", v.real, g.d, wf.N, g.n)
            write_dgf1(out / f"{s}_im.dgf1", v.imag, g.d, wf.N, g.n)
            files[s] = [f"{s}_re.dgf1", f"{s}_im.dgf1"]
        else:
            write_dgf1(out / f"{s}.dgf1", v, g.d, wf.N, g.n)
            files[s] = [f"{s}.dgf1"]
    manifest = wf.manifest()
    manifest["components"] = files
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out


def read_components(directory):
    """Inverse of :func:`write_wavefunction`: ``(manifest, {s: array})``."""
    src = Path(directory)
    manifest = json.loads((src / "manifest.json").read_text())
    comps = {}
    for s, names in manifest["components"].items():
        parts = [read_dgf1(src / name)[3] for name in names]
        comps[s] = parts[0] if len(parts) == 1 else parts[0] + 1j * parts[1]
    return manifest, comps
