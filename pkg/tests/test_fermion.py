import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coulomb_ot import fermion as F
from coulomb_ot import grid as G
from coulomb_ot.exceptions import InvalidInputError, PreconditionError

from oracles import TRIG_K, cutoff_amplitude


# --- auxiliary pair --------------------------------------------------------------

@pytest.mark.parametrize("variant", F.VARIANTS)
def test_aux_pair_invariants(variant):
    aux = F.aux_pair(0.7, variant)
    tab = aux.table(2001)
    t = tab["t"]
    np.testing.assert_allclose(tab["a"] ** 2 + tab["b"] ** 2, 1.0, atol=1e-12)
    np.testing.assert_allclose(aux.a(-t), -tab["a"], atol=1e-15)
    np.testing.assert_allclose(aux.b(-t), tab["b"], atol=1e-15)
    out = np.abs(t) >= 0.7
    assert np.all(tab["b"][out] == 0)
    np.testing.assert_array_equal(tab["a"][t >= 0.7], 1.0)
    np.testing.assert_array_equal(tab["a"][t <= -0.7], -1.0)
    bound = aux.k / 0.7 * (1 + 1e-9)
    assert np.abs(tab["da"]).max() <= bound and np.abs(tab["db"]).max() <= bound


def test_aux_pair_examples():
    aux = F.aux_pair(0.5)
    assert aux.a(0.0) == 0 and aux.b(0.0) == 1
    assert aux.a(0.5) == 1 and aux.b(0.5) == 0 and aux.a(-0.5) == -1
    assert aux.k == pytest.approx(TRIG_K)


def test_smoothstep_has_smaller_k_and_is_c1():
    aux = F.aux_pair(1.0, "smoothstep")
    assert math.sqrt(2) < aux.k < TRIG_K
    # derivatives vanish continuously at the switching radius
    assert abs(aux.da(1 - 1e-7)) < 1e-2 and abs(aux.db(1 - 1e-7)) < 1e-2


@settings(max_examples=40, deadline=None)
@given(st.floats(-3, 3), st.floats(0.1, 2))
def test_aux_derivative_matches_difference_quotient(t, r):
    aux = F.aux_pair(r, "smoothstep")
    if abs(abs(t) - r) < 1e-4:
        return
    step = 1e-6 * r
    fd = (aux.a(t + step) - aux.a(t - step)) / (2 * step)
    assert float(fd) == pytest.approx(float(aux.da(t)), abs=1e-4 / r)


def test_aux_errors():
    with pytest.raises(ValueError):
        F.aux_pair(0.0)
    with pytest.raises(ValueError):
        F.aux_pair(1.0, "cubic")


def test_constants():
    assert F.aux_radius(1.2, 3) == pytest.approx(1.2 / math.sqrt(3))
    assert F.aux_radius(1.2, 4) == pytest.approx(0.6)
    assert F.fermionic_constant(3, 2.0) == 96.0
    assert F.fermionic_constant(4, 2.0) == 144.0
    with pytest.raises(InvalidInputError):
        F.fermionic_constant(2, 1.0)


# --- g factors --------------------------------------------------------------------

def _chain(a, b):
    out, pre = 0.0, 1.0
    for aj, bj in zip(a, b):
        out = out + pre * aj * aj
        pre = pre * bj * bj
    return out


@pytest.mark.parametrize("d", [3, 4])
def test_g_modulus_identity(d):
    rng = np.random.default_rng(d)
    aux = F.aux_pair(0.8)
    x, y = rng.uniform(-1, 1, (2, 200, d))
    g1, g2 = F.g_factors(x, y, d, aux)
    u = (x - y).T
    expected = _chain([aux.a(t) for t in u], [aux.b(t) for t in u])
    np.testing.assert_allclose(np.abs(g1) ** 2 + np.abs(g2) ** 2, expected, atol=1e-14)
    g1s, g2s = F.g_factors(y, x, d, aux)
    np.testing.assert_allclose(g1s, -g1, atol=1e-15)
    np.testing.assert_allclose(g2s, -g2, atol=1e-15)


@pytest.mark.parametrize("d", [3, 4])
def test_g_far_and_coincident(d):
    aux = F.aux_pair(0.3)
    x = np.zeros((1, d))
    far = np.full((1, d), 1.0)
    g1, g2 = F.g_factors(x, far, d, aux)
    assert abs(g1[0]) ** 2 + abs(g2[0]) ** 2 == pytest.approx(1.0, abs=1e-15)
    g1, g2 = F.g_factors(x, x, d, aux)
    assert g1[0] == 0 and g2[0] == 0


def test_g_factors_unsupported_dimension():
    with pytest.raises(InvalidInputError):
        F.g_factors(np.zeros((1, 2)), np.ones((1, 2)), 2, F.aux_pair(1.0))


# --- wavefunctions ----------------------------------------------------------------

def _psi(d, N, n, alpha=1.0, box=2.0):
    g = G.build_grid(d, -box, box, n)
    return G.ProductField(g, N, cutoff_amplitude(g, N, alpha).ravel()), alpha


def test_bosonic_wavefunction():
    psi, _ = _psi(3, 2, 6)
    wf = F.build_bosonic(psi)
    assert list(wf.nonzero()) == ["00"]
    np.testing.assert_array_equal(wf.density(), psi.values**2)
    rep = F.verify_statistics(wf)
    assert rep.exchange[(0, 1)] <= 1e-12 and rep.density_error == 0 and rep.same_spin == 0
    from coulomb_ot.smoothing import kinetic_energy
    assert wf.kinetic_energy() == pytest.approx(kinetic_energy(psi), rel=1e-14)


def test_bosonic_rejects_asymmetric():
    g = G.build_grid(1, 0, 1, 4)
    with pytest.raises(InvalidInputError):
        F.build_bosonic(G.ProductField(g, 2, np.arange(16.0)))


@pytest.mark.parametrize("variant", F.VARIANTS)
def test_fermionic_n2_d3(variant):
    psi, alpha = _psi(3, 2, 8)
    wf = F.build_fermionic(psi, 2, 3, alpha, variant)
    assert wf.components["01"] is None and wf.components["10"] is None
    rep = F.verify_statistics(wf)
    assert rep.density_error <= 1e-12
    assert rep.exchange[(0, 1)] <= 1e-12
    assert rep.same_spin <= 1e-12
    assert rep.cross_term <= 1e-12
    assert wf.C == pytest.approx(24 * wf.k**2)
    h = psi.grid.h[0]
    assert rep.relative_margin >= -0.1 * h / alpha


def test_fermionic_n3_d3_table():
    psi, alpha = _psi(3, 3, 4)
    wf = F.build_fermionic(psi, 3, 3, alpha)
    assert wf.components["000"] is None and wf.components["111"] is None
    assert sum(v is not None for v in wf.components.values()) == 6
    rep = F.verify_statistics(wf)
    assert rep.density_error <= 1e-12
    assert max(rep.exchange.values()) <= 1e-12
    assert rep.same_spin <= 1e-12


def test_fermionic_n2_d4():
    psi, alpha = _psi(4, 2, 5)
    wf = F.build_fermionic(psi, 2, 4, alpha)
    assert wf.aux.r == pytest.approx(alpha / 2)
    rep = F.verify_statistics(wf)
    assert rep.density_error <= 1e-12 and rep.exchange[(0, 1)] <= 1e-12
    assert wf.C == pytest.approx(36 * wf.k**2)


def test_precondition_refuses_diagonal_mass():
    g = G.build_grid(3, -2, 2, 6)
    X = np.ones(g.n_cells**2)
    with pytest.raises(PreconditionError):
        F.build_fermionic(G.ProductField(g, 2, X), 2, 3, 1.0)


def test_fermionic_input_checks():
    psi, alpha = _psi(3, 2, 6)
    with pytest.raises(InvalidInputError):
        F.build_fermionic(psi, 2, 4, alpha)
    with pytest.raises(InvalidInputError):
        F.build_fermionic(psi, 2, 3, alpha, F.aux_pair(0.2))
    v = psi.values.copy()
    v.flat[np.flatnonzero(v)[0]] *= 1.5
    with pytest.raises(InvalidInputError):
        F.build_fermionic(G.ProductField(psi.grid, 2, v), 2, 3, alpha)


def test_wavefunction_round_trip(tmp_path):
    psi, alpha = _psi(3, 2, 6)
    wf = F.build_fermionic(psi, 2, 3, alpha)
    F.write_wavefunction(tmp_path, wf)
    manifest, comps = F.read_components(tmp_path)
    assert manifest["N"] == 2 and manifest["statistics"] == "fermionic"
    assert manifest["C"] == wf.C
    for s in F.spin_states(2):
        np.testing.assert_array_equal(comps[s], wf.component(s))
    assert (tmp_path / "00_re.dgf1").exists() or (tmp_path / "00.dgf1").exists()
