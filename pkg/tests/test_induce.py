import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nilpw.acceptance import hermite_subspace, representation_defects
from nilpw.catalog import get_group, oracle_representation
from nilpw.grids import GridSpec
from nilpw.induce import act, act_matrix, cocycle, factorize, section
from nilpw.lie import AlgebraError, group_mul


def test_section_and_factorize_roundtrip(bundle, rng):
    if bundle.chart is None:
        pytest.skip("no chart")
    lam = np.full(bundle.chart.k, 1.3)
    rep = bundle.rep(lam)
    g = rng.uniform(-2, 2, size=(50, bundle.n))
    h, x = factorize(rep, g)
    assert np.allclose(group_mul(rep.sc, h, section(rep, x)), g, atol=1e-12)
    coords = h @ rep.frame_inv
    assert np.abs(coords[:, rep.m:]).max(initial=0) < 1e-12


def test_cocycle_identity(heis):
    rep = heis.rep(1.0)
    x = np.linspace(-1, 1, 7)[:, None]
    A, xg = cocycle(rep, np.zeros((7, 3)), x)
    assert np.allclose(A, 1) and np.allclose(xg, x)


@settings(max_examples=40, deadline=None)
@given(arrays(float, (2, 3), elements=st.floats(-1, 1)), st.floats(-1.5, 1.5), st.floats(0.3, 3))
def test_cocycle_law(gs, x, lam):
    # A(g1 g2, x) = A(g1, x) A(g2, x g1): the realization is a homomorphism
    heis = get_group("heisenberg")
    rep = heis.rep(lam)
    g1, g2 = gs
    x = np.array([x])
    A1, xg1 = cocycle(rep, g1, x)
    A2, xg12 = cocycle(rep, g2, xg1)
    A12, xg = cocycle(rep, group_mul(heis.sc, g1, g2), x)
    assert np.allclose(A12, A1 * A2)
    assert np.allclose(xg, xg12)


def test_heisenberg_matches_closed_form_exactly_at_nodes(heis, rng):
    # a shift by a multiple of the spacing lands on nodes: no interpolation error
    X = heis.grids["X"]
    x = X.points[:, 0]
    f = np.exp(-x**2)
    h = X.spacings[0]
    for _ in range(10):
        lam = rng.uniform(0.5, 4)
        g = np.array([3 * h, rng.uniform(-1, 1), rng.uniform(-1, 1)])
        got = act(heis.rep(lam), g, f, X)
        phase, shifted = oracle_representation(heis, lam, g, x)
        inside = np.abs(shifted) < 3
        assert np.allclose(got[inside], (phase * np.exp(-shifted**2))[inside], atol=1e-13)


def test_act_matrix_agrees_with_act(engel, rng):
    X = engel.grids["X"]
    rep = engel.rep([1.1, 0.4])
    f = rng.normal(size=X.size)
    g = rng.uniform(-0.5, 0.5, 4)
    assert np.allclose(act_matrix(rep, g, X) @ f, act(rep, g, f, X))


def test_act_reports_outside_mass(heis):
    X = heis.grids["X"]
    _, outside = act(heis.rep(1.0), [2.0, 0, 0], np.ones(X.size), X, return_outside=True)
    assert outside > 0


def test_wrong_x_dimension(heis):
    with pytest.raises(AlgebraError):
        section(heis.rep(1.0), np.zeros((3, 2)))


def test_unitary_and_homomorphism_on_resolved_modes(heis, rng):
    X = heis.grids["X"]
    Q = hermite_subspace(X)
    pairs = rng.uniform(-0.5, 0.5, size=(10, 2, 3))
    du, dh = representation_defects(heis, 1.0, X, pairs, Q)
    assert du < 1e-3 and dh < 1e-3


def test_reversed_composition_is_not_a_homomorphism(heis, rng):
    X = heis.grids["X"]
    Q = hermite_subspace(X)
    rep = heis.rep(2.0)
    r = np.sqrt(X.interp_weights)[:, None]
    g1, g2 = np.array([0.4, -0.3, 0.1]), np.array([-0.2, 0.5, 0.3])
    M1, M2, M12 = (act_matrix(rep, g, X) for g in (g1, g2, group_mul(heis.sc, g1, g2)))
    assert np.linalg.norm(r * ((M2 @ M1 - M12) @ Q), 2) > 0.1


def test_abelian_rep_is_a_character():
    b = get_group("abelian2")
    rep = b.rep([0.7, -1.2])
    X = GridSpec()
    M = act_matrix(rep, [0.5, 0.25], X)
    assert M.shape == (1, 1)
    assert M[0, 0] == pytest.approx(np.exp(1j * (0.35 - 0.3)))
