import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nilpw.catalog import get_group
from nilpw.lie import AlgebraError, coadjoint_action
from nilpw.orbits import (
    NonGenericWarning,
    form_rank,
    max_orbit_dimension,
    orbit_dimension,
    pfaffian,
    plancherel_density,
    polarization_residuals,
    radical,
    skew_form,
    vergne_polarization,
)


def skew(rng, n):
    a = rng.normal(size=(n, n))
    return a - a.T


@pytest.mark.parametrize("n", [2, 4, 6, 8, 10])
def test_pfaffian_squares_to_det(n, rng):
    for _ in range(20):
        B = skew(rng, n)
        d = np.linalg.det(B)
        assert pfaffian(B) ** 2 == pytest.approx(d, rel=1e-10)


def test_pfaffian_known_values():
    assert pfaffian(np.zeros((0, 0))) == 1.0
    assert pfaffian(np.array([[0, 2.5], [-2.5, 0]])) == 2.5
    # block diagonal: product of blocks
    B = np.zeros((4, 4))
    B[0, 1], B[2, 3] = 2.0, -3.0
    B -= B.T
    assert pfaffian(B) == pytest.approx(-6.0)
    assert pfaffian(np.zeros((3, 3))) == 0.0


def test_pfaffian_rejects_non_skew():
    with pytest.raises(ValueError):
        pfaffian(np.eye(2))


def test_heisenberg_skew_form(heis):
    B = skew_form(heis.sc, [0, 0, 2.0])
    assert np.allclose(B, [[0, 2, 0], [-2, 0, 0], [0, 0, 0]])
    assert np.allclose(np.abs(radical(B).ravel()), [0, 0, 1])


def test_orbit_dimensions(bundle):
    expected = {"abelian1": 0, "abelian2": 0, "heisenberg": 2, "engel": 2}[bundle.name]
    assert max_orbit_dimension(bundle.sc) == expected


def test_orbit_dimension_invariant_along_orbit(engel, rng):
    l = np.array([0.3, -0.4, 0.7, 1.3])
    d = orbit_dimension(engel.sc, l)
    for g in rng.uniform(-1, 1, size=(10, 4)):
        assert orbit_dimension(engel.sc, coadjoint_action(engel.sc, g, l)) == d


def test_heisenberg_polarization(heis):
    pol = vergne_polarization(heis.sc, [0, 0, 1.5], heis.flag)
    assert np.allclose(pol.basis, [[0, 1, 0], [0, 0, 1]])
    assert np.allclose(pol.complement, [[1, 0, 0]])


def test_engel_polarization(engel):
    pol = vergne_polarization(engel.sc, engel.functional([1.2, -0.7]), engel.flag)
    assert np.allclose(pol.basis, np.eye(4)[1:])
    assert np.allclose(pol.complement, [[1, 0, 0, 0]])


@settings(max_examples=60, deadline=None)
@given(arrays(float, 4, elements=st.floats(-3, 3)))
def test_polarization_invariants_engel(l):
    sc = get_group("engel").sc
    if abs(l[3]) < 1e-3:
        l = l.copy()
        l[3] = 1.0
    pol = vergne_polarization(sc, l, get_group("engel").flag)
    sub, subord, defect = polarization_residuals(sc, pol)
    assert sub < 1e-10 and subord < 1e-10 and defect == 0
    assert pol.m + pol.x_dim == 4


def test_polarization_at_non_generic_point(heis):
    # l = 0: the whole algebra is a polarization, X is a point
    pol = vergne_polarization(heis.sc, np.zeros(3), heis.flag)
    assert pol.m == 3 and pol.x_dim == 0


def test_bad_flag_is_caught(engel):
    with pytest.raises(AlgebraError):
        vergne_polarization(engel.sc, [0, 0, 0, 1.0], np.eye(4))


@pytest.mark.parametrize("name, lam, expected", [
    ("heisenberg", [1.7], 1.7),
    ("heisenberg", [-0.4], 0.4),
    ("engel", [1.5, 0.3], 1.5),
    ("engel", [-2.0, -1.0], 2.0),
    ("abelian2", [0.3, 4.0], 1.0),
])
def test_plancherel_density(name, lam, expected):
    b = get_group(name)
    assert plancherel_density(b.sc, b.chart, lam) == pytest.approx(expected, rel=1e-12)


def test_density_non_generic_warns_and_vanishes(heis):
    with pytest.warns(NonGenericWarning):
        assert plancherel_density(heis.sc, heis.chart, [0.0]) == 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        plancherel_density(heis.sc, heis.chart, [0.0], warn=False)


def test_form_rank_edge_cases():
    assert form_rank(np.zeros((0, 0))) == 0
    assert form_rank(np.zeros((3, 3))) == 0
