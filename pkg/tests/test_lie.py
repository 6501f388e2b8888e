import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.integrate import solve_ivp

from nilpw.catalog import get_group
from nilpw.lie import (
    Ad,
    AlgebraError,
    StructureConstants,
    ad_matrix,
    algebra_to_dict,
    bch_product,
    bracket,
    check_ideal_flag,
    coadjoint_action,
    group_inv,
    group_mul,
    jacobi_residual,
    load_algebra,
    lower_central_series,
)


def bch_ode(sc, a, b):
    """Independent oracle: Z(t) = log(exp a exp tb) solves Z' = f(ad_Z) b,
    f(u) = u / (1 - e^-u) = 1 + u/2 + u^2/12 - u^4/720 + ..."""
    coeffs = [1.0, 1 / 2, 1 / 12, 0.0, -1 / 720]

    def rhs(t, z):
        ad = ad_matrix(sc, z)
        out, term = np.zeros_like(z), b.copy()
        for c in coeffs:
            out += c * term
            term = ad @ term
        return out

    sol = solve_ivp(rhs, (0, 1), np.asarray(a, float), rtol=1e-12, atol=1e-13, method="DOP853")
    return sol.y[:, -1]


def test_heisenberg_bracket(heis):
    X, Y, Z = np.eye(3)
    assert np.allclose(bracket(heis.sc, X, Y), Z)
    assert np.allclose(bracket(heis.sc, Y, X), -Z)


def test_engel_nested_bracket(engel):
    X1, X2, X3, X4 = np.eye(4)
    assert np.allclose(bracket(engel.sc, X1, bracket(engel.sc, X1, X2)), X4)


@given(arrays(float, 3, elements=st.floats(-2, 2)), arrays(float, 3, elements=st.floats(-2, 2)))
def test_bracket_antisymmetric_and_self_zero(a, b):
    sc = get_group("heisenberg").sc
    assert np.allclose(bracket(sc, a, a), 0)
    assert np.allclose(bracket(sc, a, b), -bracket(sc, b, a))


def test_bracket_dimension_mismatch(heis):
    with pytest.raises(AlgebraError):
        bracket(heis.sc, np.ones(3), np.ones(4))


def test_abelian_bch_is_sum(rng):
    sc = get_group("abelian2").sc
    a, b = rng.normal(size=(2, 2))
    assert np.allclose(bch_product(sc, a, b), a + b)


def test_heisenberg_bch_closed_form(heis, rng):
    for _ in range(20):
        a, b = rng.uniform(-2, 2, size=(2, 3))
        expected = [a[0] + b[0], a[1] + b[1], a[2] + b[2] + (a[0] * b[1] - a[1] * b[0]) / 2]
        assert np.allclose(bch_product(heis.sc, a, b), expected, atol=1e-14)


def test_heisenberg_product_example(heis):
    assert np.allclose(group_mul(heis.sc, [1, 0, 0], [0, 1, 0]), [1, 1, 0.5])


@pytest.mark.parametrize("name", ["heisenberg", "engel"])
def test_bch_matches_ode_oracle(name, rng):
    sc = get_group(name).sc
    for _ in range(5):
        a, b = rng.uniform(-2, 2, size=(2, sc.dim))
        assert np.allclose(bch_product(sc, a, b), bch_ode(sc, a, b), atol=1e-9)


def test_bch_depth4_against_ode_oracle(rng):
    # filiform step-4 algebra: [e0,ei] = e(i+1)
    n = 5
    c = np.zeros((n, n, n))
    for i in range(1, n - 1):
        c[0, i, i + 1], c[i, 0, i + 1] = 1, -1
    sc = StructureConstants(c)
    assert sc.step == 4
    for _ in range(5):
        a, b = rng.uniform(-2, 2, size=(2, n))
        assert np.allclose(bch_product(sc, a, b), bch_ode(sc, a, b), atol=1e-9)


def test_ad_is_homomorphism_of_group_law(bundle, rng):
    sc = bundle.sc
    a, b = rng.uniform(-2, 2, size=(2, sc.dim))
    assert np.allclose(Ad(sc, bch_product(sc, a, b)), Ad(sc, a) @ Ad(sc, b), atol=1e-10)


def test_bch_inverse_and_identity(bundle, rng):
    sc = bundle.sc
    for g in rng.uniform(-2, 2, size=(20, sc.dim)):
        assert np.abs(bch_product(sc, g, -g)).max() < 1e-12
        assert np.allclose(group_mul(sc, np.zeros(sc.dim), g), g)
        assert np.abs(group_mul(sc, g, group_inv(sc, g))).max() < 1e-12


def test_bch_associative(bundle, rng):
    sc = bundle.sc
    a, b, c = rng.uniform(-2, 2, size=(3, 500, sc.dim))
    lhs = bch_product(sc, bch_product(sc, a, b), c)
    rhs = bch_product(sc, a, bch_product(sc, b, c))
    assert np.abs(lhs - rhs).max() < 1e-10


def test_coadjoint_identity_and_abelian(bundle, rng):
    sc = bundle.sc
    l = rng.normal(size=sc.dim)
    assert np.allclose(coadjoint_action(sc, np.zeros(sc.dim), l), l)
    if sc.step == 1:
        assert np.allclose(coadjoint_action(sc, rng.normal(size=sc.dim), l), l)


def test_coadjoint_heisenberg_orbit(heis, rng):
    lam = 1.7
    l = np.array([0, 0, lam])
    pts = np.array([coadjoint_action(heis.sc, g, l) for g in rng.uniform(-2, 2, size=(50, 3))])
    assert np.allclose(pts[:, 2], lam)
    # orbit is the whole plane: first two components sweep (a, b) = lam * (y, -x)
    g = np.array([0.3, -0.8, 0.1])
    assert np.allclose(coadjoint_action(heis.sc, g, l), [lam * g[1], -lam * g[0], lam])


def test_coadjoint_is_left_action(bundle, rng):
    sc = bundle.sc
    for _ in range(20):
        g1, g2 = rng.uniform(-2, 2, size=(2, sc.dim))
        l = rng.normal(size=sc.dim)
        lhs = coadjoint_action(sc, g1, coadjoint_action(sc, g2, l))
        rhs = coadjoint_action(sc, group_mul(sc, g1, g2), l)
        assert np.abs(lhs - rhs).max() < 1e-10


def test_jacobi_residuals(bundle):
    assert jacobi_residual(bundle.sc.c) < 1e-12


@pytest.mark.parametrize(
    "name, dims, step",
    [("abelian2", [2, 0], 1), ("heisenberg", [3, 1, 0], 2), ("engel", [4, 2, 1, 0], 3)],
)
def test_lower_central_series(name, dims, step):
    cs = lower_central_series(get_group(name).sc)
    assert cs.dims == dims
    assert cs.step == step
    check_ideal_flag(get_group(name).sc, cs.flag)


def test_series_spans():
    heis = lower_central_series(get_group("heisenberg").sc)
    assert np.allclose(np.abs(heis.terms[1]), [[0, 0, 1]])
    engel = lower_central_series(get_group("engel").sc)
    P = engel.terms[1].T @ engel.terms[1]
    assert np.allclose(P, np.diag([0, 0, 1, 1]))
    assert np.allclose(np.abs(engel.terms[2]), [[0, 0, 0, 1]])
    assert np.allclose(engel.flag, np.eye(4)[::-1])


def test_not_nilpotent_rejected():
    # sl2-like brackets: [e0,e1]=e2, [e2,e0]=2e0, [e2,e1]=-2e1
    c = np.zeros((3, 3, 3))
    for i, j, k, v in [(0, 1, 2, 1), (2, 0, 0, 2), (2, 1, 1, -2)]:
        c[i, j, k], c[j, i, k] = v, -v
    with pytest.raises(AlgebraError, match="not nilpotent"):
        StructureConstants(c)


def test_non_antisymmetric_and_jacobi_rejected():
    c = np.zeros((2, 2, 2))
    c[0, 1, 0] = 1
    with pytest.raises(AlgebraError):
        StructureConstants(c)
    # [e0,e1]=e2, [e1,e2]=e0, others zero violates Jacobi
    c = np.zeros((3, 3, 3))
    for i, j, k in [(0, 1, 2), (1, 2, 0)]:
        c[i, j, k], c[j, i, k] = 1, -1
    with pytest.raises(AlgebraError):
        StructureConstants(c)


def test_bad_flag_rejected(heis):
    with pytest.raises(AlgebraError, match="not an ideal flag"):
        check_ideal_flag(heis.sc, np.eye(3))


def test_algebra_json_roundtrip(tmp_path, engel):
    path = tmp_path / "engel.json"
    path.write_text(json.dumps(algebra_to_dict(engel.sc)))
    sc = load_algebra(path)
    assert np.array_equal(sc.c, engel.sc.c)
    assert sc.step == 3


@settings(max_examples=50)
@given(arrays(float, (3, 4), elements=st.floats(-2, 2)))
def test_engel_associativity_property(x):
    sc = get_group("engel").sc
    a, b, c = x
    lhs = bch_product(sc, bch_product(sc, a, b), c)
    rhs = bch_product(sc, a, bch_product(sc, b, c))
    assert np.abs(lhs - rhs).max() < 1e-10
