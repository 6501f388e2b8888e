"""Nilpotent Lie algebras given by structure constants, and the group law in
exponential coordinates.

Group elements and algebra elements are both plain coordinate vectors of
length ``n``; a group element ``g`` is the point ``exp(sum g[i] e_i)``.  All
functions broadcast over leading axes, so a stack of shape ``(..., n)`` is
processed in one call.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from math import factorial
from pathlib import Path

import numpy as np


class AlgebraError(ValueError):
    """Invalid structure constants or mismatched dimensions."""


def _rank(vectors: np.ndarray, tol: float = 1e-10) -> int:
    if vectors.size == 0:
        return 0
    s = np.linalg.svd(np.atleast_2d(vectors), compute_uv=False)
    return int(np.sum(s > tol * max(1.0, s[0])))


def _span_basis(vectors: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Orthonormal rows spanning the row space of ``vectors``."""
    vectors = np.atleast_2d(vectors)
    if vectors.size == 0:
        return np.zeros((0, vectors.shape[-1]))
    u, s, vt = np.linalg.svd(vectors, full_matrices=False)
    r = int(np.sum(s > tol * max(1.0, s[0] if s.size else 0.0)))
    return vt[:r]


@dataclass(frozen=True)
class StructureConstants:
    """``c[i, j, k]`` is the coefficient of ``e_k`` in ``[e_i, e_j]``."""

    c: np.ndarray
    name: str = "algebra"
    step: int = field(init=False)

    def __post_init__(self):
        c = np.array(self.c, dtype=float)
        if c.ndim != 3 or not (c.shape[0] == c.shape[1] == c.shape[2]):
            raise AlgebraError(f"structure constants must be n x n x n, got {c.shape}")
        if not np.allclose(c, -c.transpose(1, 0, 2), atol=1e-14):
            raise AlgebraError("structure constants are not antisymmetric")
        c.setflags(write=False)
        object.__setattr__(self, "c", c)
        res = jacobi_residual(c)
        if res > 1e-12:
            raise AlgebraError(f"Jacobi identity fails (residual {res:.3g})")
        object.__setattr__(self, "step", len(_central_series_terms(c)) - 1)
        i, j, k = np.nonzero(np.triu(np.ones(c.shape[:2]), 1)[:, :, None] * (c != 0))
        object.__setattr__(self, "_terms", (i, j, k, c[i, j, k]))

    @property
    def dim(self) -> int:
        return self.c.shape[0]

    @classmethod
    def from_brackets(cls, dim, brackets, name="algebra"):
        """Build from ``[(i, j, coeffs), ...]`` with ``i < j`` (0-based)."""
        c = np.zeros((dim, dim, dim))
        for i, j, coeffs in brackets:
            coeffs = np.asarray(coeffs, dtype=float)
            if coeffs.shape != (dim,):
                raise AlgebraError(f"bracket [{i},{j}] needs {dim} coefficients")
            if i == j:
                raise AlgebraError(f"bracket [{i},{i}] must vanish")
            c[i, j] = coeffs
            c[j, i] = -coeffs
        return cls(c, name=name)

    def brackets(self):
        """Nonzero upper-triangular brackets, the inverse of ``from_brackets``."""
        n = self.dim
        return [
            (i, j, self.c[i, j].tolist())
            for i in range(n)
            for j in range(i + 1, n)
            if np.any(self.c[i, j] != 0)
        ]


def jacobi_residual(c: np.ndarray) -> float:
    # [e_i,[e_j,e_k]] as array J[i,j,k,:]
    inner = c  # [e_j, e_k] -> c[j,k,:]
    J = np.einsum("jkm,imr->ijkr", inner, c)
    total = J + J.transpose(1, 2, 0, 3) + J.transpose(2, 0, 1, 3)
    return float(np.abs(total).max()) if total.size else 0.0


def _check(sc: StructureConstants, *arrays):
    for a in arrays:
        if np.shape(a)[-1] != sc.dim:
            raise AlgebraError(
                f"dimension mismatch: expected length {sc.dim}, got {np.shape(a)[-1]}"
            )


def bracket(sc: StructureConstants, a, b) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    _check(sc, a, b)
    i, j, k, coef = sc._terms
    shape = np.broadcast_shapes(a.shape, b.shape)
    out = np.zeros(shape)
    for ii, jj, kk, cc in zip(i, j, k, coef):
        out[..., kk] += cc * (a[..., ii] * b[..., jj] - a[..., jj] * b[..., ii])
    return out


def bch_product(sc: StructureConstants, a, b) -> np.ndarray:
    """``log(exp a exp b)`` from the Dynkin series through commutator depth 4.

    Exact (up to roundoff) for algebras of step at most 4.
    """
    if sc.step > 4:
        raise AlgebraError(f"BCH is implemented through depth 4; algebra has step {sc.step}")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    _check(sc, a, b)
    z = a + b
    if sc.step == 1:
        return np.broadcast_to(z, np.broadcast_shapes(a.shape, b.shape)).copy()
    ab = bracket(sc, a, b)
    z = z + 0.5 * ab
    if sc.step >= 3:
        a_ab = bracket(sc, a, ab)
        b_ab = bracket(sc, b, ab)
        z = z + (a_ab - b_ab) / 12.0
        if sc.step >= 4:
            z = z - bracket(sc, b, a_ab) / 24.0
    return z


def group_mul(sc: StructureConstants, g1, g2) -> np.ndarray:
    return bch_product(sc, g1, g2)


def group_inv(sc: StructureConstants, g) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    _check(sc, g)
    return -g


def identity(sc: StructureConstants) -> np.ndarray:
    return np.zeros(sc.dim)


def ad_matrix(sc: StructureConstants, a) -> np.ndarray:
    """Matrix of ``ad_a`` acting on column coordinate vectors."""
    a = np.asarray(a, dtype=float)
    _check(sc, a)
    return np.einsum("...i,ijk->...kj", a, sc.c)


def Ad(sc: StructureConstants, g) -> np.ndarray:
    """``exp(ad_{log g})`` as a finite sum (ad is nilpotent)."""
    ad = ad_matrix(sc, g)
    n = sc.dim
    out = np.broadcast_to(np.eye(n), ad.shape).copy()
    term = out.copy()
    for p in range(1, sc.step + 1):
        term = term @ ad
        out = out + term / factorial(p)
    return out


def coadjoint_action(sc: StructureConstants, g, l) -> np.ndarray:
    """Left coadjoint action ``l o Ad(g^-1)`` on row covectors."""
    l = np.asarray(l, dtype=float)
    _check(sc, l)
    return np.einsum("...i,...ij->...j", l, Ad(sc, group_inv(sc, g)))


def pairing(l, a) -> np.ndarray:
    return np.einsum("...i,...i->...", np.asarray(l, dtype=float), np.asarray(a, dtype=float))


def _central_series_terms(c: np.ndarray):
    n = c.shape[0]
    terms = [np.eye(n)]
    for _ in range(n + 1):
        cur = terms[-1]
        if cur.shape[0] == 0:
            return terms
        prods = np.einsum("ai,bj,ijk->abk", np.eye(n), cur, c).reshape(-1, n)
        nxt = _span_basis(prods)
        if nxt.shape[0] == cur.shape[0]:
            raise AlgebraError("not nilpotent: lower central series stalls above {0}")
        terms.append(nxt)
    raise AlgebraError("not nilpotent: lower central series does not terminate")


@dataclass(frozen=True)
class CentralSeries:
    terms: list  # orthonormal bases of g = C1 > C2 > ... > {0}
    flag: np.ndarray  # rows f_1..f_n; span(f_1..f_j) is an ideal of dimension j
    step: int

    @property
    def dims(self):
        return [t.shape[0] for t in self.terms]


def lower_central_series(sc: StructureConstants) -> CentralSeries:
    """Lower central series and a refining full flag of ideals.

    The flag is built bottom-up: inside each term of the series, standard
    basis vectors are added from the highest index down, then (only if the
    term is not coordinate-aligned) its own basis vectors.
    """
    terms = _central_series_terms(sc.c)
    n = sc.dim
    flag = np.zeros((0, n))
    for term in reversed(terms[:-1]):
        cands = [np.eye(n)[i] for i in reversed(range(n))] + list(term)
        for v in cands:
            if flag.shape[0] >= term.shape[0]:
                break
            in_term = _rank(np.vstack([term, v])) == term.shape[0]
            if in_term and _rank(np.vstack([flag, v])) > flag.shape[0]:
                flag = np.vstack([flag, v])
    return CentralSeries(terms=terms, flag=flag, step=len(terms) - 1)


def check_ideal_flag(sc: StructureConstants, flag) -> None:
    """Raise if ``span(flag[:j])`` fails to be an ideal for some ``j``."""
    flag = np.asarray(flag, dtype=float)
    n = sc.dim
    if flag.shape != (n, n) or _rank(flag) != n:
        raise AlgebraError("flag must consist of n independent vectors")
    for j in range(1, n + 1):
        sub = flag[:j]
        for i in range(n):
            for v in sub:
                w = bracket(sc, np.eye(n)[i], v)
                if _rank(np.vstack([sub, w])) > j:
                    raise AlgebraError(
                        f"flag is not an ideal flag: [e_{i}, {np.round(v, 6).tolist()}] "
                        f"leaves span of the first {j} flag vectors"
                    )


def load_algebra(path) -> StructureConstants:
    """Read ``{name, dim, brackets: [[i, j, [coeffs...]], ...]}``."""
    data = json.loads(Path(path).read_text())
    return algebra_from_dict(data)


def algebra_from_dict(data: dict) -> StructureConstants:
    try:
        dim = int(data["dim"])
        brackets = data.get("brackets", [])
    except (KeyError, TypeError, ValueError) as exc:
        raise AlgebraError(f"malformed algebra definition: {exc}") from exc
    for entry in brackets:
        if len(entry) != 3 or not entry[0] < entry[1]:
            raise AlgebraError(f"bracket entries must be [i, j, coeffs] with i < j: {entry}")
    return StructureConstants.from_brackets(dim, brackets, name=data.get("name", "algebra"))


def algebra_to_dict(sc: StructureConstants) -> dict:
    return {
        "name": sc.name,
        "dim": sc.dim,
        "brackets": [[i, j, coeffs] for i, j, coeffs in sc.brackets()],
    }
