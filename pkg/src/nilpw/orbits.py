"""Coadjoint orbit geometry: skew forms, Pfaffians, polarizations, dual charts."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .lie import AlgebraError, StructureConstants, bracket, check_ideal_flag, pairing

RANK_TOL = 1e-8


class NonGenericWarning(UserWarning):
    pass


def skew_form(sc: StructureConstants, l) -> np.ndarray:
    """``B[i, j] = <l, [e_i, e_j]>``."""
    l = np.asarray(l, dtype=float)
    if l.shape[-1] != sc.dim:
        raise AlgebraError(f"functional has length {l.shape[-1]}, algebra dimension {sc.dim}")
    return np.einsum("...k,ijk->...ij", l, sc.c)


def form_rank(B, tol=RANK_TOL) -> int:
    B = np.asarray(B, dtype=float)
    if B.size == 0:
        return 0
    s = np.linalg.svd(B, compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.sum(s > tol * s[0]))


def orbit_dimension(sc, l) -> int:
    return form_rank(skew_form(sc, l))


def _pf_recursive(B):
    n = B.shape[0]
    if n == 0:
        return 1.0
    if n % 2:
        return 0.0
    if n == 2:
        return B[0, 1]
    total = 0.0
    rest = np.arange(1, n)
    for j in range(1, n):
        if B[0, j] == 0:
            continue
        keep = rest[rest != j]
        sign = -1.0 if (j - 1) % 2 else 1.0
        total += sign * B[0, j] * _pf_recursive(B[np.ix_(keep, keep)])
    return total


def _pf_parlett_reid(B):
    # skew Gaussian elimination with pivoting; O(n^3)
    A = np.array(B, dtype=float)
    n = A.shape[0]
    if n % 2:
        return 0.0
    pf = 1.0
    for k in range(0, n - 1, 2):
        kp = k + 1 + int(np.argmax(np.abs(A[k + 1:, k])))
        if kp != k + 1:
            A[[k + 1, kp]] = A[[kp, k + 1]]
            A[:, [k + 1, kp]] = A[:, [kp, k + 1]]
            pf = -pf
        if A[k + 1, k] == 0.0:
            return 0.0
        pf *= A[k, k + 1]
        if k + 2 < n:
            tau = A[k, k + 2:] / A[k, k + 1]
            A[k + 2:, k + 2:] += np.outer(tau, A[k + 2:, k + 1]) - np.outer(A[k + 2:, k + 1], tau)
    return pf


def pfaffian(B) -> float:
    """Pfaffian of a real skew-symmetric matrix.

    Recursive row expansion up to 6x6, skew elimination above that.  The
    result is checked against ``det(B)``.
    """
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise ValueError("pfaffian needs a square matrix")
    scale = max(1.0, float(np.abs(B).max())) if B.size else 1.0
    if B.size and np.abs(B + B.T).max() > 1e-12 * scale:
        raise ValueError("pfaffian input is not skew-symmetric")
    n = B.shape[0]
    pf = _pf_recursive(B) if n <= 6 else _pf_parlett_reid(B)
    if n and n % 2 == 0:
        det = np.linalg.det(B)
        if abs(pf * pf - det) > 1e-8 * max(abs(det), scale**n * 1e-6):
            raise ArithmeticError(f"Pfaffian check failed: pf^2={pf * pf:.6g}, det={det:.6g}")
    return float(pf)


def null_space(M, tol=RANK_TOL) -> np.ndarray:
    """Orthonormal columns spanning ``ker M``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return np.eye(M.shape[1])
    u, s, vt = np.linalg.svd(M)
    r = int(np.sum(s > tol * s[0])) if s.size and s[0] > 0 else 0
    return vt[r:].T


def radical(B, tol=RANK_TOL) -> np.ndarray:
    return null_space(B, tol)


def rref(rows, tol=1e-9) -> np.ndarray:
    """Reduced row echelon basis; keeps coordinate-aligned spans coordinate-aligned."""
    A = np.array(rows, dtype=float)
    if A.size == 0:
        return A.reshape(0, A.shape[-1] if A.ndim == 2 else 0)
    r = 0
    nrows, ncols = A.shape
    for col in range(ncols):
        if r == nrows:
            break
        piv = r + int(np.argmax(np.abs(A[r:, col])))
        if abs(A[piv, col]) < tol:
            continue
        A[[r, piv]] = A[[piv, r]]
        A[r] /= A[r, col]
        for i in range(nrows):
            if i != r:
                A[i] -= A[i, col] * A[r]
        r += 1
    A = A[:r]
    A[np.abs(A) < 1e-14] = 0.0
    return A


@dataclass(frozen=True)
class Polarization:
    basis: np.ndarray  # rows span h (m x n)
    complement: np.ndarray  # rows W_1..W_{n-m}, coexponential, in flag order
    l: np.ndarray

    @property
    def m(self) -> int:
        return self.basis.shape[0]

    @property
    def x_dim(self) -> int:
        return self.complement.shape[0]


def polarization_residuals(sc, pol: Polarization):
    """``(subalgebra residual, subordinate residual, dimension defect)``."""
    h = pol.basis
    m = h.shape[0]
    if m == 0:
        return 0.0, 0.0, 0
    br = bracket(sc, h[:, None, :], h[None, :, :]).reshape(-1, sc.dim)
    coef, *_ = np.linalg.lstsq(h.T, br.T, rcond=None)
    sub = float(np.abs(h.T @ coef - br.T).max())
    subord = float(np.abs(pairing(pol.l, br)).max())
    expected = sc.dim - form_rank(skew_form(sc, pol.l)) // 2
    return sub, subord, m - expected


def vergne_polarization(sc: StructureConstants, l, flag, check_flag=True) -> Polarization:
    """``h = sum_j rad(B_l | g_j)`` along a full flag of ideals ``g_1 < ... < g_n``."""
    l = np.asarray(l, dtype=float)
    flag = np.asarray(flag, dtype=float)
    if check_flag:
        check_ideal_flag(sc, flag)
    n = sc.dim
    B = skew_form(sc, l)
    pieces = []
    for j in range(1, n + 1):
        F = flag[:j]
        rad = null_space(F @ B @ F.T)
        if rad.size:
            pieces.append((F.T @ rad).T)
    h = rref(np.vstack(pieces)) if pieces else np.zeros((0, n))
    # coexponential complement: flag vectors where h + g_j grows
    comp = []
    span = h.copy()
    for j in range(n):
        cand = np.vstack([span, flag[j]])
        if np.linalg.matrix_rank(cand, tol=1e-9) > span.shape[0]:
            comp.append(flag[j])
            span = cand
    pol = Polarization(basis=h, complement=np.array(comp).reshape(-1, n), l=l)
    sub, subord, dim_defect = polarization_residuals(sc, pol)
    if sub > 1e-10 or subord > 1e-10 * max(1.0, np.abs(l).max()) or dim_defect:
        raise AlgebraError(
            "flag is not an ideal flag: polarization invariants fail "
            f"(subalgebra {sub:.2g}, subordinate {subord:.2g}, dimension defect {dim_defect})"
        )
    return pol


def coordinate_complement(sub_basis, n) -> np.ndarray:
    """Standard basis vectors completing ``sub_basis``, greedily in index order."""
    span = np.asarray(sub_basis, dtype=float).reshape(-1, n)
    out = []
    for i in range(n):
        e = np.eye(n)[i]
        cand = np.vstack([span, e])
        if np.linalg.matrix_rank(cand, tol=1e-9) > span.shape[0]:
            out.append(e)
            span = cand
    return np.array(out).reshape(-1, n)


@dataclass(frozen=True)
class DualChart:
    """``lambda in R^k -> l(lambda) = lambda @ embed``."""

    embed: np.ndarray  # k x n
    density_formula: Optional[Callable] = field(default=None, compare=False)
    density_mode: str = "pfaffian"

    @property
    def k(self) -> int:
        return self.embed.shape[0]

    def functional(self, lam) -> np.ndarray:
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        return lam @ self.embed

    def to_dict(self):
        return {"k": self.k, "embedMatrix": self.embed.tolist(), "densityMode": self.density_mode}

    @classmethod
    def from_dict(cls, data, n):
        embed = np.asarray(data["embedMatrix"], dtype=float).reshape(int(data["k"]), n)
        mode = data.get("densityMode", "pfaffian")
        if mode != "pfaffian":
            raise ValueError(f"unsupported densityMode {mode!r}")
        return cls(embed=embed, density_mode=mode)


def plancherel_density(sc: StructureConstants, chart: DualChart, lam, warn=True) -> float:
    """``|Pf(B_l)|`` on the coordinate complement of ``rad(B_l)``; 0 at non-generic points."""
    l = chart.functional(lam)
    B = skew_form(sc, l)
    n = sc.dim
    rad = radical(B)
    if rad.shape[1] != chart.k:
        if warn:
            warnings.warn(
                f"non-generic point lambda={np.round(np.atleast_1d(lam), 6).tolist()}: "
                f"radical dimension {rad.shape[1]} != {chart.k}",
                NonGenericWarning,
                stacklevel=2,
            )
        return 0.0
    comp = coordinate_complement(rad.T, n)
    return abs(pfaffian(comp @ B @ comp.T))


def max_orbit_dimension(sc, samples=64, seed=0) -> int:
    rng = np.random.default_rng(seed)
    return max(orbit_dimension(sc, l) for l in rng.normal(size=(samples, sc.dim)))
