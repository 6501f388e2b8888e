"""Induced representations realized on L^2(X), X = H\\G.

``g = h s(x)`` with the Malcev section ``s(x) = exp(x_1 W_1) ... exp(x_r W_r)``.
Representations act by right translation, ``[pi(g) f](x) = A(g, x) f(x g)``,
so ``pi(g1) pi(g2) = pi(g1 g2)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .grids import GridSpec, interpolation_stencil
from .lie import AlgebraError, StructureConstants, group_mul
from .orbits import Polarization


class FactorizationError(ArithmeticError):
    pass


@dataclass(frozen=True)
class InducedRep:
    sc: StructureConstants
    pol: Polarization

    @property
    def l(self):
        return self.pol.l

    @property
    def m(self) -> int:
        return self.pol.m

    @property
    def x_dim(self) -> int:
        return self.pol.x_dim

    @cached_property
    def frame(self) -> np.ndarray:
        """Rows: h basis then complement; a basis of g."""
        return np.vstack([self.pol.basis, self.pol.complement])

    @cached_property
    def frame_inv(self) -> np.ndarray:
        return np.linalg.inv(self.frame)

    @cached_property
    def volume(self) -> float:
        """Lebesgue volume of the unit cell of ``(h, x)`` coordinates."""
        return abs(float(np.linalg.det(self.frame)))

    @cached_property
    def h_frequencies(self) -> np.ndarray:
        """``<l, b_i>`` for the h basis, so ``<l, log h> = eta . h_frequencies``."""
        return self.pol.basis @ self.l

    def h_element(self, eta) -> np.ndarray:
        """Group element of H with coordinates ``eta`` along the h basis."""
        return np.asarray(eta, dtype=float) @ self.pol.basis

    def h_coords(self, h) -> np.ndarray:
        return (np.asarray(h, dtype=float) @ self.frame_inv)[..., : self.m]

    def with_functional(self, l) -> "InducedRep":
        """Same subgroup, different character (valid while ``l`` stays subordinate)."""
        pol = Polarization(basis=self.pol.basis, complement=self.pol.complement, l=np.asarray(l, float))
        return InducedRep(self.sc, pol)


def in_subgroup(rep: InducedRep, h, tol=1e-8) -> np.ndarray:
    coords = np.asarray(h, dtype=float) @ rep.frame_inv
    scale = np.maximum(1.0, np.abs(coords).max(axis=-1))
    return np.abs(coords[..., rep.m:]).max(axis=-1, initial=0.0) <= tol * scale


def character(rep: InducedRep, h, check=True) -> np.ndarray:
    """``exp(i <l, log h>)``; ``log h`` is the coordinate vector itself."""
    h = np.asarray(h, dtype=float)
    if check and not np.all(in_subgroup(rep, h)):
        raise AlgebraError("element does not lie in the subgroup H")
    return np.exp(1j * np.einsum("...i,i->...", h, rep.l))


def section(rep: InducedRep, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != rep.x_dim:
        raise AlgebraError(f"X point has length {x.shape[-1]}, expected {rep.x_dim}")
    out = np.zeros(x.shape[:-1] + (rep.sc.dim,))
    for j in range(rep.x_dim):
        out = group_mul(rep.sc, out, x[..., j, None] * rep.pol.complement[j])
    return out


def factorize(rep: InducedRep, g, tol=1e-8):
    """Solve ``g = h s(x)``; returns ``(h, x)``.

    Each ``k_j = h + span(W_1..W_j)`` is a codimension-one subalgebra of
    ``k_{j+1}``, hence an ideal containing its derived algebra, so peeling
    ``exp(x_j W_j)`` off the right is linear in ``x_j``.
    """
    a = np.array(g, dtype=float)
    if a.shape[-1] != rep.sc.dim:
        raise AlgebraError(f"group element has length {a.shape[-1]}, expected {rep.sc.dim}")
    m, r = rep.m, rep.x_dim
    x = np.zeros(a.shape[:-1] + (r,))
    for j in reversed(range(r)):
        coords = a @ rep.frame_inv
        x[..., j] = coords[..., m + j]
        a = group_mul(rep.sc, a, -x[..., j, None] * rep.pol.complement[j])
    coords = a @ rep.frame_inv
    resid = np.abs(coords[..., m:]).max(initial=0.0)
    scale = max(1.0, float(np.abs(coords).max(initial=0.0)))
    if resid > tol * scale:
        raise FactorizationError(f"complement is not coexponential (residual {resid:.3g})")
    return a, x


def cocycle(rep: InducedRep, g, x):
    """``(A(g, x), x g)`` with ``h s(x g) = s(x) g`` and ``A = pi_0(h)``."""
    h, xg = factorize(rep, group_mul(rep.sc, section(rep, x), g))
    return character(rep, h, check=False), xg


def cocycle_h(rep: InducedRep, g, x):
    """Like :func:`cocycle` but returns the subgroup element ``h`` instead of its character."""
    return factorize(rep, group_mul(rep.sc, section(rep, x), g))


def act_matrix(rep: InducedRep, g, x_grid: GridSpec, return_outside=False):
    """Matrix of ``pi(g)`` on samples over ``x_grid`` (cubic interpolation, zero extension)."""
    x = x_grid.points
    A, xg = cocycle(rep, np.broadcast_to(np.asarray(g, float), x.shape[:-1] + (rep.sc.dim,)), x)
    idx, wts, outside = interpolation_stencil(x_grid, xg)
    N = x_grid.size
    M = np.zeros((N, N), dtype=complex)
    rows = np.repeat(np.arange(N), idx.shape[-1])
    np.add.at(M, (rows, idx.ravel()), (A[:, None] * wts).ravel())
    if return_outside:
        return M, int(outside.sum())
    return M


def act(rep: InducedRep, g, f, x_grid: GridSpec, return_outside=False):
    """``[pi(g) f](x) = A(g, x) f(x g)`` on samples ``f`` over ``x_grid``."""
    f = np.asarray(f).reshape(-1)
    x = x_grid.points
    A, xg = cocycle(rep, np.broadcast_to(np.asarray(g, float), x.shape[:-1] + (rep.sc.dim,)), x)
    idx, wts, outside = interpolation_stencil(x_grid, xg)
    out = A * np.einsum("ns,ns->n", f[idx], wts)
    if return_outside:
        return out, int(outside.sum())
    return out
