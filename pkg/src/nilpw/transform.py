"""Group Fourier transform as an integral operator on L^2(X).

Two independent routes:

* direct: ``phi^(pi) = sum_g w_g phi(g) pi(g)`` with ``pi(g)`` from :mod:`nilpw.induce`;
* kernel: ``K(l, x1, x) = int_H phi(s(x1)^-1 h s(x)) exp(i<l, log h>) dh`` by a
  chirp-z transform along H, then ``M = K * w_x``.
"""
from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.signal import czt

from .catalog import GroupBundle
from .functions import SampledGroupFunction, SupportError
from .grids import GridSpec, interpolation_stencil
from .induce import FactorizationError, InducedRep, factorize, section
from .lie import group_inv, group_mul
from .orbits import NonGenericWarning

log = logging.getLogger(__name__)


class AliasingError(ValueError):
    pass


@dataclass
class OperatorMatrix:
    lam: np.ndarray
    entries: np.ndarray
    x_grid: GridSpec

    def hs_norm(self) -> float:
        return hs_norm(self.entries, self.x_grid)


@dataclass
class KernelTensor:
    lam_grid: GridSpec
    x_grid: GridSpec
    values: np.ndarray  # lam_grid.shape + (N_X, N_X)
    coverage: dict = field(default_factory=dict)

    def at(self, index):
        return self.values[tuple(np.atleast_1d(index))]

    def hs_norms(self) -> np.ndarray:
        w = self.x_grid.interp_weights
        return np.sqrt(np.einsum("...ij,i,j->...", np.abs(self.values) ** 2, w, w))


def hs_norm(M, x_grid: GridSpec) -> float:
    """Hilbert-Schmidt norm on the weighted L^2 of the X grid."""
    w = x_grid.interp_weights
    return float(np.sqrt(np.einsum("ij,i,j->", np.abs(M) ** 2, w, 1.0 / w)))


def _generic_points(bundle, lam_pts):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonGenericWarning)
        return np.array([bundle.density(l) > 0 for l in lam_pts])


def _lam_points(lams):
    lams = np.asarray(lams, dtype=float)
    return lams.reshape(-1, 1) if lams.ndim <= 1 else lams


def _rep_groups(bundle: GroupBundle, lams):
    """Group chart points that share a polarization (same H, same section)."""
    groups = []
    for i, lam in enumerate(lams):
        rep = bundle.rep(lam)
        for key, members in groups:
            if (key.pol.basis.shape == rep.pol.basis.shape
                    and np.allclose(key.pol.basis, rep.pol.basis)
                    and np.allclose(key.pol.complement, rep.pol.complement)):
                members.append((i, rep))
                break
        else:
            groups.append((rep, [(i, rep)]))
    return groups


# --- direct route -----------------------------------------------------------

def displacement_axis(rep: InducedRep, g_grid: GridSpec, tol=1e-10):
    """``(p, c)`` when the X-part of ``s(x1) g`` is ``x1 + c * g[p]``, else None.

    Holds whenever H has codimension one (then H is an ideal containing the
    derived algebra) and the dual coordinate of the complement is axis-aligned.
    """
    if rep.x_dim != 1:
        return None
    c = rep.frame_inv[:, rep.m]
    nz = np.flatnonzero(np.abs(c) > tol)
    if nz.size != 1:
        return None
    return int(nz[0]), float(c[nz[0]])


def smoothed_stencil(x_grid: GridSpec, d, half_width):
    """``int hat(s / a) L_j(d + s) ds`` for every X node ``j``, with ``a = half_width``.

    Piecewise-linear (hat) product integration against the zero-extended cubic
    cardinal functions, exact: the integrand is a quartic between breakpoints.
    Returns ``(idx, wts)`` of shape ``(len(d), W)``.
    """
    ax = x_grid.axes[0]
    d = np.asarray(d, float).ravel()
    a, hx = float(half_width), ax.spacing
    M = int(np.ceil(2 * a / hx)) + 1
    base = np.floor((d - a - ax.lo) / hx).astype(np.int64)
    nodes = ax.lo + (base[:, None] + 1 + np.arange(M + 1)) * hx
    nodes = np.minimum(nodes, (d + a)[:, None])
    bp = np.sort(np.concatenate([(d - a)[:, None], d[:, None], (d + a)[:, None], nodes], axis=1), axis=1)
    gx, gw = np.polynomial.legendre.leggauss(3)
    left, width = bp[:, :-1], np.diff(bp, axis=1)
    s = left[..., None] + width[..., None] * (gx + 1) / 2  # (D, I, 3) absolute positions
    q = (width[..., None] * gw / 2) * np.maximum(0.0, 1.0 - np.abs(s - d[:, None, None]) / a)
    idx, wts, _ = interpolation_stencil(x_grid, s.reshape(-1, 1))
    wts = wts.reshape(d.size, -1, 4) * q.reshape(d.size, -1, 1)
    idx = idx.reshape(d.size, -1, 4)
    W = M + 7
    first = base - 2
    local = np.clip(idx - first[:, None, None], 0, W - 1)
    out = np.zeros((d.size, W))
    rows = np.broadcast_to(np.arange(d.size)[:, None, None], local.shape)
    np.add.at(out, (rows.ravel(), local.ravel()), wts.ravel())
    cols = first[:, None] + np.arange(W)
    valid = (cols >= 0) & (cols < ax.points)
    return np.clip(cols, 0, ax.points - 1), np.where(valid, out, 0.0)


@dataclass
class _DirectGeometry:
    x_grid: GridSpec
    theta: np.ndarray  # log h coordinates, (active, N_X, n)
    amp: np.ndarray  # phi(g) times quadrature weight, (active,)
    idx: np.ndarray  # point rule: stencil columns (active, N_X, S)
    wts: np.ndarray
    slab: Optional[np.ndarray] = None  # product rule: G-axis index per active point
    table: Optional[tuple] = None  # product rule: (cols, wts) of shape (N_X, n_slabs, W)
    outside: int = 0


def _product_table(rep, g_grid, x_grid, disp):
    p, c = disp
    gax = g_grid.axes[p]
    d = x_grid.points[:, 0][:, None] + c * gax.nodes[None, :]
    cols, wts = smoothed_stencil(x_grid, d, abs(c) * gax.spacing)
    shape = d.shape + (-1,)
    return cols.reshape(shape), wts.reshape(shape) / abs(c)


def _direct_geometry(phi: SampledGroupFunction, rep: InducedRep, x_grid: GridSpec,
                     sel: np.ndarray, table=None, disp=None):
    grid = phi.grid
    g_points = grid.points[sel]
    amp = phi.values.ravel()[sel] * grid.weights[sel]
    x1 = x_grid.points
    s_x1 = section(rep, x1)  # (N_X, n)
    prod = group_mul(rep.sc, s_x1[None, :, :], g_points[:, None, :])
    h, xg = factorize(rep, prod)
    if disp is None:
        idx, wts, outside = interpolation_stencil(x_grid, xg)
        return _DirectGeometry(x_grid, h, amp, idx, wts, outside=int(outside.sum()))
    p, c = disp
    if not np.allclose(xg[..., 0], x1[None, :, 0] + c * g_points[:, None, p], atol=1e-9):
        raise FactorizationError("X coordinate of s(x1) g is not affine along the product-rule axis")
    # product integration along G axis p replaces its trapezoid weight
    gax = grid.axes[p]
    k = np.rint((g_points[:, p] - gax.lo) / gax.spacing).astype(np.int64)
    outside = (xg[..., 0] < x_grid.lo[0] - 1e-9) | (xg[..., 0] > x_grid.hi[0] + 1e-9)
    return _DirectGeometry(x_grid, h, amp / gax.trapezoid()[k], None, None, k, table,
                           int(outside.sum()))


def _accumulate(geom: _DirectGeometry, l) -> np.ndarray:
    N = geom.x_grid.size
    phase = np.exp(1j * (geom.theta @ l))  # (active, N_X)
    if geom.slab is not None:
        cols, wts = geom.table
        ns = cols.shape[1]
        key = (np.arange(N)[None, :] * ns + geom.slab[:, None]).ravel()
        c = (geom.amp[:, None] * phase).ravel()
        B = (np.bincount(key, weights=c.real, minlength=N * ns)
             + 1j * np.bincount(key, weights=c.imag, minlength=N * ns)).reshape(N, ns)
        coef = B[..., None] * wts
        flat = (np.arange(N)[:, None, None] * N + cols).ravel()
    else:
        coef = geom.amp[:, None, None] * phase[..., None] * geom.wts
        flat = (np.arange(N)[None, :, None] * N + geom.idx).ravel()
    c = coef.ravel()
    re = np.bincount(flat, weights=c.real, minlength=N * N)
    im = np.bincount(flat, weights=c.imag, minlength=N * N)
    return (re + 1j * im).reshape(N, N)


def _check_dims(phi, rep, x_grid):
    if phi.grid.ndim != rep.sc.dim or x_grid.ndim != rep.x_dim:
        raise ValueError(
            f"dimension mismatch: G grid {phi.grid.ndim}-d / group {rep.sc.dim}, "
            f"X grid {x_grid.ndim}-d / X dim {rep.x_dim}"
        )


def _direct_sum(phi, rep, reps, x_grid, chunk, product_rule):
    """Accumulate direct-route matrices for ``reps`` (sharing ``rep``'s polarization)."""
    N = x_grid.size
    mats = [np.zeros((N, N), dtype=complex) for _ in reps]
    if phi.is_zero:
        return mats
    disp = displacement_axis(rep, phi.grid) if product_rule else None
    table = _product_table(rep, phi.grid, x_grid, disp) if disp is not None else None
    active = np.flatnonzero(phi.values.ravel())
    for start in range(0, active.size, chunk):
        geom = _direct_geometry(phi, rep, x_grid, active[start:start + chunk], table, disp)
        for m, r in zip(mats, reps):
            m += _accumulate(geom, r.l)
    return mats


def group_fourier_direct(phi: SampledGroupFunction, rep: InducedRep, x_grid: GridSpec,
                         chunk=4000, product_rule=True) -> np.ndarray:
    """Matrix of ``f -> int_G phi(g) [pi(g) f] dg`` on samples over ``x_grid``.

    Plain trapezoid quadrature over the G grid samples the kinks of the cubic
    cardinal functions and aliases unless the G spacing is well below the X
    spacing.  With ``product_rule`` (and a one-dimensional X whose coordinate
    moves along a single G axis) ``phi(g) A(g, x1)`` is taken piecewise linear
    along that axis and integrated exactly against the cardinal functions.
    """
    _check_dims(phi, rep, x_grid)
    return _direct_sum(phi, rep, [rep], x_grid, chunk, product_rule)[0]


def group_fourier_family(phi: SampledGroupFunction, bundle: GroupBundle, lams, x_grid: GridSpec,
                         chunk=4000, product_rule=True) -> list:
    """Direct-route operators for many chart points, sharing the geometry per polarization."""
    lams = _lam_points(lams)
    out = [None] * len(lams)
    for rep0, members in _rep_groups(bundle, lams):
        _check_dims(phi, rep0, x_grid)
        mats = _direct_sum(phi, rep0, [r for _, r in members], x_grid, chunk, product_rule)
        for (i, _), m in zip(members, mats):
            out[i] = OperatorMatrix(lams[i], m, x_grid)
    return out


# --- kernel route -------------------------------------------------------------

def _box_samples(lo, hi, per_axis=9):
    axes = [np.linspace(a, b, per_axis) for a, b in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def h_spacing(rep: InducedRep, g_grid: GridSpec) -> np.ndarray:
    """H-grid spacing: the G-grid spacing along each h basis vector's leading axis."""
    sp = []
    for b in rep.pol.basis:
        p = int(np.argmax(np.abs(b) > 1e-12))
        sp.append(g_grid.spacings[p] / abs(b[p]))
    return np.array(sp)


def _slice_bounds(phi, rep, x_grid, samples_per_axis=9):
    """Per-x1 bounds on H coordinates and on the reachable x, from the support box."""
    gs = _box_samples(phi.support_lo, phi.support_hi, samples_per_axis)
    s_x1 = section(rep, x_grid.points)
    h, xg = factorize(rep, group_mul(rep.sc, s_x1[:, None, :], gs[None, :, :]))
    eta = rep.h_coords(h)
    return eta.min(axis=1), eta.max(axis=1), xg.min(axis=1), xg.max(axis=1)


def _axis_plan(rep: InducedRep, chart):
    """Per H axis: None (zero frequency) or (lambda axis, frequency per unit lambda)."""
    E = rep.pol.basis @ chart.embed.T  # (m, k): <embed_a, b_i>
    plan, used = [], set()
    for i in range(E.shape[0]):
        nz = np.flatnonzero(np.abs(E[i]) > 1e-12)
        if nz.size == 0:
            plan.append(None)
        elif nz.size == 1 and nz[0] not in used:
            used.add(int(nz[0]))
            plan.append((int(nz[0]), float(E[i, nz[0]])))
        else:
            return None, E
    return plan, E


def _czt_axis(vals, axis, eta0, d, omegas):
    """``sum_n v[n] exp(i w (eta0 + n d)) d`` for uniformly spaced ``omegas``."""
    w0 = omegas[0]
    dw = omegas[1] - omegas[0] if omegas.size > 1 else 0.0
    A = np.exp(-1j * w0 * d)
    W = np.exp(1j * dw * d)
    out = czt(vals, m=omegas.size, w=W, a=A, axis=axis)
    shape = [1] * out.ndim
    shape[axis] = omegas.size
    corr = d * np.exp(1j * omegas * eta0).reshape(shape)
    if np.ndim(eta0):
        raise ValueError("eta0 must be scalar per call")
    return out * corr


@dataclass(frozen=True)
class LamLattice:
    """Tensor lattice of chart points from per-axis uniformly spaced nodes."""

    nodes: tuple

    @classmethod
    def from_grid(cls, grid: GridSpec) -> "LamLattice":
        return cls(tuple(a.nodes for a in grid.axes))

    def slab(self, i: int) -> "LamLattice":
        """The sub-lattice with the first axis fixed at node ``i``."""
        return LamLattice((self.nodes[0][i:i + 1],) + tuple(self.nodes[1:]))

    @property
    def shape(self):
        return tuple(len(n) for n in self.nodes)

    @property
    def ndim(self) -> int:
        return len(self.nodes)

    @property
    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.nodes, indexing="ij")
        return np.stack([q.ravel() for q in mesh], axis=-1)


def kernel_rep(bundle: GroupBundle, lam_grid: GridSpec) -> InducedRep:
    """The (single) polarization used for all generic points of ``lam_grid``."""
    lam_pts = lam_grid.points
    generic = _generic_points(bundle, lam_pts)
    if not generic.any():
        raise ValueError("lambda grid has no generic chart point")
    groups = _rep_groups(bundle, lam_pts[generic])
    if len(groups) != 1:
        raise ValueError("kernel_tensor needs a lambda grid on which the polarization is constant")
    return groups[0][0]


def kernel_tensor(phi: SampledGroupFunction, bundle: GroupBundle, lam_grid: GridSpec,
                  x_grid: GridSpec, max_batch=2_000_000) -> KernelTensor:
    """``K(lambda, x1, x)`` on ``lam_grid x x_grid x x_grid``."""
    rep = kernel_rep(bundle, lam_grid)
    values, coverage = kernel_block(phi, bundle, rep, LamLattice.from_grid(lam_grid), x_grid, max_batch)
    return KernelTensor(lam_grid, x_grid, values, coverage)


def kernel_block(phi: SampledGroupFunction, bundle: GroupBundle, rep: InducedRep,
                 lat: LamLattice, x_grid: GridSpec, max_batch=2_000_000, rows=None, window_scale=1.0):
    """Kernel values on an arbitrary chart lattice; returns ``(values, coverage)``.

    ``rows`` restricts the computation to those ``x1`` indices; the result then
    has ``len(rows)`` rows in that order.  ``window_scale`` widens the H
    window about its centre (results must not depend on it).
    """
    N = x_grid.size
    rows = np.arange(N) if rows is None else np.asarray(rows, int)
    K = np.zeros(lat.shape + (rows.size, N), dtype=complex)
    lam_pts = lat.points
    coverage = {"pairs": rows.size * N, "active_pairs": 0, "samples": 0, "outside_samples": 0,
                "band_limited": 0}
    if phi.is_zero:
        return K, coverage
    d = h_spacing(rep, phi.grid)
    m = rep.m
    plan, E = _axis_plan(rep, bundle.chart)
    omegas_all = lam_pts @ E.T  # (P, m)
    if np.any(np.abs(omegas_all) * d >= np.pi):
        raise AliasingError(
            f"lambda grid exceeds the H-grid Nyquist limit (max |w| d = "
            f"{np.max(np.abs(omegas_all) * d):.3g} >= pi); refine the G grid"
        )
    eta_lo, eta_hi, x_lo, x_hi = _slice_bounds(phi, rep, x_grid)
    xs = x_grid.points
    xmargin = x_grid.spacings if x_grid.ndim else np.zeros(0)
    for out_r, r in enumerate(rows):
        if x_grid.ndim:
            ok = np.all((xs >= x_lo[r] - 2 * xmargin) & (xs <= x_hi[r] + 2 * xmargin), axis=1)
            cols = np.flatnonzero(ok)
        else:
            cols = np.array([0])
        if cols.size == 0:
            continue
        coverage["active_pairs"] += cols.size
        # H window on the lattice d * Z, padded by two cells
        mid, half = (eta_lo[r] + eta_hi[r]) / 2, window_scale * (eta_hi[r] - eta_lo[r]) / 2
        lo_i = np.floor((mid - half) / d).astype(int) - 2
        hi_i = np.ceil((mid + half) / d).astype(int) + 2
        eta_axes = [d[i] * np.arange(lo_i[i], hi_i[i] + 1) for i in range(m)]
        hshape = tuple(len(a) for a in eta_axes)
        if m:
            mesh = np.meshgrid(*eta_axes, indexing="ij")
            eta = np.stack([q.ravel() for q in mesh], axis=-1)
        else:
            eta = np.zeros((1, 0))
        hel = rep.h_element(eta)  # (H, n)
        left = group_inv(rep.sc, section(rep, xs[r]))
        lh = group_mul(rep.sc, left, hel)  # s(x1)^-1 h
        step = max(1, max_batch // max(1, eta.shape[0]))
        for c0 in range(0, cols.size, step):
            cc = cols[c0:c0 + step]
            right = section(rep, xs[cc])  # (c, n)
            g = group_mul(rep.sc, lh[None, :, :], right[:, None, :])
            inside = np.all((g > phi.grid.lo) & (g < phi.grid.hi), axis=-1)
            vals = np.zeros(g.shape[:-1], dtype=complex)
            vals[inside] = phi(g[inside])
            coverage["samples"] += inside.size
            coverage["outside_samples"] += int((~inside).sum())
            vals = vals.reshape((cc.size,) + hshape)
            block = _h_fourier(vals, eta_axes, d, plan, E, lat, omegas_all)
            ok = _band_ok(rep, left, right, eta, E, lam_pts, phi.grid.spacings)
            coverage["band_limited"] += int((~ok).sum())
            K[..., out_r, cc] = np.where(ok.reshape(lat.shape + (cc.size,)), block, 0.0)
    K *= rep.volume
    return K, coverage


def _band_ok(rep, left, right, eta, E, lam_pts, g_spacing, step=1e-3):
    """Which (lambda, column) entries the G-grid samples of phi can resolve.

    Along the slice ``eta -> s(x1)^-1 h(eta) s(x)`` (Jacobian ``J``) the H
    integral at frequency ``w = E lambda`` draws on phi's content at
    ``xi = -pinv(J^T) w``.  If some ``|xi_i| h_i >= pi`` that content lies past
    the G-grid Nyquist limit: the trapezoid sum over H would return an alias,
    while a grid-band-limited phi has no content there, so the entry is 0.
    Returns a bool array ``(P, batch)``.
    """
    m = rep.m
    if m == 0:
        return np.ones((lam_pts.shape[0], right.shape[0]), bool)
    eta_c = 0.5 * (eta.min(axis=0) + eta.max(axis=0))
    cols = []
    for i in range(m):
        e = np.zeros(m)
        e[i] = step
        gp = group_mul(rep.sc, group_mul(rep.sc, left, rep.h_element(eta_c + e))[None, :], right)
        gm = group_mul(rep.sc, group_mul(rep.sc, left, rep.h_element(eta_c - e))[None, :], right)
        cols.append((gp - gm) / (2 * step))
    J = np.stack(cols, axis=-1)  # (batch, n, m)
    P = np.linalg.pinv(np.swapaxes(J, 1, 2))  # (batch, n, m)
    xi = -np.einsum("bnm,mk,pk->pbn", P, E, lam_pts)
    return np.all(np.abs(xi) * g_spacing < np.pi, axis=-1)


def _h_fourier(vals, eta_axes, d, plan, E, lat, omegas_all):
    """Fourier integral over the trailing H axes; returns ``lat.shape + (batch,)``."""
    m = len(eta_axes)
    batch = vals.shape[0]
    if plan is None:
        mesh = np.meshgrid(*eta_axes, indexing="ij")
        eta = np.stack([q.ravel() for q in mesh], axis=-1)
        phase = np.exp(1j * omegas_all @ eta.T) * np.prod(d)  # (P, H)
        out = phase @ vals.reshape(batch, -1).T
        return out.reshape(lat.shape + (batch,))
    # separable: each H axis -> zero frequency sum or chirp-z along one lambda axis
    lam_axes_of = []
    cur = vals
    axis = 1
    for i in range(m):
        if plan[i] is None:
            cur = cur.sum(axis=axis) * d[i]
            continue
        a, e = plan[i]
        omegas = e * lat.nodes[a]
        cur = _czt_axis(cur, axis, eta_axes[i][0], d[i], omegas)
        lam_axes_of.append(a)
        axis += 1
    # cur: (batch, lam axes in lam_axes_of order)
    k = lat.ndim
    order = [1 + lam_axes_of.index(a) for a in range(k) if a in lam_axes_of]
    cur = np.transpose(cur, [*order, 0])
    shape = [lat.shape[a] if a in lam_axes_of else 1 for a in range(k)] + [batch]
    cur = cur.reshape(shape)
    return np.broadcast_to(cur, lat.shape + (batch,))


def operator_from_kernel(K: KernelTensor, lam_index) -> OperatorMatrix:
    """``M[x1, x] = K(lambda, x1, x) w_x`` at a lambda-grid node (given by multi-index)."""
    idx = tuple(np.atleast_1d(lam_index))
    if len(idx) != K.lam_grid.ndim or any(
        not (0 <= i < s) for i, s in zip(idx, K.lam_grid.shape)
    ):
        raise IndexError(f"lambda index {idx} is not a node of the kernel's lambda grid")
    lam = K.lam_grid.points[np.ravel_multi_index(idx, K.lam_grid.shape)]
    return OperatorMatrix(lam, K.values[idx] * K.x_grid.interp_weights[None, :], K.x_grid)


def lambda_index(lam_grid: GridSpec, lam, tol=1e-9):
    """Multi-index of a chart point on the grid; raises if off-grid."""
    lam = np.atleast_1d(np.asarray(lam, float))
    idx = []
    for a, ax in zip(lam, lam_grid.axes):
        t = (a - ax.lo) / ax.spacing
        i = int(round(t))
        if abs(t - i) > tol or not 0 <= i < ax.points:
            raise ValueError(f"lambda={lam.tolist()} is not on the lambda grid (no interpolation)")
        idx.append(i)
    return tuple(idx)


def route_error(direct: np.ndarray, from_kernel: np.ndarray, x_grid: GridSpec) -> float:
    return hs_norm(direct - from_kernel, x_grid) / hs_norm(direct, x_grid)


# --- Plancherel -------------------------------------------------------------

@dataclass
class PlancherelResult:
    ratio: float
    total: float
    l2_norm_sq: float
    lams: np.ndarray
    hs_sq: np.ndarray
    density: np.ndarray
    masked: np.ndarray
    tail_fraction: float
    warning: Optional[str] = None

    @property
    def degenerate(self) -> bool:
        return self.total == 0.0


def plancherel_check(phi: SampledGroupFunction, bundle: GroupBundle, lam_grid: GridSpec,
                     x_grid: GridSpec, mask_radius=1e-9) -> PlancherelResult:
    """Ratio ``||phi||^2 / int ||phi^(pi_lam)||_HS^2 R(lam) dlam`` by trapezoid in lambda.

    Chart points within ``mask_radius`` of the non-generic set are not computed;
    there the (continuous) integrand ``R ||.||^2`` is filled by polynomial
    interpolation from the nearest computed nodes along the first axis.
    """
    dens, masked = plancherel_mask(bundle, lam_grid, mask_radius)
    hs_sq = np.full(lam_grid.size, np.nan)
    if (~masked).any():
        K = kernel_tensor(phi, bundle, lam_grid, x_grid)
        hs_sq = (K.hs_norms() ** 2).ravel()
    return plancherel_integral(hs_sq, dens, masked, lam_grid, phi.l2_norm_sq())


def plancherel_mask(bundle: GroupBundle, lam_grid: GridSpec, mask_radius=1e-9):
    """Density per chart point and the mask of points that are not computed."""
    lam_pts = lam_grid.points
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonGenericWarning)
        dens = np.array([bundle.density(l) for l in lam_pts])
    masked = (dens == 0) | (np.linalg.norm(lam_pts, axis=1) < mask_radius)
    return dens, masked


def plancherel_integral(hs_sq, dens, masked, lam_grid: GridSpec, norm_sq: float) -> PlancherelResult:
    """Trapezoid reduction (fixed index order) of ``R ||.||_HS^2`` over the chart grid."""
    hs_sq = np.array(hs_sq, dtype=float)
    hs_sq[masked] = np.nan
    integrand = hs_sq * dens
    integrand = _fill_masked(integrand.reshape(lam_grid.shape), masked.reshape(lam_grid.shape), lam_grid)
    w = lam_grid.weights.reshape(lam_grid.shape)
    total = float(np.sum(integrand * w))
    ratio = norm_sq / total if total > 0 else float("nan")
    tail = _tail_estimate(integrand, lam_grid) / total if total > 0 else 0.0
    warn = None
    if total == 0:
        warn = "degenerate: zero transform, ratio undefined"
    elif tail >= 0.01:
        warn = f"tail mass {tail:.3%} >= 1%: widen the lambda grid"
    return PlancherelResult(ratio, total, norm_sq, lam_grid.points, hs_sq, dens, masked, tail, warn)


def _tail_estimate(integrand, lam_grid):
    """Mass beyond the grid: geometric continuation of the decay at each end face.

    With ``r`` the ratio of the last two face sums along an axis, the mass past
    that face is ``S_last * h * r / (1 - r)``; a non-decaying face gives inf.
    """
    w = lam_grid.weights.reshape(lam_grid.shape)
    tail = 0.0
    for ax, axis in enumerate(lam_grid.axes):
        a = np.moveaxis(integrand, ax, 0)
        wf = np.moveaxis(w, ax, 0)
        for last, prev in ((0, 1), (-1, -2)):
            s_last = float(np.sum(np.abs(a[last]) * wf[last] / wf[last].max()))
            s_prev = float(np.sum(np.abs(a[prev]) * wf[prev] / wf[prev].max()))
            if s_last == 0.0:
                continue
            r = s_last / s_prev if s_prev > 0 else np.inf
            tail += s_last * axis.spacing * r / (1 - r) if r < 1 else np.inf
    return tail


def _fill_masked(integrand, masked, lam_grid):
    out = integrand.copy()
    if not masked.any():
        return out
    nodes = lam_grid.axes[0].nodes
    flat_out = out.reshape(nodes.size, -1)
    flat_mask = masked.reshape(nodes.size, -1)
    for c in range(flat_out.shape[1]):
        good = ~flat_mask[:, c]
        for i in np.flatnonzero(flat_mask[:, c]):
            cand = np.flatnonzero(good)
            near = cand[np.argsort(np.abs(cand - i))[:4]]
            coef = np.polyfit(nodes[near], flat_out[near, c], deg=min(3, near.size - 1))
            flat_out[i, c] = np.polyval(coef, nodes[i])
    return flat_out.reshape(integrand.shape)


# --- Paley-Wiener scan and invertibility probe -------------------------------

@dataclass
class VanishingReport:
    lams: np.ndarray
    hs: np.ndarray  # HS norm per chart point (NaN where masked)
    eps: float
    vanishing: np.ndarray  # bool per chart point
    masked: np.ndarray
    adjacent_pairs: int
    measure: float  # R-weighted measure of the clustered vanishing set
    full_measure: float
    verdict: str


def _adjacent_pairs(mask: np.ndarray) -> int:
    pairs = 0
    for ax in range(mask.ndim):
        a = np.moveaxis(mask, ax, 0)
        pairs += int(np.sum(a[1:] & a[:-1]))
    return pairs


def _clustered(mask: np.ndarray) -> np.ndarray:
    """Points of ``mask`` with at least one grid neighbour also in ``mask``."""
    out = np.zeros_like(mask)
    for ax in range(mask.ndim):
        a = np.moveaxis(mask, ax, 0)
        o = np.moveaxis(out, ax, 0)
        both = a[1:] & a[:-1]
        o[1:] |= both
        o[:-1] |= both
    return out


def pw_scan(phi: SampledGroupFunction, K: KernelTensor, bundle: GroupBundle,
            eps_rel=1e-8, eps=None) -> VanishingReport:
    """Chart points where ``||K(lambda)||_HS < eps`` and the resulting verdict.

    ``eps`` defaults to ``eps_rel`` times the largest HS norm on the grid.  A
    value exactly at ``eps`` counts as non-vanishing.  Isolated vanishing
    points carry no measure (zeros of an analytic function are isolated at
    grid resolution); only clusters of adjacent vanishing points do.
    """
    lam_grid = K.lam_grid
    shape = lam_grid.shape
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonGenericWarning)
        dens = np.array([bundle.density(l) for l in lam_grid.points])
    masked = dens == 0
    hs = K.hs_norms().ravel().astype(float)
    hs[masked] = np.nan
    weights = dens * lam_grid.weights
    full = float(np.sum(weights[~masked]))
    hmax = float(np.nanmax(hs)) if (~masked).any() else 0.0
    if eps is None:
        eps = eps_rel * hmax
    if phi.is_zero or hmax == 0.0:
        vanishing = ~masked
        return VanishingReport(lam_grid.points, hs, float(eps), vanishing, masked,
                               _adjacent_pairs(vanishing.reshape(shape)), full, full, "zero function")
    vanishing = np.zeros(hs.shape, bool)
    vanishing[~masked] = hs[~masked] < eps
    grid_mask = vanishing.reshape(shape)
    pairs = _adjacent_pairs(grid_mask)
    measure = float(np.sum(weights[_clustered(grid_mask).ravel()]))
    h = ", ".join(f"{s:.3g}" for s in lam_grid.spacings)
    if pairs == 0:
        verdict = f"consistent with theorem at resolution h=({h})"
    else:
        verdict = f"inconsistent with theorem at resolution h=({h}): {pairs} adjacent vanishing pairs"
    return VanishingReport(lam_grid.points, hs, float(eps), vanishing, masked, pairs, measure, full, verdict)


@dataclass
class ProbeResult:
    lams: np.ndarray
    sigma_min: np.ndarray
    sigma_max: np.ndarray
    rank: np.ndarray
    tol: float

    @property
    def near_singular(self) -> np.ndarray:
        return self.sigma_min < self.tol * self.sigma_max


def operator_singular_values(M: np.ndarray, x_grid: GridSpec) -> np.ndarray:
    """Singular values of the operator (not the raw matrix) on weighted L^2(X)."""
    r = np.sqrt(x_grid.interp_weights)
    return np.linalg.svd(r[:, None] * M / r[None, :], compute_uv=False)


def invertibility_probe(ops, tol=1e-10) -> ProbeResult:
    """Per operator: extreme singular values and a numerical rank.

    Exploratory: a well-conditioned discretization is evidence, not proof.
    """
    lams, smin, smax, rank = [], [], [], []
    for op in ops:
        s = operator_singular_values(op.entries, op.x_grid)
        lams.append(np.atleast_1d(op.lam))
        smin.append(s[-1])
        smax.append(s[0])
        rank.append(int(np.sum(s > tol * s[0])) if s[0] > 0 else 0)
    return ProbeResult(np.array(lams), np.array(smin), np.array(smax), np.array(rank), tol)


# --- convolution --------------------------------------------------------------

def product_support(sc, lo1, hi1, lo2, hi2, per_axis=7):
    """Bounding box of ``{a b : a in box1, b in box2}`` from box samples (padded 2%)."""
    a = _box_samples(lo1, hi1, per_axis)
    b = _box_samples(lo2, hi2, per_axis)
    ab = group_mul(sc, a[:, None, :], b[None, :, :]).reshape(-1, sc.dim)
    lo, hi = ab.min(axis=0), ab.max(axis=0)
    pad = 0.02 * (hi - lo) + 1e-12
    return lo - pad, hi + pad


def convolve(phi1: SampledGroupFunction, phi2: SampledGroupFunction, sc, chunk=2000000):
    """``(phi1 * phi2)(g) = int phi1(g') phi2(g'^-1 g) dg'`` on ``phi1``'s grid.

    Quadrature over the nonzero samples of ``phi1``; ``phi2`` is evaluated off
    grid exactly (if it has a formula) or by cubic interpolation.
    """
    grid = phi1.grid
    if phi2.grid.ndim != grid.ndim or grid.ndim != sc.dim:
        raise ValueError("convolution factors must live on grids of the group's dimension")
    lo, hi = product_support(sc, phi1.support_lo, phi1.support_hi, phi2.support_lo, phi2.support_hi)
    if not grid.contains_box(lo, hi, strict=True):
        need = np.maximum(np.abs(lo), np.abs(hi))
        raise SupportError(
            f"convolution support [{np.round(lo, 3).tolist()}, {np.round(hi, 3).tolist()}] "
            f"exceeds the grid box; need half-widths >= {np.round(need, 3).tolist()}"
        )
    out = np.zeros(grid.size, dtype=complex)
    if phi1.is_zero or phi2.is_zero:
        return SampledGroupFunction(grid, out.reshape(grid.shape).real, lo, hi, None, "conv")
    pts = grid.points
    targets = np.flatnonzero(np.all((pts >= lo) & (pts <= hi), axis=1))
    v1 = phi1.values.ravel()
    src = np.flatnonzero(v1)
    amp = v1[src] * grid.weights[src]
    inv_src = group_inv(sc, pts[src])
    step = max(1, chunk // src.size)
    for c0 in range(0, targets.size, step):
        t = targets[c0:c0 + step]
        arg = group_mul(sc, inv_src[None, :, :], pts[t][:, None, :])
        inside = np.all((arg > phi2.grid.lo) & (arg < phi2.grid.hi), axis=-1)
        vals = np.zeros(arg.shape[:-1], dtype=complex)
        vals[inside] = phi2(arg[inside])
        out[t] = vals @ amp
    if phi1.is_real and phi2.is_real:
        out = out.real
    return SampledGroupFunction(grid, out.reshape(grid.shape), lo, hi, None,
                                f"{phi1.label}*{phi2.label}")


# --- kernel dump ----------------------------------------------------------------

def write_kernel(path, K: KernelTensor) -> tuple:
    """Flat little-endian float64 (interleaved re, im) plus a JSON sidecar."""
    path = Path(path)
    np.ascontiguousarray(K.values, dtype="<c16").tofile(path)
    meta = {
        "format": "little-endian float64, interleaved complex (re, im), C order",
        "shape": list(K.values.shape),
        "axes": ["lambda"] * K.lam_grid.ndim + ["x1", "x"],
        "lambdaGrid": K.lam_grid.to_list(),
        "xGrid": K.x_grid.to_list(),
        "coverage": K.coverage,
    }
    side = path.with_suffix(path.suffix + ".json")
    side.write_text(json.dumps(meta, indent=2))
    return path, side


def read_kernel(path) -> KernelTensor:
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    vals = np.fromfile(path, dtype="<c16").reshape(meta["shape"])
    return KernelTensor(GridSpec.from_list(meta["lambdaGrid"]), GridSpec.from_list(meta["xGrid"]),
                        vals, meta.get("coverage", {}))
