"""Uniform tensor grids, trapezoid weights, and 4-point cubic interpolation."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Axis:
    center: float
    half_width: float
    points: int

    def __post_init__(self):
        if self.points < 3 or self.points % 2 == 0:
            raise GridError(f"axis needs an odd point count >= 3, got {self.points}")
        if not self.half_width > 0:
            raise GridError(f"axis half-width must be positive, got {self.half_width}")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / (self.points - 1)

    @property
    def lo(self) -> float:
        return self.center - self.half_width

    @property
    def hi(self) -> float:
        return self.center + self.half_width

    @property
    def nodes(self) -> np.ndarray:
        return self.center + self.spacing * (np.arange(self.points) - (self.points - 1) // 2)

    def trapezoid(self) -> np.ndarray:
        w = np.full(self.points, self.spacing)
        w[0] = w[-1] = 0.5 * self.spacing
        return w

    def to_dict(self):
        return {"center": self.center, "halfWidth": self.half_width, "points": self.points}


@dataclass(frozen=True)
class GridSpec:
    """Tensor product of uniform axes.  A zero-axis grid is a single point of weight 1."""

    axes: tuple = ()

    @classmethod
    def cube(cls, dim, half_width, points, center=0.0):
        return cls(tuple(Axis(center, half_width, points) for _ in range(dim)))

    @classmethod
    def from_list(cls, items):
        return cls(tuple(Axis(float(d["center"]), float(d["halfWidth"]), int(d["points"])) for d in items))

    def to_list(self):
        return [a.to_dict() for a in self.axes]

    @property
    def ndim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple:
        return tuple(a.points for a in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape)) if self.axes else 1

    @property
    def spacings(self) -> np.ndarray:
        return np.array([a.spacing for a in self.axes])

    @property
    def lo(self) -> np.ndarray:
        return np.array([a.lo for a in self.axes])

    @property
    def hi(self) -> np.ndarray:
        return np.array([a.hi for a in self.axes])

    @cached_property
    def points(self) -> np.ndarray:
        """Flattened nodes, shape ``(size, ndim)`` in C order."""
        if not self.axes:
            return np.zeros((1, 0))
        mesh = np.meshgrid(*[a.nodes for a in self.axes], indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    @cached_property
    def weights(self) -> np.ndarray:
        if not self.axes:
            return np.ones(1)
        w = np.ones(1)
        for a in self.axes:
            w = np.multiply.outer(w, a.trapezoid()).ravel()
        return w

    @cached_property
    def interp_weights(self) -> np.ndarray:
        """Exact integrals of the zero-extended cubic cardinal functions.

        Interior nodes get the spacing; the two nodes nearest each end get
        ``h/2`` and ``25h/24``.  Integrating the interpolant of grid samples with
        these weights is exact, so they match the off-grid evaluation rule.
        """
        if not self.axes:
            return np.ones(1)
        w = np.ones(1)
        for a in self.axes:
            w = np.multiply.outer(w, _axis_interp_weights(a)).ravel()
        return w

    def refine(self) -> "GridSpec":
        """Halve the spacing on every axis."""
        return GridSpec(tuple(Axis(a.center, a.half_width, 2 * a.points - 1) for a in self.axes))

    def contains_box(self, lo, hi, strict=True) -> bool:
        lo, hi = np.asarray(lo), np.asarray(hi)
        if strict:
            return bool(np.all(lo > self.lo) and np.all(hi < self.hi))
        return bool(np.all(lo >= self.lo) and np.all(hi <= self.hi))


def _axis_interp_weights(ax: Axis) -> np.ndarray:
    gx, gw = np.polynomial.legendre.leggauss(3)
    cells = ax.nodes[:-1, None] + ax.spacing * (gx + 1) / 2
    idx, wts, _ = interpolation_stencil(GridSpec((ax,)), cells.reshape(-1, 1))
    wts = wts * np.tile(gw * ax.spacing / 2, ax.points - 1)[:, None]
    return np.bincount(idx.ravel(), weights=wts.ravel(), minlength=ax.points)


def cubic_weights(u):
    """Lagrange weights on nodes ``-1, 0, 1, 2`` for fractional offset ``u``."""
    u = np.asarray(u, dtype=float)
    w0 = -u * (u - 1.0) * (u - 2.0) / 6.0
    w1 = (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0
    w2 = -(u + 1.0) * u * (u - 2.0) / 2.0
    w3 = (u + 1.0) * u * (u - 1.0) / 6.0
    return np.stack([w0, w1, w2, w3], axis=-1)


def interpolation_stencil(grid: GridSpec, x):
    """Indices and weights of separable cubic interpolation at points ``x``.

    Returns ``(flat_index, weight, outside)`` where ``flat_index`` and ``weight``
    have shape ``(..., 4**d)``.  Stencil nodes outside the grid get weight 0
    (zero extension); ``outside`` marks query points outside the grid box.
    """
    x = np.asarray(x, dtype=float)
    lead = x.shape[:-1]
    d = grid.ndim
    if d == 0:
        return np.zeros(lead + (1,), dtype=np.int64), np.ones(lead + (1,)), np.zeros(lead, bool)
    idx = np.zeros(lead + (1,), dtype=np.int64)
    wts = np.ones(lead + (1,))
    outside = np.zeros(lead, dtype=bool)
    tol = 1e-9
    for k, ax in enumerate(grid.axes):
        t = (x[..., k] - ax.lo) / ax.spacing
        outside |= (t < -tol) | (t > ax.points - 1 + tol)
        base = np.floor(t).astype(np.int64)
        base = np.clip(base, -3, ax.points + 1)
        u = t - base
        w = cubic_weights(u)
        nodes = base[..., None] + np.arange(-1, 3)
        valid = (nodes >= 0) & (nodes < ax.points)
        w = np.where(valid, w, 0.0)
        nodes = np.clip(nodes, 0, ax.points - 1)
        # zero extension: stencils of points beyond the box contribute nothing
        w = np.where(outside[..., None], 0.0, w)
        idx = (idx[..., :, None] * ax.points + nodes[..., None, :]).reshape(lead + (-1,))
        wts = (wts[..., :, None] * w[..., None, :]).reshape(lead + (-1,))
    return idx, wts, outside


def interpolate(grid: GridSpec, values, x):
    """Evaluate grid samples ``values`` (flat or grid-shaped) at points ``x``."""
    values = np.asarray(values).reshape(-1)
    idx, wts, _ = interpolation_stencil(grid, x)
    return np.einsum("...s,...s->...", values[idx], wts)


def cubic_error_bound(h: float, fourth_derivative_max: float) -> float:
    """Worst-case error of 4-point Lagrange interpolation: ``max|w(u)|/4! * h^4 * M4``.

    ``max over 0<=u<=1 of |(u+1)u(u-1)(u-2)| = 9/16``.  Valid away from the
    first and last cell, where zero extension replaces the outer node.
    """
    return (9.0 / 16.0) / 24.0 * h**4 * fourth_derivative_max
