"""Compactly supported test functions sampled on group grids."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .grids import GridSpec, interpolate


class SupportError(ValueError):
    pass


def smooth_bump(r):
    """``exp(1 - 1/(1 - r^2))`` on ``|r| < 1``, 0 outside; equals 1 at 0."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = np.abs(r) < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - r[inside] ** 2))
    return out


@dataclass
class SampledGroupFunction:
    """``phi`` on a uniform grid over G (exponential coordinates).

    ``func`` (if present) evaluates ``phi`` exactly at arbitrary points; otherwise
    off-grid values come from cubic interpolation of ``values``.
    """

    grid: GridSpec
    values: np.ndarray
    support_lo: np.ndarray
    support_hi: np.ndarray
    func: Optional[Callable] = field(default=None, repr=False)
    label: str = "phi"

    def __post_init__(self):
        self.values = np.asarray(self.values).reshape(self.grid.shape)
        self.support_lo = np.asarray(self.support_lo, float)
        self.support_hi = np.asarray(self.support_hi, float)
        if not self.grid.contains_box(self.support_lo, self.support_hi, strict=True):
            raise SupportError("declared support must lie strictly inside the grid box")
        if not np.all(np.isfinite(self.values)):
            raise SupportError("function values must be finite")
        if self.grid.ndim:
            edge = 0.0
            for ax in range(self.grid.ndim):
                v = np.moveaxis(self.values, ax, 0)
                edge = max(edge, float(np.abs(v[0]).max()), float(np.abs(v[-1]).max()))
            if edge > 0.0:
                raise SupportError("function does not vanish on the grid boundary")

    @classmethod
    def from_callable(cls, func, grid, support_lo, support_hi, label="phi"):
        vals = func(grid.points).reshape(grid.shape)
        return cls(grid, vals, support_lo, support_hi, func, label)

    def __call__(self, g):
        g = np.asarray(g, dtype=float)
        if self.func is not None:
            return self.func(g)
        return interpolate(self.grid, self.values, g)

    @property
    def is_zero(self) -> bool:
        return not np.any(self.values)

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.values) or not np.any(self.values.imag)

    def l2_norm_sq(self) -> float:
        return float(np.sum(np.abs(self.values.ravel()) ** 2 * self.grid.weights))

    def on_grid(self, grid: GridSpec) -> "SampledGroupFunction":
        """Resample onto another grid (exactly if ``func`` is known)."""
        return SampledGroupFunction(
            grid, self(grid.points).reshape(grid.shape), self.support_lo, self.support_hi,
            self.func, self.label,
        )


# --- families --------------------------------------------------------------

def zero_function(grid: GridSpec, radius=1.0):
    n = grid.ndim
    return SampledGroupFunction.from_callable(
        lambda g: np.zeros(np.shape(g)[:-1]), grid, -radius * np.ones(n), radius * np.ones(n), "zero"
    )


def separable_bump(grid: GridSpec, radius=1.0, center=None):
    """Product of 1-d smooth bumps of the given radius."""
    n = grid.ndim
    radius = np.broadcast_to(np.asarray(radius, float), (n,))
    center = np.zeros(n) if center is None else np.asarray(center, float)

    def f(g):
        return np.prod(smooth_bump((np.asarray(g) - center) / radius), axis=-1)

    return SampledGroupFunction.from_callable(f, grid, center - radius, center + radius, "bump")


def cutoff_gaussian(grid: GridSpec, sigma=0.5, radius=1.8, center=None):
    """Gaussian of width ``sigma`` times a smooth cutoff ``bump(|g|_inf / radius)`` per axis."""
    n = grid.ndim
    center = np.zeros(n) if center is None else np.asarray(center, float)
    sigma = np.broadcast_to(np.asarray(sigma, float), (n,))

    def f(g):
        d = np.asarray(g) - center
        return np.exp(-0.5 * np.sum((d / sigma) ** 2, axis=-1)) * np.prod(
            _soft_cutoff(np.asarray(g) / radius), axis=-1
        )

    return SampledGroupFunction.from_callable(f, grid, -radius * np.ones(n), radius * np.ones(n), "gaussian")


def _soft_cutoff(r):
    # 1 on |r| <= 0.5, 0 on |r| >= 1, C-infinity in between
    r = np.abs(np.asarray(r, float))
    t = np.clip((r - 0.5) / 0.5, 0.0, 1.0)
    a = np.where(t < 1, np.exp(-1.0 / np.maximum(1 - t, 1e-300)), 0.0)
    b = np.where(t > 0, np.exp(-1.0 / np.maximum(t, 1e-300)), 0.0)
    return a / (a + b)


def counter_rng(seed: int, counter: int) -> np.random.Generator:
    """Counter-based generator: independent stream per ``(seed, counter)``."""
    return np.random.Generator(np.random.Philox(key=int(seed) & (2**64 - 1), counter=int(counter)))


def random_bump(grid: GridSpec, seed: int, index: int, terms=3, radius=1.8,
                sigma_range=(0.4, 0.6), center_spread=0.4):
    """Seeded superposition of cutoff Gaussians; depends only on ``(seed, index)``."""
    n = grid.ndim
    rng = counter_rng(seed, index)
    centers = rng.uniform(-center_spread, center_spread, size=(terms, n))
    sigmas = rng.uniform(*sigma_range, size=(terms, n))
    amps = rng.uniform(0.5, 1.5, size=terms) * rng.choice([-1.0, 1.0], size=terms)
    amps[0] = abs(amps[0])

    def f(g):
        g = np.asarray(g, float)
        total = np.zeros(g.shape[:-1])
        for c, s, a in zip(centers, sigmas, amps):
            total = total + a * np.exp(-0.5 * np.sum(((g - c) / s) ** 2, axis=-1))
        return total * np.prod(_soft_cutoff(g / radius), axis=-1)

    return SampledGroupFunction.from_callable(
        f, grid, -radius * np.ones(n), radius * np.ones(n), f"random[{seed}:{index}]"
    )


def make_function(spec: dict, grid: GridSpec, index: int = 0) -> SampledGroupFunction:
    """Build a test function from a config entry ``{"family": ..., ...}``."""
    family = spec.get("family", "random")
    if family == "zero":
        return zero_function(grid)
    if family == "bump":
        return separable_bump(grid, spec.get("radius", 1.0))
    if family == "gaussian":
        return cutoff_gaussian(grid, spec.get("sigma", 0.5), spec.get("radius", 1.8))
    if family == "random":
        return random_bump(grid, int(spec.get("seed", 0)), int(spec.get("index", 0)) + index,
                           radius=spec.get("radius", 1.8))
    if family == "csv":
        return read_function_csv(spec["path"], grid)
    raise ValueError(f"unknown function family {family!r}")


def write_function_csv(path, phi: SampledGroupFunction):
    """One row per grid node: coordinates then real and imaginary value."""
    pts = phi.grid.points
    vals = phi.values.ravel().astype(complex)
    cols = [f"g{i}" for i in range(pts.shape[1])] + ["re", "im"]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for p, v in zip(pts, vals):
            fh.write(",".join(f"{c:.17g}" for c in (*p, v.real, v.imag)) + "\n")


def read_function_csv(path, grid: GridSpec) -> SampledGroupFunction:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    n = grid.ndim
    if data.shape != (grid.size, n + 2):
        raise ValueError(f"{path}: expected {grid.size} rows of {n + 2} columns, got {data.shape}")
    if not np.allclose(data[:, :n], grid.points, atol=1e-9):
        raise ValueError(f"{path}: node coordinates do not match the configured G grid")
    vals = data[:, n] + 1j * data[:, n + 1]
    if not np.any(data[:, n + 1]):
        vals = vals.real
    nz = np.abs(vals) > 0
    if nz.any():
        lo = grid.points[nz].min(axis=0) - grid.spacings
        hi = grid.points[nz].max(axis=0) + grid.spacings
    else:
        lo, hi = grid.lo / 2, grid.hi / 2
    lo = np.maximum(lo, grid.lo + grid.spacings / 2)
    hi = np.minimum(hi, grid.hi - grid.spacings / 2)
    return SampledGroupFunction(grid, vals.reshape(grid.shape), lo, hi, None, f"csv:{path}")
