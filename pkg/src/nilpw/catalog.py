"""Curated group presets and closed-form representation oracles."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .grids import Axis, GridSpec
from .induce import InducedRep
from .lie import (
    AlgebraError,
    StructureConstants,
    algebra_from_dict,
    check_ideal_flag,
    jacobi_residual,
    lower_central_series,
)
from .orbits import DualChart, max_orbit_dimension, vergne_polarization

PRESETS = ("abelian1", "abelian2", "heisenberg", "engel")


class UnknownGroupError(KeyError):
    pass


@dataclass(frozen=True)
class GroupBundle:
    name: str
    sc: StructureConstants
    flag: np.ndarray
    chart: Optional[DualChart]
    grids: dict = field(default_factory=dict, compare=False)
    oracle: Optional[Callable] = field(default=None, compare=False)
    basis_names: tuple = ()

    @property
    def n(self) -> int:
        return self.sc.dim

    def functional(self, lam):
        if self.chart is None:
            raise AlgebraError(f"no chart available for group {self.name!r}")
        return self.chart.functional(lam)

    def rep(self, lam) -> InducedRep:
        """Induced representation at chart point ``lam`` (Vergne polarization along the flag)."""
        l = self.functional(lam)
        return InducedRep(self.sc, vergne_polarization(self.sc, l, self.flag, check_flag=False))

    def density(self, lam) -> float:
        from .orbits import plancherel_density

        return plancherel_density(self.sc, self.chart, lam)

    def describe(self) -> dict:
        return {
            "name": self.name,
            "dim": self.n,
            "step": self.sc.step,
            "basis": list(self.basis_names),
            "brackets": [[i, j, c] for i, j, c in self.sc.brackets()],
            "flag": self.flag.tolist(),
            "chart": self.chart.to_dict() if self.chart else None,
        }


def _heisenberg_oracle(lam, g, xi):
    """``pi_lam(x', y', t') f (xi) = exp(i lam (t' + x'y'/2 + xi y')) f(xi + x')``.

    Returns ``(phase, shifted_point)``; see ``docs/heisenberg_oracle.md``.
    """
    lam = float(np.atleast_1d(lam)[0])
    xp, yp, tp = np.asarray(g, float)
    xi = np.asarray(xi, float)
    return np.exp(1j * lam * (tp + xp * yp / 2 + xi * yp)), xi + xp


def _abelian_oracle(lam, g, xi):
    lam = np.atleast_1d(np.asarray(lam, float))
    return np.exp(1j * float(lam @ np.asarray(g, float))), xi


def validate_bundle(b: GroupBundle) -> None:
    if jacobi_residual(b.sc.c) > 1e-12:
        raise AlgebraError(f"{b.name}: Jacobi residual too large")
    check_ideal_flag(b.sc, b.flag)
    if b.chart is not None:
        k_expected = b.n - max_orbit_dimension(b.sc)
        if b.chart.k != k_expected:
            raise AlgebraError(f"{b.name}: chart k={b.chart.k}, expected {k_expected}")


def _bundle(name, dim, brackets, embed, density_formula, grids, oracle=None, names=()):
    sc = StructureConstants.from_brackets(dim, brackets, name=name)
    flag = lower_central_series(sc).flag
    chart = DualChart(embed=np.asarray(embed, float), density_formula=density_formula)
    b = GroupBundle(name, sc, flag, chart, grids, oracle, tuple(names))
    validate_bundle(b)
    return b


def _make(name) -> GroupBundle:
    if name == "abelian1":
        return _bundle(
            name, 1, [], [[1.0]], lambda lam: 1.0,
            {
                "G": GridSpec.cube(1, 2.0, 257),
                "X": GridSpec(),
                "lambda": GridSpec.cube(1, 10.0, 33),
            },
            _abelian_oracle, ("T",),
        )
    if name == "abelian2":
        return _bundle(
            name, 2, [], np.eye(2), lambda lam: 1.0,
            {
                "G": GridSpec.cube(2, 2.0, 65),
                "X": GridSpec(),
                "lambda": GridSpec.cube(2, 6.0, 17),
            },
            _abelian_oracle, ("T1", "T2"),
        )
    if name == "heisenberg":
        return _bundle(
            name, 3, [(0, 1, [0, 0, 1])], [[0, 0, 1.0]],
            lambda lam: abs(float(np.atleast_1d(lam)[0])),
            {
                "G": GridSpec.cube(3, 2.0, 33),
                "X": GridSpec.cube(1, 3.0, 65),
                "lambda": GridSpec((Axis(2.25, 1.75, 15),)),
                "plancherel_lambda": GridSpec.cube(1, 6.0, 33),
                "plancherel_X": GridSpec.cube(1, 12.0, 193),
            },
            _heisenberg_oracle, ("X", "Y", "Z"),
        )
    if name == "engel":
        return _bundle(
            name, 4, [(0, 1, [0, 0, 1, 0]), (0, 2, [0, 0, 0, 1])],
            [[0, 0, 0, 1.0], [0, 1.0, 0, 0]],
            lambda lam: abs(float(np.atleast_1d(lam)[0])),
            {
                "G": GridSpec.cube(4, 2.0, 17),
                "X": GridSpec.cube(1, 3.0, 33),
                "lambda": GridSpec((Axis(2.25, 1.75, 7), Axis(0.0, 1.5, 7))),
            },
            None, ("X1", "X2", "X3", "X4"),
        )
    raise UnknownGroupError(f"unknown group {name!r}; available presets: {', '.join(PRESETS)}")


_CACHE: dict = {}


def get_group(name: str) -> GroupBundle:
    if name not in _CACHE:
        _CACHE[name] = _make(name)
    return _CACHE[name]


def load_group_file(path) -> GroupBundle:
    """User group: algebra JSON, optionally with ``flag`` (rows) and ``chart`` entries."""
    data = json.loads(Path(path).read_text())
    sc = algebra_from_dict(data)
    flag = np.asarray(data["flag"], float) if "flag" in data else lower_central_series(sc).flag
    chart = DualChart.from_dict(data["chart"], sc.dim) if data.get("chart") else None
    b = GroupBundle(data.get("name", Path(path).stem), sc, flag, chart)
    validate_bundle(b)
    return b


def resolve_group(name_or_path) -> GroupBundle:
    if name_or_path in PRESETS:
        return get_group(name_or_path)
    if Path(str(name_or_path)).is_file():
        return load_group_file(name_or_path)
    raise UnknownGroupError(
        f"unknown group {name_or_path!r}; available presets: {', '.join(PRESETS)}"
    )


def oracle_representation(bundle: GroupBundle, lam, g, xi):
    """Closed-form ``(phase, shifted point)`` of ``pi_lam(g)`` at ``xi``.

    ``[pi_lam(g) f](xi) = phase * f(shifted)``.
    """
    if bundle.oracle is None:
        raise LookupError(f"no oracle for group {bundle.name!r}")
    return bundle.oracle(lam, g, xi)
