"""Group Fourier transforms on nilpotent Lie groups, discretized.

Algebra layer (:mod:`nilpw.lie`), coadjoint orbits and polarizations
(:mod:`nilpw.orbits`), induced representations (:mod:`nilpw.induce`), the
operator-valued transform and its kernel (:mod:`nilpw.transform`), group
presets (:mod:`nilpw.catalog`) and a batch command line (:mod:`nilpw.cli`).
"""

__version__ = "0.1.0"

from .catalog import PRESETS, get_group, resolve_group  # noqa: F401
