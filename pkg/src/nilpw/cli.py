"""Batch command line: ``nilpw <subcommand> [--config run.json] [--set a.b=value ...]``.

Exit codes: 0 success, 1 invalid configuration, 2 numerical check failure
(selftest), 3 I/O error.
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import sys
import warnings
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .catalog import PRESETS, UnknownGroupError, get_group, resolve_group
from .functions import SupportError, make_function, write_function_csv
from .grids import GridError, GridSpec
from .lie import AlgebraError
from .orbits import NonGenericWarning
from .runner import Interrupted, SlotStore, config_digest, slot_map
from .transform import (
    AliasingError,
    KernelTensor,
    LamLattice,
    group_fourier_family,
    h_spacing,
    invertibility_probe,
    kernel_block,
    kernel_rep,
    operator_from_kernel,
    plancherel_integral,
    plancherel_mask,
    pw_scan,
    route_error,
    write_kernel,
)

log = logging.getLogger("nilpw")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3

DEFAULTS = {
    "group": "heisenberg",
    "seed": 2024,
    "function": {"family": "random", "index": 0, "count": 1, "radius": 1.8},
    "grids": {"G": None, "X": None, "lambda": None},
    "epsilon": 1e-8,
    "output": "nilpw-out",
    "workers": 1,
    "route": {"stride": 2, "tolerance": 5e-3},
    "probe": {"tol": 1e-10},
    "dump_kernel": True,
    "plots": True,
}


class ConfigError(ValueError):
    pass


# --- configuration -------------------------------------------------------------

def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def set_dotted(cfg: dict, assignment: str) -> None:
    """Apply ``a.b.c=value``; the value is parsed as JSON when possible."""
    if "=" not in assignment:
        raise ConfigError(f"--set expects key=value, got {assignment!r}")
    key, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = cfg
    parts = key.split(".")
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            node[p] = {}
        node = node[p]
    node[parts[-1]] = value


def load_config(path=None, sets=()) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            user = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        if not isinstance(user, dict):
            raise ConfigError(f"{path}: top level must be an object")
        cfg = _merge(cfg, user)
    for s in sets:
        set_dotted(cfg, s)
    return cfg


class Run:
    """Validated configuration with the objects it resolves to."""

    def __init__(self, cfg: dict, command: str):
        self.cfg = cfg
        self.command = command
        try:
            self.bundle = resolve_group(cfg["group"])
        except UnknownGroupError as exc:
            raise ConfigError(str(exc.args[0])) from exc
        except (AlgebraError, KeyError) as exc:
            raise ConfigError(f"group: {exc}") from exc
        b = self.bundle
        if b.chart is None:
            raise ConfigError(f"group {b.name!r} has no dual chart; add a 'chart' entry")
        self.g_grid = self._grid("G")
        self.x_grid = self._grid("X", "plancherel_X" if command == "plancherel" else None)
        self.lam_grid = self._grid("lambda", "plancherel_lambda" if command == "plancherel" else None)
        if self.g_grid.ndim != b.n:
            raise ConfigError(f"grids.G has {self.g_grid.ndim} axes, group dimension is {b.n}")
        if self.lam_grid.ndim != b.chart.k:
            raise ConfigError(f"grids.lambda has {self.lam_grid.ndim} axes, chart dimension is {b.chart.k}")
        try:
            self.rep = kernel_rep(b, self.lam_grid)
        except ValueError as exc:
            raise ConfigError(f"grids.lambda: {exc}") from exc
        if self.x_grid.ndim != self.rep.x_dim:
            raise ConfigError(f"grids.X has {self.x_grid.ndim} axes, X = H\\G has dimension {self.rep.x_dim}")
        self.workers = int(cfg.get("workers", 1))
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        eps = float(cfg.get("epsilon", 1e-8))
        if not 0 < eps < 1:
            raise ConfigError(f"epsilon must lie in (0, 1), got {eps}")
        self.eps = eps
        self._check_nyquist()
        self.functions = self._functions()
        self.out = Path(cfg.get("output", "nilpw-out"))

    def _grid(self, key, preset_key=None) -> GridSpec:
        spec = (self.cfg.get("grids") or {}).get(key)
        if spec is None:
            grids = self.bundle.grids
            if preset_key and preset_key in grids:
                return grids[preset_key]
            if key not in grids:
                raise ConfigError(f"grids.{key} is required for group {self.bundle.name!r}")
            return grids[key]
        try:
            return GridSpec.from_list(spec)
        except (GridError, KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"grids.{key}: {exc}") from exc

    def _check_nyquist(self):
        d = h_spacing(self.rep, self.g_grid)
        E = self.rep.pol.basis @ self.bundle.chart.embed.T
        om = np.abs(self.lam_grid.points @ E.T)
        if om.size and np.any(om * d >= np.pi):
            raise ConfigError(
                f"grids.lambda exceeds the H-grid Nyquist limit: max |w| d = {np.max(om * d):.3g} >= pi; "
                "refine grids.G or narrow grids.lambda"
            )

    def _functions(self):
        spec = dict(self.cfg.get("function") or {})
        spec.setdefault("seed", self.cfg.get("seed", 0))
        count = int(spec.get("count", 1))
        if count < 1:
            raise ConfigError("function.count must be >= 1")
        out = []
        for i in range(count):
            try:
                out.append(make_function(spec, self.g_grid, i))
            except SupportError as exc:
                raise ConfigError(f"function: {exc}") from exc
            except OSError:
                raise
            except (KeyError, ValueError) as exc:
                raise ConfigError(f"function: {exc}") from exc
        return out

    def digest(self, extra=None) -> str:
        return config_digest({"cmd": self.command, "cfg": self.cfg, "extra": extra, "v": __version__})

    def store(self, name, n_slots, extra=None):
        return SlotStore(self.out / ".slots" / name, self.digest(extra), n_slots)


# --- CSV ----------------------------------------------------------------------

def write_csv(path, columns, rows, meta: dict) -> Path:
    """Comment header (metadata and timestamp), a column row with units, then the body."""
    path = Path(path)
    lines = [f"# nilpw {__version__}", f"# generated: {datetime.now(timezone.utc).isoformat()}"]
    lines += [f"# {k}: {v}" for k, v in meta.items()]
    lines.append(",".join(columns))
    for r in rows:
        lines.append(",".join(_fmt(v) for v in r))
    path.write_text("\n".join(lines) + "\n")
    return path


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    v = float(v)
    return "nan" if not np.isfinite(v) else f"{v:.12e}"


def csv_body(path) -> str:
    """Everything after the header (comment lines and the column row)."""
    lines = Path(path).read_text().splitlines()
    i = 0
    while i < len(lines) and lines[i].startswith("#"):
        i += 1
    return "\n".join(lines[i + 1:])


def _lam_cols(k):
    return [f"lambda_{a + 1} [chart]" for a in range(k)]


# --- subcommands ----------------------------------------------------------------

ROW_BLOCK = 8


def _kernel_slots(run: Run, phi, name, reduce=None, stop_after=None, extra=None):
    """Kernel over the whole lambda grid, computed in fixed blocks of ``x1`` rows.

    Each slot stores ``reduce(values, rows)`` (the raw block by default); the
    block layout is independent of the worker count.
    """
    lat = LamLattice.from_grid(run.lam_grid)
    blocks = np.array_split(np.arange(run.x_grid.size), max(1, -(-run.x_grid.size // ROW_BLOCK)))
    store = run.store(name, len(blocks), extra)

    def slot(i):
        values, _ = kernel_block(phi, run.bundle, run.rep, lat, run.x_grid, rows=blocks[i])
        return values if reduce is None else reduce(values, blocks[i])

    return slot_map(slot, len(blocks), run.workers, store, stop_after)


def _hs_norms(run: Run, phi, name, stop_after=None, extra=None) -> np.ndarray:
    """HS norms per chart point, flattened; row blocks contribute partial sums in a fixed order."""
    w = run.x_grid.interp_weights

    def partial(values, rows):
        return np.einsum("...ij,i,j->...", np.abs(values) ** 2, w[rows], w)

    parts = _kernel_slots(run, phi, name, partial, stop_after, extra)
    total = np.zeros(run.lam_grid.shape)
    for p in parts:
        total = total + p
    return np.sqrt(total).ravel()


def _full_kernel(run: Run, phi, name, stop_after=None) -> KernelTensor:
    blocks = _kernel_slots(run, phi, name, None, stop_after)
    return KernelTensor(run.lam_grid, run.x_grid, np.concatenate(blocks, axis=-2), {})


def _generic_mask(run: Run):
    dens, masked = plancherel_mask(run.bundle, run.lam_grid)
    return dens, masked


def cmd_catalog(run_cfg, args) -> int:
    entries = [get_group(p).describe() for p in PRESETS]
    print(json.dumps(entries, indent=2))
    return EXIT_OK


def cmd_fourier(run: Run, args) -> int:
    phi = run.functions[0]
    lat = LamLattice.from_grid(run.lam_grid)
    dens, masked = _generic_mask(run)
    masked = masked.reshape(lat.shape)
    store = run.store("fourier", lat.shape[0])

    def slot(i):
        pts = lat.slab(i).points
        keep = ~masked[i].ravel()
        N = run.x_grid.size
        out = np.full((pts.shape[0], N, N), np.nan + 0j)
        if keep.any():
            ops = group_fourier_family(phi, run.bundle, pts[keep], run.x_grid)
            out[keep] = np.stack([o.entries for o in ops])
        return out

    mats = slot_map(slot, lat.shape[0], run.workers, store, args.stop_after)
    mats = np.concatenate(mats).reshape(-1, run.x_grid.size, run.x_grid.size)
    xs = run.x_grid.points
    rows = []
    for lam, M in zip(run.lam_grid.points, mats):
        if not np.all(np.isfinite(M)):
            continue
        for a in range(M.shape[0]):
            for c in range(M.shape[1]):
                rows.append((*lam, *xs[a], *xs[c], M[a, c].real, M[a, c].imag))
    nx = run.x_grid.ndim
    cols = _lam_cols(lam.size) + [f"x1_{i + 1} [X]" for i in range(nx)] + [f"x_{i + 1} [X]" for i in range(nx)]
    cols += ["re [matrix entry]", "im [matrix entry]"]
    path = write_csv(run.out / "fourier.csv", cols, rows, _meta(run, phi))
    if run.cfg.get("plots", True) and nx == 1:
        from . import plotting

        good = [i for i, M in enumerate(mats) if np.all(np.isfinite(M))]
        if good:
            i = good[len(good) // 2]
            plotting.operator_heatmap(mats[i], xs[:, 0], run.out / "fourier.png",
                                      title=f"|M| at lambda={np.round(run.lam_grid.points[i], 4).tolist()}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_kernel(run: Run, args) -> int:
    phi = run.functions[0]
    K = _full_kernel(run, phi, "kernel", args.stop_after)
    files = []
    if run.cfg.get("dump_kernel", True):
        files += [str(p) for p in write_kernel(run.out / "kernel.bin", K)]
    # route equivalence at every stride-th node of the first chart axis
    stride = int(run.cfg["route"]["stride"])
    tol = float(run.cfg["route"]["tolerance"])
    dens, masked = _generic_mask(run)
    idx = [np.unravel_index(i, run.lam_grid.shape) for i in range(run.lam_grid.size)
           if not masked[i] and np.unravel_index(i, run.lam_grid.shape)[0] % stride == 0]
    lams = np.array([run.lam_grid.points[np.ravel_multi_index(j, run.lam_grid.shape)] for j in idx])
    store = run.store("route", len(idx))

    def slot(i):
        op = group_fourier_family(phi, run.bundle, lams[i:i + 1], run.x_grid)[0]
        return np.array(route_error(op.entries, operator_from_kernel(K, idx[i]).entries, run.x_grid))

    errs = np.array(slot_map(slot, len(idx), run.workers, store, None), dtype=float)
    meta = _meta(run, phi)
    meta["route tolerance"] = f"{tol:g}"
    meta["route max error"] = f"{errs.max():.6e}" if errs.size else "nan"
    meta["kernel files"] = ", ".join(Path(f).name for f in files) or "none"
    rows = [(*l, e, bool(e < tol)) for l, e in zip(lams, errs)]
    path = write_csv(run.out / "kernel_route.csv",
                     _lam_cols(run.lam_grid.ndim) + ["rel_hs_error [1]", "below_tolerance [bool]"], rows, meta)
    if run.cfg.get("plots", True) and errs.size:
        from . import plotting

        plotting.route_errors(lams[:, 0], errs, tol, run.out / "kernel_route.png")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_pw_scan(run: Run, args) -> int:
    phi = run.functions[0]
    hs = _hs_norms(run, phi, "pw-scan", args.stop_after)
    # pw_scan recomputes nothing: feed it a tensor-shaped stand-in through its HS norms
    K = _HSOnly(run.lam_grid, run.x_grid, hs)
    rep = pw_scan(phi, K, run.bundle, eps_rel=run.eps)
    meta = _meta(run, phi)
    meta["epsilon"] = f"{rep.eps:.6e} (relative {run.eps:g})"
    meta["verdict"] = rep.verdict
    meta["vanishing measure"] = f"{rep.measure:.6e} of {rep.full_measure:.6e}"
    rows = [(*l, h, bool(v), bool(m)) for l, h, v, m in zip(rep.lams, rep.hs, rep.vanishing, rep.masked)]
    cols = _lam_cols(run.lam_grid.ndim) + ["hs_norm [operator on L2(X)]", "below_eps [bool]",
                                          "non_generic [bool]"]
    path = write_csv(run.out / "pw_scan.csv", cols, rows, meta)
    if run.cfg.get("plots", True):
        from . import plotting

        plotting.hs_profile(rep.lams, rep.hs, run.out / "pw_scan.png", eps=rep.eps, title=rep.verdict[:60])
    print(f"wrote {path}\nverdict: {rep.verdict}")
    return EXIT_OK


class _HSOnly(KernelTensor):
    """Kernel stand-in that carries precomputed HS norms only."""

    def __init__(self, lam_grid, x_grid, hs):
        super().__init__(lam_grid, x_grid, np.zeros(lam_grid.shape + (0, 0)), {})
        self._hs = np.asarray(hs, float).reshape(lam_grid.shape)

    def hs_norms(self):
        return self._hs


def cmd_plancherel(run: Run, args) -> int:
    dens, masked = _generic_mask(run)
    results, integrands = [], []
    for k, phi in enumerate(run.functions):
        hs = _hs_norms(run, phi, f"plancherel-{k}", args.stop_after, extra=k)
        res = plancherel_integral(hs**2, dens, masked, run.lam_grid, phi.l2_norm_sq())
        results.append((k, phi, res))
        integrands.append(res.hs_sq * res.density)
    ratios = np.array([r.ratio for _, _, r in results])
    meta = _meta(run, run.functions[0])
    meta["functions"] = len(results)
    meta["ratio mean"] = f"{np.mean(ratios):.10e}"
    meta["ratio stdev/mean"] = f"{np.std(ratios) / np.mean(ratios):.6e}" if len(ratios) > 1 else "n/a"
    rows = [(k, phi.label, res.l2_norm_sq, res.total, res.ratio, res.tail_fraction, res.warning or "")
            for k, phi, res in results]
    cols = ["function [index]", "label [-]", "l2_norm_sq [G]", "plancherel_integral [dual]",
            "ratio [1]", "tail_fraction [1]", "warning [-]"]
    path = write_csv(run.out / "plancherel.csv", cols, rows, meta)
    per = [(*l, d, *np.asarray(integrands)[:, i]) for i, (l, d) in enumerate(zip(run.lam_grid.points, dens))]
    write_csv(run.out / "plancherel_lambda.csv",
              _lam_cols(run.lam_grid.ndim) + ["density [1]"]
              + [f"integrand_{k} [R HS^2]" for k in range(len(results))], per, meta)
    if run.cfg.get("plots", True) and run.lam_grid.ndim == 1:
        from . import plotting

        plotting.plancherel_curves(run.lam_grid.points[:, 0], integrands, run.out / "plancherel.png")
    print(f"wrote {path}\nratio mean {np.mean(ratios):.8g}")
    for _, phi, res in results:
        if res.warning:
            print(f"warning ({phi.label}): {res.warning}")
    return EXIT_OK


def cmd_probe(run: Run, args) -> int:
    phi = run.functions[0]
    dens, masked = _generic_mask(run)
    tol = float(run.cfg["probe"]["tol"])

    K = _full_kernel(run, phi, "probe-invert", args.stop_after)
    ops = [operator_from_kernel(K, np.unravel_index(i, run.lam_grid.shape)) for i in range(run.lam_grid.size)]
    p = invertibility_probe(ops, tol)
    res = np.column_stack([p.sigma_min, p.sigma_max, p.rank])
    rows = [(*l, s[0], s[1], int(s[2]), bool(s[0] < tol * s[1]), bool(m))
            for l, s, m in zip(run.lam_grid.points, res, masked)]
    cols = _lam_cols(run.lam_grid.ndim) + ["sigma_min [1]", "sigma_max [1]", "rank [count]",
                                          "near_singular [bool]", "non_generic [bool]"]
    meta = _meta(run, phi)
    meta["tolerance"] = f"{tol:g}"
    path = write_csv(run.out / "probe_invert.csv", cols, rows, meta)
    if run.cfg.get("plots", True):
        from . import plotting

        keep = ~masked
        plotting.singular_values(run.lam_grid.points[keep, 0], res[keep, 0], res[keep, 1],
                                 run.out / "probe_invert.png")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_selftest(run_cfg, args) -> int:
    from .acceptance import format_table, run_all

    results = run_all(only=args.only, seed=int(run_cfg.get("seed", 2024)))
    print(format_table(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERIC


def _meta(run: Run, phi) -> dict:
    return {
        "command": run.command,
        "group": run.bundle.name,
        "function": phi.label,
        "G grid": json.dumps(run.g_grid.to_list()),
        "X grid": json.dumps(run.x_grid.to_list()),
        "lambda grid": json.dumps(run.lam_grid.to_list()),
        "seed": run.cfg.get("seed"),
    }


COMMANDS = {
    "catalog": cmd_catalog,
    "fourier": cmd_fourier,
    "kernel": cmd_kernel,
    "plancherel": cmd_plancherel,
    "pw-scan": cmd_pw_scan,
    "probe-invert": cmd_probe,
    "selftest": cmd_selftest,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nilpw", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"nilpw {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON run configuration")
        s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config leaf by dotted path (value parsed as JSON)")
        s.add_argument("--workers", type=int, help="worker threads for the lambda map")
        s.add_argument("--output", help="output directory")
        s.add_argument("--stop-after", type=int, default=None,
                       help="compute at most this many new lambda slots, then stop (resumable)")
        s.add_argument("-v", "--verbose", action="store_true")
        if name == "selftest":
            s.add_argument("--only", type=int, nargs="*", help="criterion numbers to run")
        if name == "fourier":
            s.add_argument("--save-function", action="store_true",
                           help="also write the sampled test function as CSV")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.set)
        if args.workers is not None:
            cfg["workers"] = args.workers
        if args.output is not None:
            cfg["output"] = args.output
        if args.command in ("catalog", "selftest"):
            return COMMANDS[args.command](cfg, args)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NonGenericWarning)
            run = Run(cfg, args.command)
        run.out.mkdir(parents=True, exist_ok=True)
        if getattr(args, "save_function", False):
            write_function_csv(run.out / "function.csv", run.functions[0])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NonGenericWarning)
            return COMMANDS[args.command](run, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AliasingError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Interrupted as exc:
        print(f"partial run: {exc}", file=sys.stderr)
        return EXIT_OK
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
