"""Numerical acceptance checks, shared by ``nilpw selftest`` and the test suite.

Each check returns a :class:`CheckResult`; a check passes only if its metric
is within tolerance *and* it ran within its time budget.
"""
from __future__ import annotations

import contextlib
import io
import tempfile
import time
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.polynomial.hermite_e import hermeval

from .catalog import PRESETS, get_group, oracle_representation
from .functions import random_bump, separable_bump, zero_function
from .grids import GridSpec, cubic_error_bound
from .induce import act, act_matrix
from .lie import bch_product, group_mul, jacobi_residual
from .orbits import NonGenericWarning, pfaffian, plancherel_density, polarization_residuals, vergne_polarization
from .transform import (
    group_fourier_family,
    kernel_tensor,
    operator_from_kernel,
    plancherel_check,
    pw_scan,
    route_error,
)


@dataclass
class CheckResult:
    number: int
    name: str
    metric: float
    tolerance: float
    runtime: float
    time_limit: float
    within: bool
    detail: str = ""

    @property
    def passed(self) -> bool:
        return bool(self.within) and self.runtime <= self.time_limit


def _timed(number, name, tol, limit, body):
    t0 = time.perf_counter()
    metric, within, detail = body()
    return CheckResult(number, name, float(metric), tol, time.perf_counter() - t0, limit, bool(within), detail)


# 1 -----------------------------------------------------------------------------

def fft_oracle(func, lams, n=4096, h=None):
    """``int f(t) exp(i lam t) dt`` by FFT on a fine grid; ``lams`` must sit on its frequency lattice."""
    lams = np.asarray(lams, float)
    if h is None:
        h = 2 * np.pi * 4 / (n * 0.625)
    t = (np.arange(n) - n // 2) * h
    spec = np.fft.ifft(np.fft.ifftshift(func(t[:, None]))) * n * h
    k = np.rint(lams * n * h / (2 * np.pi)).astype(int)
    if np.abs(k * 2 * np.pi / (n * h) - lams).max() > 1e-9:
        raise ValueError("lambda points are not on the FFT frequency lattice")
    return spec[k % n]


def check_abelian_fft(seed=None):
    b = get_group("abelian1")
    G, L = b.grids["G"], b.grids["lambda"]

    def body():
        phi = separable_bump(G, radius=1.0)
        lams = L.points
        ops = group_fourier_family(phi, b, lams, GridSpec())
        direct = np.array([o.entries[0, 0] for o in ops])
        ref = fft_oracle(phi.func, lams[:, 0])
        err = np.abs(direct - ref).max() / np.abs(ref).max()
        return err, err < 1e-6, f"{L.size} lambda points on [-10, 10], G {G.shape[0]} nodes"

    return _timed(1, "abelian direct route vs FFT", 1e-6, 1.0, body)


# 2 -----------------------------------------------------------------------------

def route_errors(phi, b, lam_grid, x_grid, stride=2):
    K = kernel_tensor(phi, b, lam_grid, x_grid)
    idx = list(range(0, lam_grid.shape[0], stride))
    lams = lam_grid.points[idx]
    ops = group_fourier_family(phi, b, lams, x_grid)
    return np.array([route_error(o.entries, operator_from_kernel(K, (i,)).entries, x_grid)
                     for o, i in zip(ops, idx)])


def check_route_equivalence(seed=2024, count=5, halving=2):
    b = get_group("heisenberg")
    G, X, L = b.grids["G"], b.grids["X"], b.grids["lambda"]

    def body():
        worst, ratios = [], []
        for i in range(count):
            phi = random_bump(G, seed, i)
            e = route_errors(phi, b, L, X)
            worst.append(e.max())
            if i < halving:
                fine = route_errors(random_bump(G.refine(), seed, i), b, L, X.refine())
                ratios.append(e.max() / fine.max())
        worst, ratios = np.array(worst), np.array(ratios)
        ok = worst.max() < 5e-3 and np.all((ratios >= 2.8) & (ratios <= 5.2))
        detail = (f"max error per function {np.round(worst, 5).tolist()}; "
                  f"halving ratios {np.round(ratios, 3).tolist()} (need 2.8..5.2)")
        return worst.max(), ok, detail

    return _timed(2, "direct vs kernel route", 5e-3, 120.0, body)


# 3 -----------------------------------------------------------------------------

def hermite_subspace(x_grid, sigma=0.4, orders=3):
    """Weighted-orthonormal basis of low Hermite-Gaussian modes sampled on ``x_grid``."""
    x = x_grid.points[:, 0]
    w = x_grid.interp_weights
    F = np.stack([hermeval(x / sigma, [0] * k + [1]) * np.exp(-x**2 / (4 * sigma**2))
                  for k in range(orders)], 1)
    r = np.sqrt(w)[:, None]
    q, _ = np.linalg.qr(r * F)
    return q / r


def representation_defects(b, lam, x_grid, pairs, Q):
    """Largest unitarity and homomorphism defects of sampled ``pi_lam`` on span(Q)."""
    rep = b.rep(lam)
    r = np.sqrt(x_grid.interp_weights)[:, None]
    I = np.eye(Q.shape[1])
    du = dh = 0.0
    for g1, g2 in pairs:
        M1, M2, M12 = (act_matrix(rep, g, x_grid) for g in (g1, g2, group_mul(b.sc, g1, g2)))
        A = r * (M1 @ Q)
        du = max(du, np.linalg.norm(A.conj().T @ A - I, 2))
        dh = max(dh, np.linalg.norm(r * ((M1 @ M2 - M12) @ Q), 2))
    return du, dh


def check_representation_laws(seed=2024):
    b = get_group("heisenberg")
    X = b.grids["X"]

    def body():
        rng = np.random.default_rng(seed)
        pairs = rng.uniform(-0.5, 0.5, size=(50, 2, 3))
        Q = hermite_subspace(X)
        rows = [(lam, *representation_defects(b, lam, X, pairs, Q)) for lam in (1.0, 2.0)]
        worst = max(max(du, dh) for _, du, dh in rows)
        detail = "; ".join(f"lambda={l:g}: unitarity {du:.2e}, homomorphism {dh:.2e}" for l, du, dh in rows)
        return worst, worst < 1e-3, detail

    return _timed(3, "unitarity and homomorphism", 1e-3, 10.0, body)


# 4 -----------------------------------------------------------------------------

def check_heisenberg_oracle(seed=2024, sigma=0.6):
    b = get_group("heisenberg")
    X = b.grids["X"]
    x = X.points[:, 0]

    def f(t):
        return np.exp(-np.asarray(t) ** 2 / (2 * sigma**2))

    bound = cubic_error_bound(X.spacings[0], 3 / sigma**4)

    def body():
        rng = np.random.default_rng(seed)
        nodes = np.flatnonzero(np.abs(x) <= 2.0)
        err = 0.0
        for _ in range(100):
            lam = rng.uniform(0.5, 4.0)
            g = rng.uniform(-0.5, 0.5, size=3)
            j = rng.choice(nodes)
            got = act(b.rep(lam), g, f(x), X)[j]
            phase, shifted = oracle_representation(b, lam, g, x[j])
            err = max(err, abs(got - phase * f(shifted)))
        return err, err < min(bound, 1e-4), f"max error {err:.2e}, interpolation bound {bound:.2e}"

    return _timed(4, "Heisenberg closed-form oracle", 1e-4, 10.0, body)


# 5 -----------------------------------------------------------------------------

def check_plancherel(seed=2024, count=10):
    b = get_group("heisenberg")
    G, X, L = b.grids["G"], b.grids["plancherel_X"], b.grids["plancherel_lambda"]

    def body():
        res = [plancherel_check(random_bump(G, seed, i), b, L, X) for i in range(count)]
        ratios = np.array([r.ratio for r in res])
        cv = float(np.std(ratios) / np.mean(ratios))
        warned = [r.warning for r in res if r.warning]
        detail = (f"ratio mean {np.mean(ratios):.6g} (x 4 pi^2 = {np.mean(ratios) * 4 * np.pi**2:.5f}), "
                  f"max tail {max(r.tail_fraction for r in res):.2e}, warnings {len(warned)}")
        return cv, cv < 0.02 and not warned, detail

    return _timed(5, "Plancherel ratio constancy", 0.02, 300.0, body)


# 6 -----------------------------------------------------------------------------

def check_pw_scan(seed=2024, count=20):
    def body():
        parts, worst = [], 0
        for name, lam_key, x_key in (("abelian1", "lambda", "X"), ("heisenberg", "plancherel_lambda", "X")):
            b = get_group(name)
            G, L, X = b.grids["G"], b.grids[lam_key], b.grids[x_key]
            pairs = []
            for i in range(count):
                phi = random_bump(G, seed, i)
                rep = pw_scan(phi, kernel_tensor(phi, b, L, X), b)
                pairs.append(rep.adjacent_pairs)
            zero = zero_function(G)
            zrep = pw_scan(zero, kernel_tensor(zero, b, L, X), b)
            zero_ok = zrep.verdict == "zero function" and bool(np.all(zrep.vanishing | zrep.masked))
            worst = max(worst, max(pairs), 0 if zero_ok else 1)
            parts.append(f"{name}: max adjacent pairs {max(pairs)}, zero function {'ok' if zero_ok else 'WRONG'}")
        return worst, worst == 0, "; ".join(parts)

    return _timed(6, "Paley-Wiener vanishing scan", 0.0, 600.0, body)


# 7 -----------------------------------------------------------------------------

def _random_skew(rng, n):
    A = rng.normal(size=(n, n))
    return A - A.T


def check_algebra(seed=2024):
    def body():
        rng = np.random.default_rng(seed)
        assoc = jac = 0.0
        for name in PRESETS:
            sc = get_group(name).sc
            a, b, c = rng.uniform(-2, 2, size=(3, 1000, sc.dim))
            lhs = bch_product(sc, bch_product(sc, a, b), c)
            rhs = bch_product(sc, a, bch_product(sc, b, c))
            assoc = max(assoc, float(np.abs(lhs - rhs).max()))
            jac = max(jac, jacobi_residual(sc.c))
        pf = 0.0
        for n in (4, 6):
            for _ in range(100):
                B = _random_skew(rng, n)
                d = np.linalg.det(B)
                pf = max(pf, abs(pfaffian(B) ** 2 - d) / abs(d))
        ok = assoc < 1e-10 and jac < 1e-12 and pf < 1e-10
        return max(assoc / 1e-10, jac / 1e-12, pf / 1e-10), ok, (
            f"associativity {assoc:.1e} (<1e-10), Jacobi {jac:.1e} (<1e-12), Pf^2 vs det {pf:.1e} (<1e-10)")

    return _timed(7, "algebra layer", 1.0, 5.0, body)


# 8 -----------------------------------------------------------------------------

def check_engel(seed=2024):
    b = get_group("engel")

    def body():
        rng = np.random.default_rng(seed)
        lams = np.column_stack([rng.uniform(0.3, 3.0, 100) * rng.choice([-1, 1], 100),
                                rng.uniform(-2, 2, 100)])
        res = dens = 0.0
        defect = 0
        for lam in lams:
            l = b.functional(lam)
            pol = vergne_polarization(b.sc, l, b.flag)
            sub, subord, dim = polarization_residuals(b.sc, pol)
            res = max(res, sub, subord)
            defect = max(defect, abs(dim))
            with warnings.catch_warnings():
                warnings.simplefilter("error", NonGenericWarning)
                pf = plancherel_density(b.sc, b.chart, lam)
            ref = b.chart.density_formula(lam)
            dens = max(dens, abs(pf - ref) / ref)
        ok = res < 1e-12 and defect == 0 and dens < 1e-12
        return max(res, dens), ok, (f"polarization residual {res:.1e}, dimension defect {defect}, "
                                    f"density vs |lambda_1| {dens:.1e}")

    return _timed(8, "Engel polarization and density", 1e-12, 5.0, body)


# 9 -----------------------------------------------------------------------------

def check_determinism(seed=2024):
    from .cli import csv_body, main

    def body():
        with tempfile.TemporaryDirectory() as tmp, contextlib.redirect_stdout(io.StringIO()), \
                contextlib.redirect_stderr(io.StringIO()):
            base = ["pw-scan", "--set", "group=\"heisenberg\"", "--set", f"seed={seed}",
                    "--set", "plots=false"]
            runs = {"w1": ["--workers", "1"], "w8": ["--workers", "8"]}
            codes = {}
            for tag, extra in runs.items():
                codes[tag] = main(base + extra + ["--output", str(Path(tmp) / tag)])
            out = str(Path(tmp) / "resumed")
            codes["part"] = main(base + ["--workers", "4", "--output", out, "--stop-after", "5"])
            stopped = not (Path(out) / "pw_scan.csv").exists()
            codes["resumed"] = main(base + ["--workers", "2", "--output", out])
            bodies = {t: csv_body(Path(tmp) / t / "pw_scan.csv") for t in ("w1", "w8", "resumed")}
        same = bodies["w1"] == bodies["w8"] == bodies["resumed"]
        ok = same and stopped and all(c == 0 for c in codes.values())
        differing = sum(a != c for a, c in zip(bodies["w1"].splitlines(), bodies["w8"].splitlines()))
        return float(not same), ok, (f"1 vs 8 workers vs interrupted+resumed: "
                                     f"{'identical' if same else f'{differing} differing rows'}; exit codes {codes}")

    return _timed(9, "determinism across workers and resume", 0.0, 120.0, body)


CHECKS = {
    1: check_abelian_fft,
    2: check_route_equivalence,
    3: check_representation_laws,
    4: check_heisenberg_oracle,
    5: check_plancherel,
    6: check_pw_scan,
    7: check_algebra,
    8: check_engel,
    9: check_determinism,
}


def run_all(only=None, seed=2024):
    numbers = sorted(only) if only else sorted(CHECKS)
    out = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonGenericWarning)
        for n in numbers:
            out.append(CHECKS[n](seed=seed))
    return out


def format_line(r: CheckResult) -> str:
    status = "PASS" if r.passed else "FAIL"
    slow = "" if r.runtime <= r.time_limit else f" (over time budget {r.time_limit:g}s)"
    return (f"[{status}] {r.number}. {r.name}: metric {r.metric:.3e} vs {r.tolerance:.1e}, "
            f"{r.runtime:.1f}s{slow} | {r.detail}")


def format_table(results) -> str:
    return "\n".join(format_line(r) for r in results)
