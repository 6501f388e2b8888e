"""Report figures, written as PNG files next to the CSV they summarize."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams.update({
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 10,
})


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None, "Date": None})
    plt.close(fig)
    return path


def hs_profile(lams, hs, path, eps=None, title="", ylabel=r"$\|\hat\varphi(\pi_\lambda)\|_{HS}$"):
    """HS norm against the first chart coordinate, log scale; optional threshold line."""
    lams = np.asarray(lams, float)
    hs = np.asarray(hs, float)
    fig, ax = plt.subplots()
    x = lams[:, 0] if lams.ndim > 1 else lams
    ok = np.isfinite(hs) & (hs > 0)
    ax.semilogy(x[ok], hs[ok], ".", ms=4)
    if eps is not None and eps > 0:
        ax.axhline(eps, color="C3", lw=1, ls="--", label=r"$\varepsilon$")
        ax.legend()
    ax.set_xlabel(r"$\lambda_1$")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    return _save(fig, path)


def route_errors(lams, errors, tol, path, title="direct vs kernel route"):
    fig, ax = plt.subplots()
    ax.semilogy(lams, errors, "o-", ms=4)
    ax.axhline(tol, color="C3", lw=1, ls="--", label=f"tolerance {tol:g}")
    ax.set_xlabel(r"$\lambda$")
    ax.set_ylabel("relative HS error")
    ax.set_title(title)
    ax.legend()
    return _save(fig, path)


def plancherel_curves(lams, integrands, path, title="Plancherel integrand"):
    """One curve per test function of ``R(lambda) ||.||_HS^2``."""
    fig, ax = plt.subplots()
    for row in np.atleast_2d(integrands):
        ax.plot(lams, row, lw=1)
    ax.set_xlabel(r"$\lambda$")
    ax.set_ylabel(r"$R(\lambda)\,\|\hat\varphi(\pi_\lambda)\|_{HS}^2$")
    ax.set_title(title)
    return _save(fig, path)


def operator_heatmap(M, x_nodes, path, title=""):
    fig, ax = plt.subplots(figsize=(4.6, 4.0))
    ext = [x_nodes[0], x_nodes[-1], x_nodes[-1], x_nodes[0]]
    im = ax.imshow(np.abs(M), extent=ext, cmap="viridis")
    fig.colorbar(im, ax=ax, shrink=0.85)
    ax.set_xlabel("x")
    ax.set_ylabel(r"$x_1$")
    ax.set_title(title)
    ax.grid(False)
    return _save(fig, path)


def singular_values(lams, smin, smax, path, title="invertibility probe"):
    fig, ax = plt.subplots()
    ax.semilogy(lams, smax, ".-", label=r"$\sigma_{max}$")
    ax.semilogy(lams, np.maximum(smin, 1e-300), ".-", label=r"$\sigma_{min}$")
    ax.set_xlabel(r"$\lambda_1$")
    ax.set_ylabel("singular value")
    ax.set_title(title)
    ax.legend()
    return _save(fig, path)
