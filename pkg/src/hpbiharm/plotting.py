"""Static PNG figures for run tables (matplotlib, non-interactive backend)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def convergence_figure(tables, path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for t in tables:
        line, = ax.loglog(t.dofs, t.error, "o-", ms=3, label=f"{t.source}: error")
        ax.loglog(t.dofs, t.eta, "s--", ms=3, color=line.get_color(), label=f"{t.source}: estimator")
    ax.set_xlabel("degrees of freedom")
    ax.set_ylabel("dG-norm error / estimator")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def effectivity_figure(tables, path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for t in tables:
        ax.semilogx(t.dofs, t.effectivity, "o-", ms=3, label=t.source)
    ax.set_xlabel("degrees of freedom")
    ax.set_ylabel("effectivity")
    ax.set_ylim(bottom=0)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def exponential_figure(tables, path) -> Path:
    """Error against the cube root of the dofs; exponential decay is a straight line."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for t in tables:
        ax.semilogy(np.cbrt(t.dofs), t.eta, "o-", ms=3, label=t.source)
    ax.set_xlabel("dofs^(1/3)")
    ax.set_ylabel("estimator")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)
