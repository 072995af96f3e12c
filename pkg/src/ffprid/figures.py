"""Matplotlib rendering of evaluation curves to image files.

The CSV/JSON outputs remain the machine-readable contract; these figures
are companion artifacts written next to them on request (--figures).
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .cmc import CmcCurve
from .dataio import PathLike
from .engine import SweepResult
from .errors import ValidationError

_ETA_COLORS = ["tab:blue", "tab:orange", "tab:green", "tab:red", "tab:purple",
               "tab:brown", "tab:pink", "tab:gray"]


def save_sweep_figures(
    results: Sequence[SweepResult], out_base: PathLike
) -> list[Path]:
    """One figure per tau: FR (solid) and TVR (dashed) against beta, per eta.

    Files are written as ``{out_base}_tau{t}.png``; cells with undefined
    metrics leave gaps in the curves.
    """
    if not results:
        raise ValidationError("no sweep results to plot")
    out_base = Path(out_base)
    taus = sorted({r.tau for r in results})
    etas = sorted({r.eta for r in results})
    written = []
    for tau in taus:
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        for i, eta in enumerate(etas):
            cells = sorted(
                (r for r in results if r.tau == tau and r.eta == eta),
                key=lambda r: r.beta,
            )
            betas = [r.beta for r in cells]
            color = _ETA_COLORS[i % len(_ETA_COLORS)]
            fr = [r.fr.value if r.fr.defined else float("nan") for r in cells]
            tvr = [r.tvr.value if r.tvr.defined else float("nan") for r in cells]
            ax.plot(betas, fr, color=color, linestyle="-",
                    label=f"FR, eta={eta}")
            ax.plot(betas, tvr, color=color, linestyle="--",
                    label=f"TVR, eta={eta}")
        ax.set_xlabel("beta (alert threshold)")
        ax.set_ylabel("rate")
        ax.set_ylim(-0.02, 1.02)
        ax.set_title(f"Finding rate / true validation rate, tau={tau}")
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize=8)
        path = out_base.parent / f"{out_base.name}_tau{tau}.png"
        fig.savefig(path, dpi=120, bbox_inches="tight")
        plt.close(fig)
        written.append(path)
    return written


def save_cmc_figure(curve: CmcCurve, path: PathLike) -> Path:
    """Plot CMC values against rank cutoff k."""
    if not curve.defined:
        raise ValidationError("cannot plot an undefined CMC curve")
    path = Path(path)
    ranks = list(range(1, len(curve.values) + 1))
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(ranks, list(curve.values), marker="o", markersize=3)
    ax.set_xlabel("rank k")
    ax.set_ylabel("matching rate")
    ax.set_ylim(-0.02, 1.02)
    ax.set_title(f"CMC over {curve.num_queries} queries")
    ax.grid(True, alpha=0.3)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def save_pr_figure(
    points: Sequence[tuple[float, float]], ap, path: PathLike
) -> Path:
    """Plot the precision/recall trace of ranked detections."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    if points:
        ax.plot([r for r, _ in points], [p for _, p in points], drawstyle="steps-post")
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_xlim(-0.02, 1.02)
    ax.set_ylim(-0.02, 1.02)
    title = "Precision / recall"
    if ap is not None:
        title += f" (AP = {ap:.4f})"
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path
