"""Figure rendering for the report path.

Every report-producing command drops these PNGs next to its CSV output:
agreement (Bland-Altman), correlation, windowed-rate overlays and training
curves.  All functions write a file and return its path.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .labels import RateSeries
from .metrics import AgreementReport

_DPI = 150


def bland_altman_figure(report: AgreementReport, path: str | Path) -> Path:
    """Difference-vs-mean scatter with bias and limits of agreement."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6, 4))
    if report.ba_coords:
        means, diffs = zip(*report.ba_coords)
        ax.plot(means, diffs, "o", ms=4, alpha=0.6)
    if report.mod is not None:
        ax.axhline(report.mod, color="k", lw=1.2,
                   label=f"bias {report.mod:.2f} bpm")
        if report.loa is not None:
            for sign in (1, -1):
                ax.axhline(report.mod + sign * report.loa, color="k", lw=1.0,
                           ls=":", label="±1.96 sd" if sign == 1 else None)
    ax.set_xlabel("Mean of reference and estimate (bpm)")
    ax.set_ylabel("Reference − estimate (bpm)")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def correlation_figure(report: AgreementReport, path: str | Path) -> Path:
    """Estimate vs reference with the identity line and the OLS fit."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(5, 5))
    if report.pairs:
        ref, est = zip(*report.pairs)
        ax.plot(ref, est, "o", ms=4, alpha=0.6)
        lo = min(min(ref), min(est))
        hi = max(max(ref), max(est))
        pad = 0.05 * (hi - lo) if hi > lo else 1.0
        lo, hi = lo - pad, hi + pad
        ax.plot([lo, hi], [lo, hi], "k-", lw=1, label="identity")
        if report.slope is not None:
            xs = (lo, hi)
            ys = tuple(report.slope * x + report.intercept for x in xs)
            ax.plot(xs, ys, "r-", lw=1.2,
                    label=f"fit (R² = {report.r2:.3f})")
        ax.set_xlim(lo, hi)
        ax.set_ylim(lo, hi)
    ax.set_xlabel("Reference rate (bpm)")
    ax.set_ylabel("Estimated rate (bpm)")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def rates_figure(series_list: Sequence[RateSeries], path: str | Path) -> Path:
    """Windowed rates over time, one line per source."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(7, 3.5))
    for series in series_list:
        starts = [e.window.start for e in series.entries if e.rr is not None]
        rates = [e.rr for e in series.entries if e.rr is not None]
        ax.plot(starts, rates, marker="o", ms=3, label=series.source)
    ax.set_xlabel("Window start (s)")
    ax.set_ylabel("Respiratory rate (bpm)")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def training_curve_figure(history: Sequence[tuple[int, float, float]],
                          path: str | Path) -> Path:
    """Train/validation loss per epoch."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6, 3.5))
    if history:
        epochs = [h[0] for h in history]
        ax.plot(epochs, [h[1] for h in history], label="train")
        ax.plot(epochs, [h[2] for h in history], label="validation")
    ax.set_xlabel("Epoch")
    ax.set_ylabel("Cross-entropy")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path
