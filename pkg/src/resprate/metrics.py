"""Agreement and classification metrics for windowed rate estimates.

Conventions, fixed once here so every report agrees:
  * F1 with zero precision and recall is defined as 0, not NaN.
  * MAE for one evaluation run is the mean absolute difference over the
    windows where both series produced a rate.
  * Spread of per-run MAEs is the sample standard deviation (n-1) and the
    reported confidence halfwidth is 1.96 * sd / sqrt(n).
  * Bland-Altman differences are reference minus estimate; limits of
    agreement are +/- 1.96 * sd of the differences around the mean.
  * Quantiles interpolate linearly between order statistics.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .labels import RateSeries


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def score_samples(truth: np.ndarray, pred: np.ndarray) -> ConfusionCounts:
    """Sample-level confusion counts for two equal-length {0,1} series."""
    truth = np.asarray(truth).astype(bool)
    pred = np.asarray(pred).astype(bool)
    if truth.shape != pred.shape:
        raise ValueError(f"length mismatch: {truth.shape} vs {pred.shape}")
    return ConfusionCounts(
        tp=int(np.sum(truth & pred)),
        fp=int(np.sum(~truth & pred)),
        fn=int(np.sum(truth & ~pred)),
        tn=int(np.sum(~truth & ~pred)),
    )


def precision_recall_f1(counts: ConfusionCounts) -> tuple[float, float, float]:
    """Precision, recall and their harmonic mean; all-zero cases map to 0."""
    p = counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp else 0.0
    r = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f1


def f1_score(truth: np.ndarray, pred: np.ndarray) -> float:
    return precision_recall_f1(score_samples(truth, pred))[2]


def paired_rates(ref: RateSeries, est: RateSeries) -> list[tuple[float, float]]:
    """(reference, estimate) pairs over the windows where both have a rate.

    The two series must sit on the same window grid.
    """
    if len(ref.entries) != len(est.entries):
        raise ValueError(
            f"window grids differ: {len(ref.entries)} vs {len(est.entries)} windows")
    pairs = []
    for a, b in zip(ref.entries, est.entries):
        if a.window.index != b.window.index or a.window.start != b.window.start:
            raise ValueError(
                f"window grids differ at index {a.window.index}: "
                f"{a.window.start} vs {b.window.start}")
        if a.rr is not None and b.rr is not None:
            pairs.append((a.rr, b.rr))
    return pairs


def mae(pairs: Sequence[tuple[float, float]]) -> float | None:
    """Mean absolute reference-estimate difference; None without any pair."""
    if not pairs:
        return None
    diffs = [abs(r - e) for r, e in pairs]
    return float(np.mean(diffs))


def mae_between(ref: RateSeries, est: RateSeries) -> float | None:
    return mae(paired_rates(ref, est))


def aggregate_mae(values: Sequence[float]) -> tuple[float, float | None, float | None]:
    """(mean, sd, ci_halfwidth) over per-run MAEs; sd/ci need >= 2 runs."""
    if not values:
        raise ValueError("no MAE values to aggregate")
    arr = np.asarray(values, dtype=np.float64)
    mean = float(arr.mean())
    if arr.size < 2:
        return mean, None, None
    sd = float(arr.std(ddof=1))
    return mean, sd, float(1.96 * sd / np.sqrt(arr.size))


def bland_altman(pairs: Sequence[tuple[float, float]]
                 ) -> tuple[float, float, list[tuple[float, float]]]:
    """(mean difference, limit-of-agreement halfwidth, plot coordinates).

    Coordinates are ((ref+est)/2, ref-est) per pair, ready for plotting.
    """
    if len(pairs) < 2:
        raise ValueError("Bland-Altman needs at least two pairs")
    arr = np.asarray(pairs, dtype=np.float64)
    diffs = arr[:, 0] - arr[:, 1]
    means = arr.mean(axis=1)
    mod = float(diffs.mean())
    loa = float(1.96 * diffs.std(ddof=1))
    return mod, loa, list(zip(means.tolist(), diffs.tolist()))


def linear_fit(pairs: Sequence[tuple[float, float]]) -> tuple[float, float, float]:
    """Ordinary least squares of estimate on reference: (slope, intercept, r2)."""
    if len(pairs) < 2:
        raise ValueError("linear fit needs at least two pairs")
    arr = np.asarray(pairs, dtype=np.float64)
    ref, est = arr[:, 0], arr[:, 1]
    if np.ptp(ref) == 0:
        raise ValueError("reference rates are constant; slope is undefined")
    slope, intercept = np.polyfit(ref, est, 1)
    fitted = slope * ref + intercept
    ss_res = float(np.sum((est - fitted) ** 2))
    ss_tot = float(np.sum((est - est.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot else 1.0
    return float(slope), float(intercept), r2


def median_iqr(values: Sequence[float]) -> tuple[float, float]:
    """Median and interquartile range with linear-interpolation quantiles."""
    if not values:
        raise ValueError("no values")
    arr = np.asarray(values, dtype=np.float64)
    q1, q2, q3 = np.percentile(arr, [25, 50, 75], method="linear")
    return float(q2), float(q3 - q1)


def timing_ratio(elapsed_s: float, audio_s: float) -> float:
    """Compute time as a percentage of the audio duration it covered."""
    if audio_s <= 0:
        raise ValueError("audio duration must be positive")
    if elapsed_s < 0:
        raise ValueError("elapsed time cannot be negative")
    return 100.0 * elapsed_s / audio_s


def time_call(fn: Callable, *args, **kwargs) -> tuple[object, float]:
    """Run fn and return (result, elapsed seconds on the monotonic clock)."""
    t0 = time.perf_counter()
    result = fn(*args, **kwargs)
    return result, time.perf_counter() - t0


@dataclass(frozen=True)
class AgreementReport:
    """Everything the evaluation tables and plots need for one configuration."""

    per_run_mae: tuple[float, ...]
    mae_mean: float
    mae_sd: float | None
    mae_ci: float | None
    mod: float | None
    loa: float | None
    slope: float | None
    intercept: float | None
    r2: float | None
    pairs: tuple[tuple[float, float], ...]
    ba_coords: tuple[tuple[float, float], ...]


def agreement_report(runs: Sequence[tuple[RateSeries, RateSeries]]) -> AgreementReport:
    """Aggregate (reference, estimate) series pairs from one or more runs.

    MAE statistics run over per-run MAEs; Bland-Altman and the correlation
    fit pool the window pairs of all runs.
    """
    maes = []
    pooled: list[tuple[float, float]] = []
    for ref, est in runs:
        pairs = paired_rates(ref, est)
        value = mae(pairs)
        if value is not None:
            maes.append(value)
        pooled.extend(pairs)
    if not maes:
        raise ValueError("no window had rates from both series in any run")
    mean, sd, ci = aggregate_mae(maes)
    mod = loa = slope = intercept = r2 = None
    coords: list[tuple[float, float]] = []
    if len(pooled) >= 2:
        mod, loa, coords = bland_altman(pooled)
        try:
            slope, intercept, r2 = linear_fit(pooled)
        except ValueError:
            pass  # constant reference: leave the fit undefined
    return AgreementReport(
        per_run_mae=tuple(maes), mae_mean=mean, mae_sd=sd, mae_ci=ci,
        mod=mod, loa=loa, slope=slope, intercept=intercept, r2=r2,
        pairs=tuple(pooled), ba_coords=tuple(coords),
    )
