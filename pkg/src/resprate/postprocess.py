"""Turn per-sample detector output into validated respiratory events.

The chain, applied to a {0,1} prediction series:

  1. 0.1 s centered moving average, kept where it reaches 0.1;
  2. variance gate: a surviving run is discarded when the 0.1 s moving
     variance of the absolute microphone signal never reaches the gate
     threshold inside it (hoofbeat-free silence rejection);
  3. events are the onsets of the remaining runs;
  4. per analysis window, an event must be confirmed by a peak of the
     smoothed, detrended signal envelope inside its run;
  5. events closer than 0.30 s to their predecessor are dropped (the
     earlier one wins).

The gate threshold is configurable because its usable value depends on the
amplitude scale of the recording; see calibrate_variance_gate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import (PeakConstraints, detrend_linear, find_peaks,
                  hilbert_envelope, moving_average, moving_variance)
from .labels import AnalysisWindow, RateSeries, rate_in_window, RateEntry

SMOOTH_WINDOW_S = 0.1
KEEP_THRESHOLD = 0.1
VARIANCE_WINDOW_S = 0.1
DEFAULT_VARIANCE_THRESHOLD = 0.8
MIN_EVENT_SPACING_S = 0.30


@dataclass(frozen=True)
class EventSeries:
    """Validated respiratory events (onset seconds) for one analysis window."""

    window: AnalysisWindow
    times: tuple[float, ...]
    provenance: str

    def __post_init__(self) -> None:
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError(f"event times must increase, got {self.times}")


def smooth_and_threshold(pred: np.ndarray, rate: float,
                         window_s: float = SMOOTH_WINDOW_S,
                         threshold: float = KEEP_THRESHOLD) -> np.ndarray:
    """Moving-average the {0,1} series and re-binarize at the threshold."""
    pred = np.asarray(pred, dtype=np.float64)
    if np.any((pred != 0) & (pred != 1)):
        raise ValueError("prediction series must be binary")
    return (moving_average(pred, window_s, rate) >= threshold).astype(np.int8)


def mask_runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Half-open [start, stop) sample index ranges of the 1-runs."""
    mask = np.asarray(mask).astype(bool)
    if mask.size == 0:
        return []
    edges = np.flatnonzero(np.diff(np.concatenate(([False], mask, [False]))))
    return [(int(edges[i]), int(edges[i + 1])) for i in range(0, edges.size, 2)]


def variance_gate(mask: np.ndarray, signal: np.ndarray, rate: float,
                  threshold: float = DEFAULT_VARIANCE_THRESHOLD) -> np.ndarray:
    """Zero out runs whose peak moving variance of |signal| stays below threshold.

    signal is the single channel the detector looked at, or the channel mean
    when it looked at both.  A threshold of 0 keeps every run.
    """
    mask = np.asarray(mask)
    signal = np.asarray(signal, dtype=np.float64)
    if signal.ndim == 2:
        signal = signal.mean(axis=0)
    if signal.shape != mask.shape:
        raise ValueError(f"mask/signal length mismatch: {mask.shape} vs {signal.shape}")
    if threshold < 0:
        raise ValueError("variance threshold must be >= 0")
    mv = moving_variance(np.abs(signal), VARIANCE_WINDOW_S, rate)
    out = mask.astype(np.int8).copy()
    for start, stop in mask_runs(mask):
        if mv[start:stop].max() < threshold:
            out[start:stop] = 0
    return out


def calibrate_variance_gate(signal: np.ndarray, rate: float
                            ) -> dict[str, float]:
    """Percentiles of the gated statistic, to help pick a usable threshold.

    Returns the 5/25/50/75/95th percentiles and max of the 0.1 s moving
    variance of |signal|.  A threshold between the silent-floor percentiles
    and the in-event values separates the two regimes.
    """
    signal = np.asarray(signal, dtype=np.float64)
    if signal.ndim == 2:
        signal = signal.mean(axis=0)
    mv = moving_variance(np.abs(signal), VARIANCE_WINDOW_S, rate)
    p5, p25, p50, p75, p95 = np.percentile(mv, [5, 25, 50, 75, 95])
    return {"p5": float(p5), "p25": float(p25), "p50": float(p50),
            "p75": float(p75), "p95": float(p95), "max": float(mv.max())}


def enforce_min_spacing(times: list[float],
                        min_spacing_s: float = MIN_EVENT_SPACING_S) -> list[float]:
    """Drop events closer than min_spacing_s to the last kept one (earlier wins)."""
    kept: list[float] = []
    for t in times:
        if not kept or t - kept[-1] >= min_spacing_s - 1e-9:
            kept.append(t)
    return kept


def confirm_with_envelope(runs: list[tuple[int, int]], signal: np.ndarray,
                          rate: float, window: AnalysisWindow,
                          provenance: str = "tcn") -> EventSeries:
    """Validate candidate runs of one analysis window against the envelope.

    runs holds [start, stop) sample indices relative to the window slice;
    signal is that slice of the channel the detector consumed.  A run
    survives only if at least one peak of the smoothed, detrended envelope
    (minimum spacing 0.30 s) falls inside it; surviving onsets closer than
    0.30 s to their predecessor are dropped, keeping the earlier one.
    """
    signal = np.asarray(signal, dtype=np.float64)
    if signal.ndim == 2:
        signal = signal.mean(axis=0)
    times: list[float] = []
    if runs and signal.size > 3:
        env = moving_average(hilbert_envelope(signal), SMOOTH_WINDOW_S, rate)
        env = detrend_linear(env)
        peaks = find_peaks(env, rate, PeakConstraints(MIN_EVENT_SPACING_S))
        for start, stop in runs:
            stop = min(stop, signal.size)
            if np.any((peaks >= start) & (peaks < stop)):
                times.append(window.start + start / rate)
    times = enforce_min_spacing(sorted(times))
    return EventSeries(window, tuple(times), provenance)


def detect_events(pred: np.ndarray, signal: np.ndarray, rate: float,
                  wins: list[AnalysisWindow],
                  variance_threshold: float = DEFAULT_VARIANCE_THRESHOLD,
                  provenance: str = "tcn") -> list[EventSeries]:
    """Full post-processing chain over a whole recording.

    pred and signal cover the same samples at the same rate.  Runs are
    assigned to every window containing their onset, then validated per
    window; with the default 50% overlap an event can appear in two windows,
    which is what windowed rate estimation expects.
    """
    pred = np.asarray(pred)
    signal = np.asarray(signal, dtype=np.float64)
    if signal.ndim == 2:
        signal = signal.mean(axis=0)
    if pred.shape != signal.shape:
        raise ValueError(f"pred/signal length mismatch: {pred.shape} vs {signal.shape}")
    mask = smooth_and_threshold(pred, rate)
    mask = variance_gate(mask, signal, rate, threshold=variance_threshold)
    runs = mask_runs(mask)
    out = []
    for w in wins:
        i_lo = int(round(w.start * rate))
        i_hi = min(int(round(w.end * rate)), signal.size)
        local = [(a - i_lo, min(b, i_hi) - i_lo)
                 for a, b in runs if i_lo <= a < i_hi]
        out.append(confirm_with_envelope(local, signal[i_lo:i_hi], rate, w,
                                         provenance=provenance))
    return out


def rates_from_event_series(series: list[EventSeries], source: str) -> RateSeries:
    """Windowed rates from per-window validated events."""
    entries = []
    for s in series:
        rr, n = rate_in_window(np.asarray(s.times), s.window)
        entries.append(RateEntry(s.window, rr, n))
    return RateSeries(tuple(entries), source)
