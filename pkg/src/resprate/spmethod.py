"""Signal-processing respiratory-rate estimator (no learning involved).

One channel goes through: mean removal -> rate-dependent front-end filter
(bandpass [200, 800] Hz at 4410/2100 Hz, 200 Hz highpass at 1050/490 Hz,
where the band no longer fits under Nyquist) -> envelope -> 0.1 s smoothing
-> linear resampling to the 1000 Hz working rate -> [0.01, 3] Hz bandpass
over the full segment.  Each 10 s analysis window is then detrended, its
peaks (>= 0.30 s apart, height >= 2% of the tallest candidate) become the
respiratory events, and the windowed rate follows from the cycle durations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import AudioSegment
from .dsp import (FilterSpec, PeakConstraints, apply_filter, detrend_linear,
                  find_peaks, hilbert_envelope, moving_average, resample_linear)
from .errors import SampleRateError
from .labels import (AnalysisWindow, RateEntry, RateSeries, cycle_durations,
                     rr_from_durations, windows)


@dataclass(frozen=True)
class SpConfig:
    """Tuning knobs of the estimator; defaults are the published chain."""

    bandpass_rates: tuple[float, ...] = (2100.0, 4410.0)
    highpass_rates: tuple[float, ...] = (490.0, 1050.0)
    front_band_hz: tuple[float, float] = (200.0, 800.0)
    front_highpass_hz: float = 200.0
    envelope_smooth_s: float = 0.1
    work_rate_hz: float = 1000.0
    respiration_band_hz: tuple[float, float] = (0.01, 3.0)
    peak_min_distance_s: float = 0.30
    peak_min_height_frac: float = 0.02
    filter_order: int = 4


def front_end_filter(rate: float, cfg: SpConfig = SpConfig()) -> FilterSpec:
    """The rate-dependent first filter stage (exposed for introspection)."""
    if rate in cfg.bandpass_rates:
        return FilterSpec("bandpass", cfg.front_band_hz, cfg.filter_order)
    if rate in cfg.highpass_rates:
        return FilterSpec("highpass", (cfg.front_highpass_hz,), cfg.filter_order)
    supported = sorted(cfg.bandpass_rates + cfg.highpass_rates)
    raise SampleRateError(
        f"unsupported sample rate {rate} Hz; the estimator handles {supported}")


def respiratory_signal(seg: AudioSegment, cfg: SpConfig = SpConfig()) -> np.ndarray:
    """Slow respiration-band waveform at the working rate.

    seg must hold exactly one channel; the estimator is defined per channel.
    Output length is round(duration * work_rate).
    """
    if seg.n_channels != 1:
        raise ValueError(
            "the estimator works on a single channel; select c1 or c2 first")
    x = seg.samples[0]
    x = x - x.mean()
    x = apply_filter(x, seg.sample_rate, front_end_filter(seg.sample_rate, cfg))
    env = moving_average(hilbert_envelope(x), cfg.envelope_smooth_s, seg.sample_rate)
    env = resample_linear(env, seg.sample_rate, cfg.work_rate_hz)
    return apply_filter(env, cfg.work_rate_hz,
                        FilterSpec("bandpass", cfg.respiration_band_hz, cfg.filter_order))


def window_events(resp: np.ndarray, window: AnalysisWindow,
                  cfg: SpConfig = SpConfig()) -> np.ndarray:
    """Respiratory event times in one window of the slow waveform."""
    rate = cfg.work_rate_hz
    i_lo = int(round(window.start * rate))
    i_hi = min(int(round(window.end * rate)), resp.size)
    chunk = resp[i_lo:i_hi]
    if chunk.size < 3:
        return np.empty(0, dtype=np.float64)
    chunk = detrend_linear(chunk)
    peaks = find_peaks(chunk, rate, PeakConstraints(
        cfg.peak_min_distance_s, cfg.peak_min_height_frac, height_is_fraction=True))
    return window.start + peaks / rate


def estimate_rates(seg: AudioSegment, window_s: float = 10.0, hop_s: float = 5.0,
                   cfg: SpConfig = SpConfig()
                   ) -> tuple[RateSeries, list[tuple[AnalysisWindow, np.ndarray]]]:
    """Windowed rates plus the per-window events they came from."""
    resp = respiratory_signal(seg, cfg)
    wins = windows(seg.duration, window_s, hop_s)
    per_window = [(w, window_events(resp, w, cfg)) for w in wins]
    entries = []
    for w, events in per_window:
        durations = cycle_durations(events)
        entries.append(RateEntry(w, rr_from_durations(durations), int(durations.size)))
    return RateSeries(tuple(entries), source="sp"), per_window
