"""Signal-processing primitives shared by both rate estimators.

apply_filter(x, rate, spec)
    Butterworth-style IIR filtering, optionally zero phase (forward-backward).
hilbert_envelope(x)
    Magnitude of the analytic signal.
moving_average(x, window_s, rate), moving_variance(x, window_s, rate)
    Centered sliding statistics with shrinking windows at the edges.
detrend_linear(x)
    Remove the least-squares straight line.
resample_linear(x, rate_in, rate_out)
    Linear-interpolation resampling onto a uniform grid.
find_peaks(x, rate, constraints)
    Constrained local-maximum detection with greedy distance suppression.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sps


@dataclass(frozen=True)
class FilterSpec:
    """IIR filter description.

    kind is 'lowpass', 'highpass' or 'bandpass'; cutoffs holds one corner
    frequency in Hz (two for bandpass); order is the prototype order;
    zero_phase selects forward-backward application.
    """

    kind: str
    cutoffs: tuple[float, ...]
    order: int = 4
    zero_phase: bool = True

    def __post_init__(self) -> None:
        if self.kind not in ("lowpass", "highpass", "bandpass"):
            raise ValueError(f"unknown filter kind {self.kind!r}")
        n_expected = 2 if self.kind == "bandpass" else 1
        if len(self.cutoffs) != n_expected:
            raise ValueError(
                f"{self.kind} filter needs {n_expected} cutoff(s), got {self.cutoffs}")
        if any(c <= 0 for c in self.cutoffs):
            raise ValueError(f"cutoffs must be positive, got {self.cutoffs}")
        if self.kind == "bandpass" and self.cutoffs[0] >= self.cutoffs[1]:
            raise ValueError(f"bandpass cutoffs must increase, got {self.cutoffs}")
        if self.order < 1:
            raise ValueError(f"order must be >= 1, got {self.order}")


def design_sos(spec: FilterSpec, rate: float) -> np.ndarray:
    """Second-order-section coefficients for the maximally flat design."""
    nyq = rate / 2.0
    if max(spec.cutoffs) >= nyq:
        raise ValueError(
            f"cutoff {max(spec.cutoffs)} Hz is not below Nyquist ({nyq} Hz)")
    wn = spec.cutoffs[0] if len(spec.cutoffs) == 1 else list(spec.cutoffs)
    btype = {"lowpass": "low", "highpass": "high", "bandpass": "bandpass"}[spec.kind]
    return sps.butter(spec.order, wn, btype=btype, fs=rate, output="sos")


def filter_gain(spec: FilterSpec, rate: float, freqs: np.ndarray | list[float]) -> np.ndarray:
    """Amplitude response of apply_filter at the given frequencies (Hz).

    For zero-phase application the effective response is the squared
    magnitude of the one-pass design.
    """
    sos = design_sos(spec, rate)
    _, h = sps.sosfreqz(sos, worN=np.atleast_1d(np.asarray(freqs, dtype=float)), fs=rate)
    mag = np.abs(h)
    return mag ** 2 if spec.zero_phase else mag


def apply_filter(x: np.ndarray, rate: float, spec: FilterSpec) -> np.ndarray:
    """Filter a 1-D signal.

    Zero-phase mode runs the filter forward then backward over the signal
    extended at both ends by reflection, 3 x order samples per side, which
    requires len(x) > 3 x order.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"expected a 1-D signal, got shape {x.shape}")
    sos = design_sos(spec, rate)
    if spec.zero_phase:
        padlen = 3 * spec.order
        if x.size <= padlen:
            raise ValueError(
                f"signal too short for zero-phase filtering: {x.size} samples, "
                f"need more than {padlen}")
        return sps.sosfiltfilt(sos, x, padtype="even", padlen=padlen)
    return sps.sosfilt(sos, x)


def hilbert_envelope(x: np.ndarray) -> np.ndarray:
    """Instantaneous amplitude |analytic signal| of a 1-D input.

    The analytic signal is built from the full-length spectrum with the
    one-sided doubling construction, so the envelope of a pure tone spanning
    an integer number of cycles is flat to float precision.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise ValueError(f"expected a non-empty 1-D signal, got shape {x.shape}")
    return np.abs(sps.hilbert(x))


def window_samples(window_s: float, rate: float) -> int:
    """Window length in samples, rounded to the nearest integer."""
    w = int(round(window_s * rate))
    if w < 1:
        raise ValueError(f"window of {window_s} s is empty at {rate} Hz")
    return w


def _sliding_sums(x: np.ndarray, w: int) -> tuple[np.ndarray, np.ndarray]:
    """Sums and counts over centered windows that shrink at the edges.

    The window for index i covers [i - w//2, i + (w - 1 - w//2)] clipped to
    the signal, i.e. even windows lean one sample to the left.  Direct
    convolution keeps per-output rounding error independent of signal length.
    """
    n = x.size
    half_lo = w // 2
    half_hi = w - 1 - half_lo
    conv = np.convolve(x, np.ones(w), mode="full")
    sums = conv[half_hi:half_hi + n]
    idx = np.arange(n)
    counts = np.minimum(idx + half_hi, n - 1) - np.maximum(idx - half_lo, 0) + 1
    return sums, counts


def moving_average(x: np.ndarray, window_s: float, rate: float) -> np.ndarray:
    """Centered moving mean; edge windows shrink instead of zero-padding."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"expected a 1-D signal, got shape {x.shape}")
    w = window_samples(window_s, rate)
    if x.size == 0:
        return x.copy()
    sums, counts = _sliding_sums(x, w)
    return sums / counts


def moving_variance(x: np.ndarray, window_s: float, rate: float) -> np.ndarray:
    """Centered moving variance, unbiased (n-1) normalization.

    Edge windows shrink like moving_average; a window holding a single
    sample reports zero.  Requires a window of at least two samples.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"expected a 1-D signal, got shape {x.shape}")
    w = window_samples(window_s, rate)
    if w < 2:
        raise ValueError(f"variance window must span >= 2 samples, got {w}")
    if x.size == 0:
        return x.copy()
    # Shifting by the global mean keeps the sums well conditioned without
    # changing any window's variance.
    xc = x - x.mean()
    sums, counts = _sliding_sums(xc, w)
    sumsq, _ = _sliding_sums(xc * xc, w)
    mean = sums / counts
    out = np.zeros_like(xc)
    multi = counts > 1
    out[multi] = (sumsq[multi] - counts[multi] * mean[multi] ** 2) / (counts[multi] - 1)
    return np.maximum(out, 0.0)


def detrend_linear(x: np.ndarray) -> np.ndarray:
    """Subtract the least-squares straight line fitted over the sample index."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("detrend needs a 1-D signal with at least 2 samples")
    t = np.arange(x.size, dtype=np.float64)
    slope, intercept = np.polyfit(t, x, 1)
    return x - (slope * t + intercept)


def resample_linear(x: np.ndarray, rate_in: float, rate_out: float) -> np.ndarray:
    """Linear interpolation onto a uniform rate_out grid over the same span.

    Output length is round(duration * rate_out) with duration = len(x)/rate_in;
    the first sample is preserved exactly, and queries past the last input
    sample hold its value.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise ValueError(f"expected a non-empty 1-D signal, got shape {x.shape}")
    if rate_in <= 0 or rate_out <= 0:
        raise ValueError("rates must be positive")
    if rate_in == rate_out:
        return x.copy()
    n_out = int(round(x.size / rate_in * rate_out))
    t_out = np.arange(n_out, dtype=np.float64) / rate_out
    t_in = np.arange(x.size, dtype=np.float64) / rate_in
    return np.interp(t_out, t_in, x)


@dataclass(frozen=True)
class PeakConstraints:
    """Constraints for find_peaks.

    min_distance_s: smallest allowed spacing between returned peaks.
    min_height: absolute height floor, or a fraction of the tallest
        candidate when height_is_fraction is set; None disables the floor.
    """

    min_distance_s: float = 0.0
    min_height: float | None = None
    height_is_fraction: bool = False

    def __post_init__(self) -> None:
        if self.min_distance_s < 0:
            raise ValueError(f"min_distance_s must be >= 0, got {self.min_distance_s}")
        if self.height_is_fraction:
            if self.min_height is None or not 0.0 < self.min_height <= 1.0:
                raise ValueError(
                    f"fractional min_height must lie in (0, 1], got {self.min_height}")


def find_peaks(x: np.ndarray, rate: float, constraints: PeakConstraints) -> np.ndarray:
    """Indices of accepted local maxima, in increasing order.

    A candidate is any i with x[i-1] < x[i] >= x[i+1] (the left edge of a
    plateau counts, array ends never do).  Candidates below the height floor
    are dropped; the rest are accepted greedily in order of descending
    height — earlier index wins among equal heights — rejecting any
    candidate closer than min_distance_s to an already accepted peak.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"expected a 1-D signal, got shape {x.shape}")
    if x.size < 3:
        return np.empty(0, dtype=np.intp)
    rising = x[:-2] < x[1:-1]
    falling = x[1:-1] >= x[2:]
    cand = np.nonzero(rising & falling)[0] + 1
    if cand.size == 0:
        return cand
    heights = x[cand]
    if constraints.min_height is not None:
        floor = constraints.min_height
        if constraints.height_is_fraction:
            floor = constraints.min_height * heights.max()
        keep = heights >= floor
        cand, heights = cand[keep], heights[keep]
        if cand.size == 0:
            return cand
    # Tallest first; np.lexsort's last key is primary, so sort on
    # (-height, index) to break ties toward the earlier index.
    order = np.lexsort((cand, -heights))
    min_gap = constraints.min_distance_s * rate - 1e-9  # tolerate grid rounding
    accepted: list[int] = []
    for i in cand[order]:
        if all(abs(int(i) - j) >= min_gap for j in accepted):
            accepted.append(int(i))
    return np.array(sorted(accepted), dtype=np.intp)
