"""Oracle tests for the signal-processing primitives.

Every oracle here is an independent brute-force recomputation (plain Python
loops or a manual FFT construction), not a call back into the module.
"""

import numpy as np
import pytest

from resprate.dsp import (FilterSpec, PeakConstraints, apply_filter,
                          design_sos, detrend_linear, filter_gain, find_peaks,
                          hilbert_envelope, moving_average, moving_variance,
                          resample_linear, window_samples)


# ---------------------------------------------------------------- oracles

def naive_moving_average(x, w):
    n = len(x)
    half_lo = w // 2
    half_hi = w - 1 - half_lo
    out = np.empty(n)
    for i in range(n):
        lo = max(i - half_lo, 0)
        hi = min(i + half_hi, n - 1)
        out[i] = np.mean(x[lo:hi + 1])
    return out


def naive_moving_variance(x, w):
    n = len(x)
    half_lo = w // 2
    half_hi = w - 1 - half_lo
    out = np.empty(n)
    for i in range(n):
        lo = max(i - half_lo, 0)
        hi = min(i + half_hi, n - 1)
        chunk = x[lo:hi + 1]
        out[i] = np.var(chunk, ddof=1) if chunk.size > 1 else 0.0
    return out


def naive_envelope(x):
    """One-sided spectrum doubling done by hand."""
    n = len(x)
    spectrum = np.fft.fft(x)
    gain = np.zeros(n)
    gain[0] = 1.0
    if n % 2 == 0:
        gain[n // 2] = 1.0
        gain[1:n // 2] = 2.0
    else:
        gain[1:(n + 1) // 2] = 2.0
    return np.abs(np.fft.ifft(spectrum * gain))


def naive_peaks(x, rate, min_distance_s, min_height=None, height_is_fraction=False):
    n = len(x)
    cands = [i for i in range(1, n - 1) if x[i - 1] < x[i] >= x[i + 1]]
    if cands and min_height is not None:
        floor = min_height
        if height_is_fraction:
            floor = min_height * max(x[i] for i in cands)
        cands = [i for i in cands if x[i] >= floor]
    min_gap = min_distance_s * rate - 1e-9
    kept = []
    for i in sorted(cands, key=lambda j: (-x[j], j)):
        if all(abs(i - j) >= min_gap for j in kept):
            kept.append(i)
    return sorted(kept)


# ---------------------------------------------------------------- filters

def test_filter_spec_validation():
    with pytest.raises(ValueError):
        FilterSpec("notch", (50.0,))
    with pytest.raises(ValueError):
        FilterSpec("bandpass", (200.0,))
    with pytest.raises(ValueError):
        FilterSpec("bandpass", (800.0, 200.0))
    with pytest.raises(ValueError):
        FilterSpec("lowpass", (-5.0,))
    with pytest.raises(ValueError):
        FilterSpec("lowpass", (5.0,), order=0)


def test_design_rejects_cutoff_at_nyquist():
    with pytest.raises(ValueError):
        design_sos(FilterSpec("highpass", (200.0,)), 400.0)


def test_bandpass_tone_selectivity():
    """A 400 Hz tone passes the [200, 800] band; 50 Hz and 1800 Hz do not."""
    rate = 4410.0
    t = np.arange(int(rate * 2.0)) / rate
    spec = FilterSpec("bandpass", (200.0, 800.0))
    for freq, expect_pass in [(400.0, True), (50.0, False), (1800.0, False)]:
        x = np.sin(2 * np.pi * freq * t)
        y = apply_filter(x, rate, spec)
        core = slice(int(rate * 0.5), int(rate * 1.5))
        ratio = np.sqrt(np.mean(y[core] ** 2) / np.mean(x[core] ** 2))
        if expect_pass:
            assert 0.95 < ratio < 1.05
        else:
            assert ratio < 0.02


def test_filter_gain_matches_measured_tone_gain():
    rate = 2100.0
    spec = FilterSpec("highpass", (200.0,))
    t = np.arange(int(rate * 4.0)) / rate
    for freq in (60.0, 150.0, 300.0, 700.0):
        x = np.sin(2 * np.pi * freq * t)
        y = apply_filter(x, rate, spec)
        core = slice(int(rate * 1.0), int(rate * 3.0))
        measured = np.sqrt(np.mean(y[core] ** 2) / np.mean(x[core] ** 2))
        predicted = filter_gain(spec, rate, [freq])[0]
        assert abs(measured - predicted) < 0.02


def test_zero_phase_preserves_symmetry():
    # Forward-backward filtering must not shift a symmetric pulse.
    rate = 1000.0
    n = 2001
    t = (np.arange(n) - n // 2) / rate
    x = np.exp(-0.5 * (t / 0.05) ** 2)
    y = apply_filter(x, rate, FilterSpec("lowpass", (40.0,)))
    assert np.allclose(y, y[::-1], atol=1e-9)


def test_single_pass_mode_is_causal_shifted():
    rate = 1000.0
    x = np.zeros(500)
    x[100] = 1.0
    y = apply_filter(x, rate, FilterSpec("lowpass", (50.0,), zero_phase=False))
    assert np.all(np.abs(y[:100]) < 1e-12)  # nothing before the impulse


def test_zero_phase_needs_enough_samples():
    with pytest.raises(ValueError):
        apply_filter(np.ones(12), 100.0, FilterSpec("lowpass", (10.0,)))


def test_gain_is_squared_for_zero_phase():
    spec1 = FilterSpec("lowpass", (100.0,), zero_phase=False)
    spec2 = FilterSpec("lowpass", (100.0,), zero_phase=True)
    freqs = [50.0, 100.0, 200.0]
    g1 = filter_gain(spec1, 1000.0, freqs)
    g2 = filter_gain(spec2, 1000.0, freqs)
    assert np.allclose(g2, g1 ** 2, rtol=1e-12)
    # At the corner the one-pass Butterworth magnitude is 1/sqrt(2).
    assert abs(g1[1] - 1 / np.sqrt(2)) < 1e-9


def test_respiration_band_filter_is_stable():
    """The near-DC [0.01, 3] Hz band at 1000 Hz must not blow up."""
    rng = np.random.default_rng(5)
    x = rng.normal(size=10000)
    y = apply_filter(x, 1000.0, FilterSpec("bandpass", (0.01, 3.0)))
    assert np.all(np.isfinite(y))
    assert np.max(np.abs(y)) < 10 * np.max(np.abs(x))


# ------------------------------------------------------ envelope / stats

def test_hilbert_envelope_matches_manual_fft():
    rng = np.random.default_rng(0)
    for n in (8, 9, 64, 101, 1000):
        x = rng.normal(size=n)
        assert np.allclose(hilbert_envelope(x), naive_envelope(x), atol=1e-10)


def test_hilbert_envelope_of_tone_is_flat():
    rate = 1000.0
    t = np.arange(1000) / rate
    x = 0.7 * np.cos(2 * np.pi * 50.0 * t)  # integer cycle count
    env = hilbert_envelope(x)
    assert np.allclose(env, 0.7, atol=1e-9)


def test_hilbert_envelope_rejects_bad_input():
    with pytest.raises(ValueError):
        hilbert_envelope(np.zeros((2, 10)))
    with pytest.raises(ValueError):
        hilbert_envelope(np.array([]))


def test_moving_average_frozen_small_cases():
    x = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
    assert np.allclose(moving_average(x, 3.0, 1.0), [1.5, 2.0, 3.0, 4.0, 4.5])
    # Even windows lean one sample to the left.
    x = np.array([1.0, 2.0, 3.0, 4.0])
    assert np.allclose(moving_average(x, 2.0, 1.0), [1.0, 1.5, 2.5, 3.5])


def test_moving_stats_match_bruteforce():
    rng = np.random.default_rng(42)
    for _ in range(25):
        n = int(rng.integers(2, 60))
        w = int(rng.integers(2, 12))
        x = rng.normal(scale=float(rng.uniform(0.1, 100.0)), size=n)
        ma = moving_average(x, float(w), 1.0)
        mv = moving_variance(x, float(w), 1.0)
        assert np.allclose(ma, naive_moving_average(x, w), rtol=1e-10, atol=1e-12)
        assert np.allclose(mv, naive_moving_variance(x, w), rtol=1e-8, atol=1e-12)


def test_moving_variance_is_offset_invariant():
    # Large common offsets must not degrade the windowed variance.
    rng = np.random.default_rng(3)
    x = rng.normal(size=200)
    a = moving_variance(x, 0.1, 100.0)
    b = moving_variance(x + 1e6, 0.1, 100.0)
    assert np.allclose(a, b, rtol=1e-6, atol=1e-9)


def test_moving_variance_needs_two_samples():
    with pytest.raises(ValueError):
        moving_variance(np.ones(10), 0.001, 100.0)


def test_window_samples_rounds():
    assert window_samples(0.1, 4410.0) == 441
    assert window_samples(0.1, 44100.0) == 4410
    with pytest.raises(ValueError):
        window_samples(0.0001, 100.0)


def test_detrend_removes_any_line():
    t = np.arange(300, dtype=float)
    assert np.allclose(detrend_linear(3.5 * t - 200.0), 0.0, atol=1e-8)
    # The residual is orthogonal to both the constant and the ramp.
    rng = np.random.default_rng(9)
    x = rng.normal(size=300) + 0.03 * t
    r = detrend_linear(x)
    assert abs(r.sum()) < 1e-6
    assert abs((r * t).sum() / t.size) < 1e-4


def test_resample_linear_properties():
    rng = np.random.default_rng(1)
    x = rng.normal(size=400)
    y = resample_linear(x, 400.0, 100.0)
    assert y.size == 100
    assert y[0] == x[0]
    # Doubling hits the midpoints between neighbors.
    up = resample_linear(x, 100.0, 200.0)
    assert np.allclose(up[2::2][:398], x[1:399], atol=1e-12)
    assert np.allclose(up[1:-1:2], 0.5 * (x[:-1] + x[1:])[:399], atol=1e-12)
    same = resample_linear(x, 250.0, 250.0)
    assert np.array_equal(same, x)


# ------------------------------------------------------------ find_peaks

def test_peaks_frozen_cases():
    rate = 1.0
    x = np.array([0.0, 1.0, 0.0, 2.0, 0.0, 3.0, 0.0])
    got = find_peaks(x, rate, PeakConstraints())
    assert got.tolist() == [1, 3, 5]
    # Wide exclusion keeps only the tallest.
    got = find_peaks(x, rate, PeakConstraints(min_distance_s=10.0))
    assert got.tolist() == [5]
    # Plateau: the left edge is the peak.
    x = np.array([0.0, 1.0, 1.0, 0.0])
    assert find_peaks(x, rate, PeakConstraints()).tolist() == [1]
    # Equal heights with mutual exclusion: the earlier one wins.
    x = np.array([0.0, 1.0, 0.0, 1.0, 0.0])
    got = find_peaks(x, rate, PeakConstraints(min_distance_s=3.0))
    assert got.tolist() == [1]


def test_peaks_height_floor():
    x = np.array([0.0, 0.4, 0.0, 1.0, 0.0, 0.015, 0.0])
    got = find_peaks(x, 1.0, PeakConstraints(min_height=0.3))
    assert got.tolist() == [1, 3]
    # Fractional floor: 2% of the tallest candidate (1.0) keeps 0.4 and drops 0.015.
    got = find_peaks(x, 1.0, PeakConstraints(min_height=0.02, height_is_fraction=True))
    assert got.tolist() == [1, 3]


def test_peaks_endpoints_never_qualify():
    x = np.array([5.0, 1.0, 4.0])
    assert find_peaks(x, 1.0, PeakConstraints()).size == 0
    assert find_peaks(np.array([1.0, 2.0]), 1.0, PeakConstraints()).size == 0


def test_peaks_exact_spacing_is_allowed():
    # Peaks exactly min_distance apart must both survive.
    x = np.zeros(21)
    x[5] = 1.0
    x[15] = 0.9
    got = find_peaks(x, 10.0, PeakConstraints(min_distance_s=1.0))
    assert got.tolist() == [5, 15]


def test_peaks_match_bruteforce_randomized():
    rng = np.random.default_rng(2024)
    for trial in range(300):
        n = int(rng.integers(3, 120))
        x = rng.normal(size=n)
        if trial % 3 == 0:
            x = np.round(x)  # force plateaus and height ties
        dist = float(rng.uniform(0.0, 10.0))
        use_floor = bool(rng.integers(2))
        frac = bool(rng.integers(2))
        if use_floor:
            mh = float(rng.uniform(0.01, 1.0)) if frac else float(rng.uniform(-1.0, 1.0))
            c = PeakConstraints(dist, min_height=mh, height_is_fraction=frac)
            expected = naive_peaks(x, 1.0, dist, mh, frac)
        else:
            c = PeakConstraints(dist)
            expected = naive_peaks(x, 1.0, dist)
        got = find_peaks(x, 1.0, c)
        assert got.tolist() == expected, f"trial {trial}"


def test_peaks_reject_2d():
    with pytest.raises(ValueError):
        find_peaks(np.zeros((3, 3)), 1.0, PeakConstraints())
