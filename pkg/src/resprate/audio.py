"""WAV ingestion, channel handling, segment extraction and plain decimation.

Channel convention used throughout: channel index 0 is "channel 1" (microphone
over the mid nostril), channel index 1 is "channel 2" (microphone near the left
nostril, the louder of the two in field recordings).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .errors import AudioFormatError, SampleRateError

#: Sample rates the analysis pipeline is designed for: the native recording
#: rate and its plain decimations by 10, 21, 42 and 90.
PIPELINE_RATES = (44100, 4410, 2100, 1050, 490)

CHANNEL_NAMES = ("c1", "c2")


@dataclass(frozen=True)
class SegmentMeta:
    """Recording metadata carried alongside the samples."""

    horse_id: str = ""
    segment_kind: str = ""
    average_speed_kmh: float | None = None


@dataclass(frozen=True)
class AudioSegment:
    """A possibly multi-channel stretch of audio.

    samples has shape (channels, n_samples) in float64, nominal range [-1, 1].
    start_time is the offset of sample 0 relative to the parent recording.
    """

    samples: np.ndarray
    sample_rate: float
    start_time: float = 0.0
    meta: SegmentMeta = field(default_factory=SegmentMeta)

    def __post_init__(self) -> None:
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[np.newaxis, :]
        if arr.ndim != 2:
            raise ValueError(f"samples must be 1-D or 2-D, got shape {arr.shape}")
        if arr.shape[0] not in (1, 2):
            raise ValueError(f"expected 1 or 2 channels, got {arr.shape[0]}")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", arr)

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        """Length in seconds (n_samples / sample_rate)."""
        return self.n_samples / self.sample_rate


def load_wav(path: str | Path, expected_rate: float | None = None,
             meta: SegmentMeta | None = None) -> AudioSegment:
    """Read a PCM WAV file into an AudioSegment.

    16-bit integer samples are rescaled by 2**15, 32-bit integer by 2**31,
    32/64-bit float is taken as-is.  There is no silent resampling: if
    expected_rate is given and the file disagrees, SampleRateError is raised.

    Args:
        path: WAV file location.
        expected_rate: optional rate the file must match exactly.
        meta: metadata to attach; if None, a sidecar file "<path>.meta" is
            read when present (``key = value`` lines).

    Raises:
        FileNotFoundError: missing file.
        AudioFormatError: unparseable header or unsupported sample format.
        SampleRateError: file rate differs from expected_rate.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such audio file: {path}")
    try:
        rate, data = wavfile.read(path)
    except ValueError as exc:
        raise AudioFormatError(f"{path}: not a readable WAV file ({exc})") from exc
    if expected_rate is not None and rate != expected_rate:
        raise SampleRateError(
            f"{path}: sample rate {rate} Hz, expected {expected_rate} Hz "
            "(resampling is never done implicitly)")
    if data.ndim == 1:
        data = data[:, np.newaxis]
    if data.ndim != 2 or data.shape[1] not in (1, 2):
        raise AudioFormatError(
            f"{path}: expected 1 or 2 channels, got shape {data.shape}")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 2.0 ** 15
    elif data.dtype == np.int32:
        samples = data.astype(np.float64) / 2.0 ** 31
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise AudioFormatError(f"{path}: unsupported sample format {data.dtype}")
    if meta is None:
        meta = read_meta_sidecar(path)
    return AudioSegment(samples.T, float(rate), 0.0, meta)


def save_wav(seg: AudioSegment, path: str | Path, dtype: str = "float32") -> None:
    """Write a segment as WAV; dtype is 'float32' or 'int16'."""
    data = seg.samples.T
    if dtype == "float32":
        out = data.astype(np.float32)
    elif dtype == "int16":
        out = np.clip(np.round(data * 2.0 ** 15), -2.0 ** 15, 2.0 ** 15 - 1).astype(np.int16)
    else:
        raise ValueError(f"unsupported output dtype {dtype!r}")
    rate = seg.sample_rate
    if rate != int(rate):
        raise ValueError(f"WAV files need an integer sample rate, got {rate}")
    wavfile.write(Path(path), int(rate), np.ascontiguousarray(out))


def read_meta_sidecar(wav_path: str | Path) -> SegmentMeta:
    """Read "<wav>.meta" (``key = value`` lines, '#' comments) if it exists."""
    sidecar = Path(str(wav_path) + ".meta")
    if not sidecar.exists():
        return SegmentMeta()
    fields: dict[str, str] = {}
    for line in sidecar.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#") or "=" not in line:
            continue
        key, _, value = line.partition("=")
        fields[key.strip()] = value.strip()
    speed = fields.get("average_speed_kmh")
    return SegmentMeta(
        horse_id=fields.get("horse_id", ""),
        segment_kind=fields.get("segment_kind", ""),
        average_speed_kmh=float(speed) if speed else None,
    )


def write_meta_sidecar(meta: SegmentMeta, wav_path: str | Path) -> None:
    lines = [f"horse_id = {meta.horse_id}", f"segment_kind = {meta.segment_kind}"]
    if meta.average_speed_kmh is not None:
        lines.append(f"average_speed_kmh = {meta.average_speed_kmh}")
    Path(str(wav_path) + ".meta").write_text("\n".join(lines) + "\n")


def extract_segment(seg: AudioSegment, start: float, stop: float,
                    kind: str = "") -> AudioSegment:
    """Cut a sample-aligned [start, stop) slice, times in seconds.

    Two cuts [a, b) and [b, c) partition [a, c) exactly: boundaries are
    rounded to sample indices once, so no sample is lost or duplicated.
    """
    if not 0.0 <= start < stop:
        raise ValueError(f"need 0 <= start < stop, got [{start}, {stop}]")
    i0 = int(round(start * seg.sample_rate))
    i1 = int(round(stop * seg.sample_rate))
    if i1 > seg.n_samples:
        raise ValueError(
            f"stop = {stop} s is past the end of the segment ({seg.duration:.3f} s)")
    meta = replace(seg.meta, segment_kind=kind) if kind else seg.meta
    return AudioSegment(seg.samples[:, i0:i1].copy(), seg.sample_rate,
                        seg.start_time + i0 / seg.sample_rate, meta)


def downsample(seg: AudioSegment, factor: int) -> AudioSegment:
    """Plain decimation: keep every factor-th sample starting at index 0.

    Deliberately applies no anti-aliasing filter; aliasing is part of the
    processing chain being reproduced.  downsample(downsample(s, a), b)
    equals downsample(s, a * b).
    """
    if not isinstance(factor, (int, np.integer)) or factor < 1:
        raise ValueError(f"decimation factor must be a positive integer, got {factor}")
    rate = seg.sample_rate / factor
    if rate == int(rate):
        rate = int(rate)
    return AudioSegment(seg.samples[:, ::factor].copy(), rate, seg.start_time, seg.meta)


def decimation_factor(rate_from: float, rate_to: float) -> int:
    """Integer factor linking two rates, or SampleRateError if there is none."""
    if rate_to <= 0 or rate_from <= 0:
        raise ValueError("rates must be positive")
    factor = rate_from / rate_to
    if abs(factor - round(factor)) > 1e-9 or round(factor) < 1:
        raise SampleRateError(
            f"cannot decimate {rate_from} Hz to {rate_to} Hz by an integer factor")
    return int(round(factor))


def select_channels(seg: AudioSegment, channel: str) -> AudioSegment:
    """Pick 'c1' (index 0), 'c2' (index 1) or 'both'."""
    if channel == "both":
        if seg.n_channels != 2:
            raise ValueError("channel='both' needs a stereo segment")
        return seg
    if channel not in CHANNEL_NAMES:
        raise ValueError(f"channel must be one of c1, c2, both; got {channel!r}")
    idx = CHANNEL_NAMES.index(channel)
    if idx >= seg.n_channels:
        raise ValueError(f"segment has {seg.n_channels} channel(s); {channel} missing")
    return AudioSegment(seg.samples[idx:idx + 1].copy(), seg.sample_rate,
                        seg.start_time, seg.meta)


def mix_channels(seg: AudioSegment) -> AudioSegment:
    """Average the two channels into one (used by the variance gate)."""
    if seg.n_channels == 1:
        return seg
    mixed = seg.samples.mean(axis=0, keepdims=True)
    return AudioSegment(mixed, seg.sample_rate, seg.start_time, seg.meta)
