import numpy as np
import pytest
from scipy.io import wavfile

from resprate.audio import (AudioSegment, SegmentMeta, decimation_factor,
                            downsample, extract_segment, load_wav,
                            mix_channels, read_meta_sidecar, save_wav,
                            select_channels, write_meta_sidecar)
from resprate.errors import AudioFormatError, SampleRateError


def stereo_segment(n=4410, rate=4410.0, seed=0):
    rng = np.random.default_rng(seed)
    samples = np.clip(rng.normal(scale=0.2, size=(2, n)), -1.0, 1.0)
    return AudioSegment(samples, rate)


def test_segment_validation():
    mono = AudioSegment(np.zeros(100), 4410.0)  # 1-D input becomes one channel
    assert mono.samples.shape == (1, 100)
    with pytest.raises(ValueError):
        AudioSegment(np.zeros((3, 100)), 4410.0)  # 1-2 channels only
    with pytest.raises(ValueError):
        AudioSegment(np.zeros((2, 100)), 0.0)


def test_duration():
    seg = stereo_segment(n=2205, rate=4410.0)
    assert abs(seg.duration - 0.5) < 1e-12


def test_wav_roundtrip_float32(tmp_path):
    seg = stereo_segment()
    path = tmp_path / "clip.wav"
    save_wav(seg, path)
    back = load_wav(path)
    assert back.sample_rate == 4410.0
    assert back.samples.shape == seg.samples.shape
    assert np.allclose(back.samples, seg.samples, atol=1e-6)


def test_wav_roundtrip_int16(tmp_path):
    seg = stereo_segment(seed=3)
    path = tmp_path / "clip16.wav"
    save_wav(seg, path, dtype="int16")
    back = load_wav(path)
    assert np.allclose(back.samples, seg.samples, atol=1.0 / 2 ** 15 + 1e-9)


def test_int16_scaling_convention(tmp_path):
    # A raw int16 file should come back divided by 2^15.
    data = np.array([[-2 ** 15, 0, 2 ** 14]], dtype=np.int16).T  # (n, channels)
    path = tmp_path / "raw.wav"
    wavfile.write(path, 8000, data)
    seg = load_wav(path)
    assert np.allclose(seg.samples[0], [-1.0, 0.0, 0.5])


def test_load_checks_expected_rate(tmp_path):
    seg = stereo_segment()
    path = tmp_path / "clip.wav"
    save_wav(seg, path)
    with pytest.raises(SampleRateError):
        load_wav(path, expected_rate=44100.0)


def test_load_rejects_non_audio(tmp_path):
    path = tmp_path / "not_audio.wav"
    path.write_bytes(b"definitely not RIFF data")
    with pytest.raises(AudioFormatError):
        load_wav(path)


def test_load_missing_file():
    with pytest.raises(FileNotFoundError):
        load_wav("/nonexistent/clip.wav")


def test_meta_sidecar_roundtrip(tmp_path):
    meta = SegmentMeta(horse_id="h03", segment_kind="canter", average_speed_kmh=21.5)
    wav = tmp_path / "x.wav"
    write_meta_sidecar(meta, wav)
    back = read_meta_sidecar(wav)
    assert back == meta


def test_meta_sidecar_absent(tmp_path):
    assert read_meta_sidecar(tmp_path / "none.wav") == SegmentMeta()


def test_extract_segments_partition_exactly():
    seg = stereo_segment(n=4410)
    parts = [extract_segment(seg, t, t + 0.25) for t in (0.0, 0.25, 0.5, 0.75)]
    glued = np.concatenate([p.samples for p in parts], axis=1)
    assert np.array_equal(glued, seg.samples)
    assert parts[2].start_time == 0.5
    assert parts[2].meta == seg.meta


def test_extract_segment_bounds():
    seg = stereo_segment(n=1000, rate=1000.0)
    with pytest.raises(ValueError):
        extract_segment(seg, 0.5, 0.4)
    with pytest.raises(ValueError):
        extract_segment(seg, 0.0, 2.0)


def test_downsample_keeps_every_kth_sample():
    seg = stereo_segment(n=441, rate=4410.0)
    out = downsample(seg, 21)
    assert out.sample_rate == 210.0
    assert np.array_equal(out.samples, seg.samples[:, ::21])
    with pytest.raises(ValueError):
        downsample(seg, 0)


def test_decimation_factor():
    assert decimation_factor(44100.0, 4410.0) == 10
    assert decimation_factor(44100.0, 2100.0) == 21
    assert decimation_factor(44100.0, 1050.0) == 42
    assert decimation_factor(44100.0, 490.0) == 90
    assert decimation_factor(4410.0, 4410.0) == 1
    with pytest.raises(ValueError):
        decimation_factor(44100.0, 3000.0)  # not an integer divisor


def test_select_channels():
    seg = stereo_segment()
    c1 = select_channels(seg, "c1")
    c2 = select_channels(seg, "c2")
    both = select_channels(seg, "both")
    assert np.array_equal(c1.samples[0], seg.samples[0])
    assert np.array_equal(c2.samples[0], seg.samples[1])
    assert c1.samples.shape[0] == 1 and c2.samples.shape[0] == 1
    assert np.array_equal(both.samples, seg.samples)
    with pytest.raises(ValueError):
        select_channels(seg, "c3")


def test_select_channels_mono_only_has_c1():
    mono = AudioSegment(np.zeros((1, 100)), 1000.0)
    assert select_channels(mono, "c1").samples.shape == (1, 100)
    with pytest.raises(ValueError):
        select_channels(mono, "c2")


def test_mix_channels_is_mean():
    seg = stereo_segment()
    mixed = mix_channels(seg)
    assert mixed.samples.shape == (1, seg.samples.shape[1])
    assert np.allclose(mixed.samples[0], seg.samples.mean(axis=0))
