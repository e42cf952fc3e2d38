import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hppnet.dsp import (AudioClip, CqtConfig, EmptySpectrogramError, WavFormatError, cqt,
                        harmonic_offset, read_wav, resample, write_wav)

SR = 16000


def _wav_bytes(payload: bytes, codec=1, channels=1, rate=SR, bits=16) -> bytes:
    align = channels * bits // 8
    fmt = struct.pack("<HHIIHH", codec, channels, rate, rate * align, align, bits)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(payload)) + payload
    return b"RIFF" + struct.pack("<I", len(body)) + body


def tone(freq, seconds=1.0, amp=0.5):
    t = np.arange(int(seconds * SR)) / SR
    return AudioClip(amp * np.sin(2 * np.pi * freq * t), SR)


# -------------------------------------------------------------------- WAV


def test_read_16bit_scale(tmp_path):
    p = tmp_path / "a.wav"
    p.write_bytes(_wav_bytes(np.array([16384, -32768], "<i2").tobytes()))
    clip = read_wav(p)
    np.testing.assert_array_equal(clip.samples, [0.5, -1.0])
    assert clip.sample_rate == SR


def test_read_stereo_average(tmp_path):
    p = tmp_path / "s.wav"
    p.write_bytes(_wav_bytes(np.array([0.2, 0.4], "<f4").tobytes(), codec=3, channels=2, bits=32))
    np.testing.assert_allclose(read_wav(p).samples, [0.3], atol=1e-7)


def test_read_silence_duration(tmp_path):
    p = tmp_path / "z.wav"
    p.write_bytes(_wav_bytes(bytes(2 * 32000)))
    clip = read_wav(p)
    assert clip.duration == 2.0 and not clip.samples.any()


def test_write_read_round_trip(tmp_path, rng):
    x = rng.uniform(-1, 1, 1000)
    write_wav(AudioClip(x, 22050), tmp_path / "f.wav")
    back = read_wav(tmp_path / "f.wav")
    assert back.sample_rate == 22050
    np.testing.assert_array_equal(back.samples, x.astype(np.float32))


@pytest.mark.parametrize("blob, chunk", [
    (b"RIFX0000WAVE", "RIFF"),
    (b"RIFF\x04\x00\x00\x00WAVE", "fmt"),
])
def test_malformed_headers(tmp_path, blob, chunk):
    p = tmp_path / "bad.wav"
    p.write_bytes(blob)
    with pytest.raises(WavFormatError, match=chunk):
        read_wav(p)


def test_unsupported_codec(tmp_path):
    p = tmp_path / "u.wav"
    p.write_bytes(_wav_bytes(bytes(8), codec=2, bits=8))
    with pytest.raises(WavFormatError, match="fmt"):
        read_wav(p)


def test_missing_data_chunk(tmp_path):
    p = tmp_path / "d.wav"
    fmt = struct.pack("<HHIIHH", 1, 1, SR, 2 * SR, 2, 16)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    p.write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)
    with pytest.raises(WavFormatError, match="data"):
        read_wav(p)


# ------------------------------------------------------------- resampling


def test_resample_noop_identical(rng):
    clip = AudioClip(rng.uniform(-1, 1, 5000), SR)
    out = resample(clip, SR)
    assert out.samples.tobytes() == clip.samples.tobytes()


def test_resample_32k_sine_spectrum():
    t = np.arange(32000) / 32000
    out = resample(AudioClip(0.5 * np.sin(2 * np.pi * 1000 * t), 32000), SR)
    assert len(out.samples) == 16000
    spec = np.abs(np.fft.rfft(out.samples * np.hanning(len(out.samples))))
    freqs = np.fft.rfftfreq(len(out.samples), 1 / SR)
    peak = spec.argmax()
    assert abs(freqs[peak] - 1000) <= 1.0
    far = np.abs(freqs - 1000) > 50
    assert 20 * np.log10(spec[far].max() / spec[peak]) < -60


def test_resample_dc_preserved():
    out = resample(AudioClip(np.full(44100, 0.7), 44100), SR)
    assert len(out.samples) == 16000
    assert np.abs(out.samples - 0.7).max() < 1e-3


@settings(max_examples=25, deadline=None)
@given(st.sampled_from([8000, 22050, 24000, 44100, 48000]), st.integers(100, 5000))
def test_resample_length(rate, n):
    out = resample(AudioClip(np.zeros(n), rate), SR)
    assert len(out.samples) == round(n * SR / rate)


# -------------------------------------------------------------------- CQT


def test_config_geometry():
    cfg = CqtConfig()
    f = cfg.center_freqs()
    assert f[0] == 27.5 and len(f) == 352
    assert f[-1] < SR / 2 and abs(f[-1] - 4371.3) < 0.1


def test_cqt_a4_bin():
    spec = cqt(tone(440.0))
    assert round(48 * np.log2(440 / 27.5)) == 192
    assert np.all(spec.values[10:40].argmax(axis=1) == 192)


def test_cqt_frame_count_20s():
    spec = cqt(AudioClip(np.zeros(20 * SR), SR))
    assert spec.n_frames == 1000 and spec.frame_period == 0.02


@settings(max_examples=20, deadline=None)
@given(st.integers(320, 20000))
def test_cqt_frame_count_floor(n):
    assert cqt(AudioClip(np.zeros(n), SR)).n_frames == n // 320


def test_cqt_silence_is_floor():
    v = cqt(AudioClip(np.zeros(6400), SR)).values
    np.testing.assert_array_equal(v, -5.0)


def test_cqt_too_short():
    with pytest.raises(EmptySpectrogramError):
        cqt(AudioClip(np.zeros(100), SR))


def test_cqt_requires_16k():
    with pytest.raises(ValueError):
        cqt(AudioClip(np.zeros(4000), 8000))


def test_cqt_scaling_shifts_log_magnitude():
    a = cqt(tone(300.0, amp=0.4)).values
    b = cqt(tone(300.0, amp=0.1)).values
    assert np.all(a.argmax(axis=1)[5:45] == b.argmax(axis=1)[5:45])
    peak = a[25].argmax()
    assert abs((a[25, peak] - b[25, peak]) - np.log10(4)) < 1e-3


@pytest.mark.parametrize("f0", [110.0, 220.0, 440.0, 880.0])
@pytest.mark.parametrize("k", [2, 3, 4])
def test_harmonic_spacing_invariance(f0, k):
    base = cqt(tone(f0)).values[25].argmax()
    harm = cqt(tone(k * f0)).values[25].argmax()
    assert abs((harm - base) - harmonic_offset(k, 48)) <= 1


# -------------------------------------------------------- harmonic offsets


def test_harmonic_offsets():
    assert harmonic_offset(1, 48) == 0
    assert [harmonic_offset(k, 48) for k in range(2, 10)] == [48, 76, 96, 111, 124, 135, 144, 152]
    assert harmonic_offset(4, 48) == 2 * harmonic_offset(2, 48)


def test_harmonic_offset_domain():
    with pytest.raises(ValueError):
        harmonic_offset(0, 48)
