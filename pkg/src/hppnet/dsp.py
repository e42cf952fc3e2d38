"""Audio ingestion and the constant-Q front end."""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import signal

SAMPLE_RATE = 16000
LOG_EPS = 1e-5

_WAVE_PCM = 1
_WAVE_FLOAT = 3
_WAVE_EXTENSIBLE = 0xFFFE


class WavFormatError(ValueError):
    """Malformed or unsupported RIFF/WAVE content."""


class EmptySpectrogramError(ValueError):
    pass


@dataclass
class AudioClip:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class CqtConfig:
    f_min: float = 27.5
    bins_per_octave: int = 48
    n_bins: int = 352
    hop: int = 320
    sample_rate: int = SAMPLE_RATE

    @property
    def q_factor(self) -> float:
        return 1.0 / (2.0 ** (1.0 / self.bins_per_octave) - 1.0)

    @property
    def frame_period(self) -> float:
        return self.hop / self.sample_rate

    def center_freqs(self) -> np.ndarray:
        return self.f_min * 2.0 ** (np.arange(self.n_bins) / self.bins_per_octave)

    def window_lengths(self) -> np.ndarray:
        return np.ceil(self.q_factor * self.sample_rate / self.center_freqs()).astype(int)


@dataclass
class Spectrogram:
    values: np.ndarray  # [T, n_bins], log10 magnitude
    config: CqtConfig = field(default_factory=CqtConfig)

    @property
    def frame_period(self) -> float:
        return self.config.frame_period

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]


# ------------------------------------------------------------------ WAV I/O


def read_wav(path) -> AudioClip:
    """Read 16-bit PCM or 32-bit float WAVE, mono or stereo, as mono floats."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < 12 or buf[:4] != b"RIFF" or buf[8:12] != b"WAVE":
        raise WavFormatError("RIFF: missing RIFF/WAVE header")
    pos = 12
    fmt = None
    data = None
    while pos + 8 <= len(buf):
        cid = buf[pos:pos + 4]
        (size,) = struct.unpack_from("<I", buf, pos + 4)
        body = buf[pos + 8:pos + 8 + size]
        if len(body) < size and cid != b"data":
            raise WavFormatError(f"{cid.decode('latin-1')}: chunk truncated")
        if cid == b"fmt ":
            if size < 16:
                raise WavFormatError("fmt : chunk too short")
            fmt = struct.unpack_from("<HHIIHH", body)
            if fmt[0] == _WAVE_EXTENSIBLE:
                if size < 40:
                    raise WavFormatError("fmt : extensible chunk too short")
                (sub,) = struct.unpack_from("<H", body, 24)
                fmt = (sub,) + fmt[1:]
        elif cid == b"data":
            data = body
        pos += 8 + size + (size & 1)
    if fmt is None:
        raise WavFormatError("fmt : chunk missing")
    if data is None:
        raise WavFormatError("data: chunk missing")
    codec, channels, rate, _, align, bits = fmt
    if channels not in (1, 2):
        raise WavFormatError(f"fmt : unsupported channel count {channels}")
    if codec == _WAVE_PCM and bits == 16:
        x = np.frombuffer(data[:len(data) - len(data) % 2], dtype="<i2").astype(np.float64) / 32768.0
    elif codec == _WAVE_FLOAT and bits == 32:
        x = np.frombuffer(data[:len(data) - len(data) % 4], dtype="<f4").astype(np.float64)
    else:
        raise WavFormatError(f"fmt : unsupported codec {codec} with {bits} bits")
    x = x[:len(x) - len(x) % channels].reshape(-1, channels).mean(axis=1)
    return AudioClip(np.clip(x, -1.0, 1.0), int(rate))


def write_wav(clip: AudioClip, path, float32: bool = True) -> None:
    x = np.asarray(clip.samples, dtype=np.float64)
    if float32:
        payload, codec, bits = x.astype("<f4").tobytes(), _WAVE_FLOAT, 32
    else:
        q = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")
        payload, codec, bits = q.tobytes(), _WAVE_PCM, 16
    align = bits // 8
    fmt = struct.pack("<HHIIHH", codec, 1, clip.sample_rate, clip.sample_rate * align, align, bits)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(payload)) + payload
    with open(path, "wb") as fh:
        fh.write(b"RIFF" + struct.pack("<I", len(body)) + body)


# --------------------------------------------------------------- resampling


def _kaiser_lowpass(up: int, down: int, taps_per_phase: int = 64, beta: float = 8.6) -> np.ndarray:
    n = taps_per_phase * up + 1
    return signal.firwin(n, 1.0 / max(up, down), window=("kaiser", beta))


def resample(clip: AudioClip, target_rate: int = SAMPLE_RATE) -> AudioClip:
    """Polyphase Kaiser-windowed-sinc resampling to ``target_rate``."""
    if clip.sample_rate == target_rate:
        return AudioClip(clip.samples.copy(), target_rate)
    if clip.sample_rate < 8000:
        raise ValueError(f"source rate {clip.sample_rate} Hz below 8000 Hz")
    ratio = Fraction(target_rate, clip.sample_rate)
    up, down = ratio.numerator, ratio.denominator
    n_out = int(round(len(clip.samples) * target_rate / clip.sample_rate))
    y = signal.resample_poly(clip.samples, up, down, window=_kaiser_lowpass(up, down),
                             padtype="line")
    if len(y) < n_out:
        y = np.pad(y, (0, n_out - len(y)))
    return AudioClip(np.clip(y[:n_out], -1.0, 1.0), target_rate)


def load_audio(path) -> AudioClip:
    return resample(read_wav(path), SAMPLE_RATE)


# ---------------------------------------------------------------------- CQT


def harmonic_offset(k: int, bins_per_octave: int = 48) -> int:
    """Bin distance between a fundamental and its k-th harmonic on a log axis."""
    if k < 1:
        raise ValueError(f"harmonic number must be >= 1, got {k}")
    return int(round(bins_per_octave * math.log2(k)))


def _cqt_kernels(cfg: CqtConfig, group: int = 16):
    """Per-group complex kernels sharing one (zero-padded) window length."""
    freqs = cfg.center_freqs()
    lengths = cfg.window_lengths()
    groups = []
    for g0 in range(0, cfg.n_bins, group):
        idx = np.arange(g0, min(cfg.n_bins, g0 + group))
        n_max = int(lengths[idx].max())
        n_max += 1 - n_max % 2  # odd so the frame center is a sample
        kern = np.zeros((n_max, len(idx)), dtype=np.complex128)
        for col, b in enumerate(idx):
            nb = int(lengths[b])
            start = (n_max - nb) // 2
            n = np.arange(nb)
            win = np.hanning(nb + 2)[1:-1]
            kern[start:start + nb, col] = (
                win * np.exp(-2j * np.pi * freqs[b] * (n - nb // 2) / cfg.sample_rate) / nb)
        groups.append((idx, n_max, np.hstack([kern.real, kern.imag])))
    return groups


_KERNEL_CACHE: dict[CqtConfig, list] = {}


def cqt(clip: AudioClip, cfg: CqtConfig = CqtConfig()) -> Spectrogram:
    """Direct windowed-correlation CQT; returns T x n_bins log10 magnitudes.

    Frame t is centred on sample t * hop; the signal is zero-padded at both
    ends. T = floor(len(samples) / hop).
    """
    if clip.sample_rate != cfg.sample_rate:
        raise ValueError(f"clip is {clip.sample_rate} Hz, transform expects {cfg.sample_rate} Hz")
    x = np.asarray(clip.samples, dtype=np.float64)
    T = len(x) // cfg.hop
    if T < 1:
        raise EmptySpectrogramError(f"clip of {len(x)} samples is shorter than one hop")
    if cfg not in _KERNEL_CACHE:
        _KERNEL_CACHE[cfg] = _cqt_kernels(cfg)
    groups = _KERNEL_CACHE[cfg]
    pad = max(n for _, n, _ in groups) // 2 + 1
    xp = np.pad(x, (pad, pad))
    centers = pad + np.arange(T) * cfg.hop
    mag = np.empty((T, cfg.n_bins))
    frames_per_chunk = 256
    for idx, n_max, kern in groups:
        half = n_max // 2
        for f0 in range(0, T, frames_per_chunk):
            c = centers[f0:f0 + frames_per_chunk]
            view = np.lib.stride_tricks.sliding_window_view(xp, n_max)[c - half]
            z = view @ kern
            k = len(idx)
            mag[f0:f0 + len(c), idx] = np.hypot(z[:, :k], z[:, k:])
    return Spectrogram(np.log10(mag + LOG_EPS), cfg)
