"""Training targets, synthetic piano-like audio, and dataset assembly."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dsp import SAMPLE_RATE, AudioClip, CqtConfig, Spectrogram, cqt, load_audio
from .midi import N_KEYS, NoteEvent, read_midi  # noqa: F401 - read_midi re-exported

FRAME_PERIOD = 0.02
ONSET_FRAMES = 2
OFFSET_FRAMES = 2
CLIP_SECONDS = 20.0

_EDGE = 1e-9


@dataclass
class PianoRollTargets:
    n: np.ndarray  # onset
    f: np.ndarray  # frame
    o: np.ndarray  # offset
    v: np.ndarray  # velocity / 127 on onset cells

    @property
    def n_frames(self) -> int:
        return self.n.shape[0]

    def crop(self, t0: int, t1: int) -> "PianoRollTargets":
        return PianoRollTargets(self.n[t0:t1], self.f[t0:t1], self.o[t0:t1], self.v[t0:t1])


def note_frames(note: NoteEvent, frame_period: float = FRAME_PERIOD) -> tuple[int, int]:
    """Half-open frame range [start, end) whose centres fall inside the note.

    A note too short to contain any frame centre gets the single frame that
    contains its onset.
    """
    s = math.ceil(note.onset_time / frame_period - _EDGE)
    e = math.ceil(note.offset_time / frame_period - _EDGE)
    if e <= s:
        s = math.floor(note.onset_time / frame_period + 0.5)
        e = s + 1
    return s, e


def make_targets(notes, T: int, frame_period: float = FRAME_PERIOD) -> PianoRollTargets:
    n = np.zeros((T, N_KEYS), np.float32)
    f = np.zeros((T, N_KEYS), np.float32)
    o = np.zeros((T, N_KEYS), np.float32)
    v = np.zeros((T, N_KEYS), np.float32)
    for note in sorted(notes, key=lambda x: x.onset_time):
        s, e = note_frames(note, frame_period)
        if s >= T:
            continue
        k = note.key
        f[s:min(e, T), k] = 1
        ne = min(s + ONSET_FRAMES, e, T)
        n[s:ne, k] = 1
        v[s:ne, k] = note.velocity / 127.0
        o[e:min(e + OFFSET_FRAMES, T), k] = 1
    v[n == 0] = 0
    return PianoRollTargets(n, f, o, v)


# ---------------------------------------------------------------- synthesis

N_PARTIALS = 8
DECAY_SECONDS = 0.4
ATTACK_SECONDS = 0.005
RELEASE_SECONDS = 0.010
PEAK = 0.9


def midi_to_hz(pitch: float) -> float:
    return 440.0 * 2.0 ** ((pitch - 69) / 12.0)


def synth_clip(notes, seed: int = 0, duration: float | None = None,
               sample_rate: int = SAMPLE_RATE) -> AudioClip:
    """Additive tones: 8 decaying partials with amplitude k^-1.5 per note."""
    rng = np.random.default_rng(seed)
    notes = list(notes)
    if duration is None:
        duration = max([n.offset_time + RELEASE_SECONDS for n in notes], default=0.0)
    length = int(round(duration * sample_rate))
    out = np.zeros(length)
    for note in notes:
        phases = rng.uniform(0, 2 * np.pi, N_PARTIALS)
        i0 = int(round(note.onset_time * sample_rate))
        i1 = min(length, int(round((note.offset_time + RELEASE_SECONDS) * sample_rate)))
        if i0 >= i1:
            continue
        t = np.arange(i1 - i0) / sample_rate
        f0 = midi_to_hz(note.pitch)
        tone = np.zeros_like(t)
        for k in range(1, N_PARTIALS + 1):
            if k * f0 >= sample_rate / 2:
                break
            tone += k ** -1.5 * np.sin(2 * np.pi * k * f0 * t + phases[k - 1])
        env = np.exp(-t / DECAY_SECONDS) * np.minimum(1.0, t / ATTACK_SECONDS)
        release = np.clip((note.offset_time - note.onset_time + RELEASE_SECONDS - t)
                          / RELEASE_SECONDS, 0.0, 1.0)
        out[i0:i1] += note.velocity / 127.0 * tone * env * release
    peak = np.abs(out).max() if length else 0.0
    if peak > 0:
        out *= PEAK / peak
    return AudioClip(out, sample_rate)


# ------------------------------------------------------------------ dataset


@dataclass
class Sample:
    audio: AudioClip
    notes: list
    targets: PianoRollTargets
    source_id: str
    _spec: Spectrogram | None = field(default=None, repr=False)

    @property
    def spectrogram(self) -> Spectrogram:
        if self._spec is None:
            self._spec = cqt(self.audio, CqtConfig())
        return self._spec

    @property
    def n_frames(self) -> int:
        return self.targets.n_frames


def random_notes(rng: np.random.Generator, count: int, duration: float,
                 pitch_range=(36, 84), dur_range=(0.1, 1.0), vel_range=(40, 120),
                 max_polyphony: int = 4, same_pitch_gap: float = 0.1) -> list[NoteEvent]:
    """Random notes under a polyphony cap, same-pitch notes kept apart."""
    notes: list[NoteEvent] = []
    attempts = 0
    while len(notes) < count and attempts < 200 * max(1, count):
        attempts += 1
        d = float(rng.uniform(*dur_range))
        on = round(float(rng.uniform(0.0, max(0.0, duration - d - 0.05))), 3)
        off = round(on + d, 3)
        pitch = int(rng.integers(pitch_range[0], pitch_range[1] + 1))
        vel = int(rng.integers(vel_range[0], vel_range[1] + 1))
        if any(n.pitch == pitch and n.onset_time < off + same_pitch_gap
               and on < n.offset_time + same_pitch_gap for n in notes):
            continue
        overlapping = [n for n in notes if n.onset_time < off and on < n.offset_time]
        points = [on] + [n.onset_time for n in overlapping if n.onset_time > on]
        if any(sum(n.onset_time <= p < n.offset_time for n in overlapping) + 1 > max_polyphony
               for p in points):
            continue
        notes.append(NoteEvent(pitch, on, off, vel))
    notes.sort(key=lambda n: (n.onset_time, n.pitch))
    return notes


def make_sample(notes, seed: int, duration: float, source_id: str) -> Sample:
    audio = synth_clip(notes, seed=seed, duration=duration)
    T = len(audio.samples) // CqtConfig().hop
    return Sample(audio, list(notes), make_targets(notes, T), source_id)


def make_dataset(n_clips: int, notes_per_clip: int, seed: int = 0,
                 duration: float = CLIP_SECONDS) -> list[Sample]:
    """Deterministic synthetic clips with paired targets."""
    out = []
    for i in range(n_clips):
        rng = np.random.default_rng([seed, i])
        notes = random_notes(rng, notes_per_clip, duration)
        out.append(make_sample(notes, seed=int(rng.integers(2 ** 31)), duration=duration,
                               source_id=f"synth-{seed}-{i:04d}"))
    return out


# ------------------------------------------------------- real-data manifest


def read_manifest(path) -> list[dict]:
    """Rows of a CSV with columns path_audio, path_midi, split.

    Relative paths resolve against the manifest's directory.
    """
    base = Path(path).parent
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            if row.get("split") not in ("train", "validation", "test"):
                raise ValueError(f"{path}: bad split {row.get('split')!r}")
            rows.append({
                "path_audio": str(base / row["path_audio"]),
                "path_midi": str(base / row["path_midi"]),
                "split": row["split"],
            })
    return rows


def write_manifest(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=["path_audio", "path_midi", "split"])
        w.writeheader()
        for r in rows:
            w.writerow({k: r[k] for k in ("path_audio", "path_midi", "split")})


def clip_recording(audio: AudioClip, notes, source_id: str,
                   seconds: float = CLIP_SECONDS) -> list[Sample]:
    """Cut a recording into consecutive pieces, shifting notes into each."""
    hop = CqtConfig().hop
    n = int(round(seconds * audio.sample_rate))
    out = []
    for k, start in enumerate(range(0, len(audio.samples), n)):
        seg = audio.samples[start:start + n]
        if len(seg) < hop:
            break
        t0 = start / audio.sample_rate
        t1 = t0 + len(seg) / audio.sample_rate
        piece = [NoteEvent(x.pitch, max(0.0, x.onset_time - t0), min(t1, x.offset_time) - t0,
                           x.velocity)
                 for x in notes if x.onset_time < t1 and x.offset_time > t0
                 and min(t1, x.offset_time) - t0 > max(0.0, x.onset_time - t0)]
        T = len(seg) // hop
        out.append(Sample(AudioClip(seg.copy(), audio.sample_rate), piece,
                          make_targets(piece, T), f"{source_id}#{k}"))
    return out


def load_manifest_samples(path, split: str, sustain: bool = False) -> list[Sample]:
    samples = []
    for row in read_manifest(path):
        if row["split"] != split:
            continue
        audio = load_audio(row["path_audio"])
        notes = read_midi(row["path_midi"], sustain=sustain)
        samples += clip_recording(audio, notes, Path(row["path_audio"]).stem)
    return samples
