import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hppnet.data import make_targets
from hppnet.decode import decode
from hppnet.midi import NoteEvent
from hppnet.model import Posteriorgram

FP = 0.02


def post_from_rows(onset, frame, vel=0.5, key=39):
    T = len(onset)
    o = np.zeros((T, 88))
    f = np.zeros((T, 88))
    o[:, key] = onset
    f[:, key] = frame
    return Posteriorgram(o, f, np.zeros((T, 88)), np.full((T, 88), vel))


def random_grid_notes(rng, max_notes=12, T=200):
    """Notes on the frame grid with >= 2 silent frames between same-pitch notes."""
    notes = []
    for key in rng.choice(88, size=rng.integers(1, 6), replace=False):
        t = int(rng.integers(0, 10))
        while len(notes) < max_notes:
            d = int(rng.integers(1, 15))
            if t + d > T:
                break
            notes.append(NoteEvent(21 + int(key), t * FP, (t + d) * FP, int(rng.integers(1, 128))))
            t += d + int(rng.integers(2, 8))
    return notes


def test_single_note_trace():
    notes = decode(post_from_rows([0, 1, 0, 0], [0, 1, 1, 0]))
    assert len(notes) == 1
    n = notes[0]
    assert n.pitch == 60
    assert n.onset_time == pytest.approx(0.02) and n.offset_time == pytest.approx(0.06)
    assert n.velocity == 64


def test_frames_without_onset_give_nothing():
    assert decode(post_from_rows([0] * 6, [1] * 6)) == []


def test_reonset_splits_note():
    notes = decode(post_from_rows([0, 1, 0, 1, 0, 0, 0], [0, 1, 1, 1, 1, 1, 0]))
    assert [(round(n.onset_time / FP), round(n.offset_time / FP)) for n in notes] == [(1, 3), (3, 6)]


def test_onset_without_frame_lasts_one_frame():
    (n,) = decode(post_from_rows([0, 1, 0], [0, 0, 0]))
    assert n.offset_time - n.onset_time == pytest.approx(FP)


def test_threshold_above_one_gives_nothing(rng):
    p = Posteriorgram(*(rng.uniform(size=(30, 88)) for _ in range(4)))
    assert decode(p, onset_thresh=1.01, frame_thresh=1.01) == []


def test_velocity_clamped():
    (n,) = decode(post_from_rows([1, 0], [1, 0], vel=0.0))
    assert n.velocity == 1
    (n,) = decode(post_from_rows([1, 0], [1, 0], vel=1.0))
    assert n.velocity == 127


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_ideal_roll_round_trip(seed):
    rng = np.random.default_rng(seed)
    notes = random_grid_notes(rng)
    T = 220
    tg = make_targets(notes, T)
    post = Posteriorgram(tg.n, tg.f, tg.o, tg.v)
    est = decode(post)
    ref = sorted(notes, key=lambda n: (n.onset_time, n.pitch))
    assert len(est) == len(ref)
    for a, b in zip(ref, est):
        assert a.pitch == b.pitch
        assert a.onset_time == pytest.approx(b.onset_time, abs=1e-9)
        assert abs(a.offset_time - b.offset_time) <= FP + 1e-9
        assert a.velocity == b.velocity


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.floats(0.05, 0.9), st.floats(0.05, 0.9))
def test_raising_frame_threshold_never_lengthens(seed, lo, hi):
    lo, hi = sorted((lo, hi))
    rng = np.random.default_rng(seed)
    p = Posteriorgram(*(rng.uniform(size=(40, 88)) ** 2 for _ in range(4)))
    a = decode(p, 0.4, lo)
    b = decode(p, 0.4, hi)
    assert [(n.pitch, n.onset_time) for n in a] == [(n.pitch, n.onset_time) for n in b]
    for x, y in zip(a, b):
        assert y.offset_time <= x.offset_time


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_decoded_onsets_exceed_threshold(seed):
    rng = np.random.default_rng(seed)
    p = Posteriorgram(*(rng.uniform(size=(30, 88)) for _ in range(4)))
    for n in decode(p):
        assert p.onset[round(n.onset_time / FP), n.pitch - 21] >= 0.4
