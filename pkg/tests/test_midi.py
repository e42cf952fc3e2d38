import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hppnet.midi import SECONDS_PER_TICK, MidiFormatError, NoteEvent, read_midi, write_midi


def smf(tracks: list[bytes], fmt=1, tpq=480) -> bytes:
    out = b"MThd" + struct.pack(">IHHH", 6, fmt, len(tracks), tpq)
    for t in tracks:
        t = t + b"\x00\xff\x2f\x00"
        out += b"MTrk" + struct.pack(">I", len(t)) + t
    return out


def test_empty_list_writes_valid_file(tmp_path):
    p = tmp_path / "e.mid"
    write_midi([], p)
    raw = p.read_bytes()
    assert raw[:4] == b"MThd" and raw.endswith(b"\xff\x2f\x00")
    assert read_midi(p) == []


def test_single_note_exact(tmp_path):
    p = tmp_path / "one.mid"
    note = NoteEvent(60, 0.0, 1.0, 64)
    write_midi([note], p)
    assert read_midi(p) == [note]


def test_header_is_format0_480tpq(tmp_path):
    p = tmp_path / "h.mid"
    write_midi([NoteEvent(60, 0.0, 0.5, 10)], p)
    fmt, ntrk, tpq = struct.unpack(">HHH", p.read_bytes()[8:14])
    assert (fmt, ntrk, tpq) == (0, 1, 480)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_random_round_trip_within_one_tick(tmp_path_factory, seed):
    rng = np.random.default_rng(seed)
    notes = []
    for _ in range(100):
        on = float(rng.uniform(0, 30))
        notes.append(NoteEvent(int(rng.integers(21, 109)), on, on + float(rng.uniform(0.01, 2)),
                               int(rng.integers(1, 128))))
    p = tmp_path_factory.mktemp("m") / "r.mid"
    write_midi(notes, p)
    back = read_midi(p)
    assert len(back) == len(notes)
    key = lambda n: (n.pitch, n.onset_time)  # noqa: E731
    # overlapping same-pitch notes may re-pair, so compare as multisets per pitch
    for pitch in {n.pitch for n in notes}:
        a = sorted(n.onset_time for n in notes if n.pitch == pitch)
        b = sorted(n.onset_time for n in back if n.pitch == pitch)
        assert np.allclose(a, b, atol=SECONDS_PER_TICK)
    solo = [n for n in notes if sum(m.pitch == n.pitch for m in notes) == 1]
    backmap = {n.pitch: n for n in back}
    for n in sorted(solo, key=key):
        m = backmap[n.pitch]
        assert abs(m.offset_time - n.offset_time) <= SECONDS_PER_TICK
        assert m.velocity == n.velocity


def test_note_on_velocity_zero_is_off(tmp_path):
    trk = b"\x00\x90\x3c\x50" + b"\x83\x60\x90\x3c\x00"  # on, 480 ticks later on vel 0
    p = tmp_path / "v0.mid"
    p.write_bytes(smf([trk], fmt=0))
    assert read_midi(p) == [NoteEvent(60, 0.0, 0.5, 80)]


def test_tempo_change_mid_note(tmp_path):
    # 120 BPM for 480 ticks (0.5 s), then 60 BPM for 480 ticks (1.0 s)
    tempo = b"\x00\xff\x51\x03\x07\xa1\x20" + b"\x83\x60\xff\x51\x03\x0f\x42\x40"
    notes = b"\x00\x90\x40\x64" + b"\x87\x40\x80\x40\x00"  # 960 ticks
    p = tmp_path / "tempo.mid"
    p.write_bytes(smf([tempo, notes]))
    (n,) = read_midi(p)
    assert n.onset_time == 0.0
    assert n.offset_time == pytest.approx(0.5 + 1.0)


def test_running_status_and_multitrack(tmp_path):
    t1 = b"\x00\x90\x3c\x40\x00\x3e\x40" + b"\x83\x60\x3c\x00\x00\x3e\x00"
    t2 = b"\x81\x70\x91\x43\x50\x81\x70\x81\x43\x00"
    p = tmp_path / "rs.mid"
    p.write_bytes(smf([t1, t2]))
    got = [(n.pitch, round(n.onset_time, 6), round(n.offset_time, 6)) for n in read_midi(p)]
    assert got == [(60, 0.0, 0.5), (62, 0.0, 0.5), (67, 0.25, 0.5)]


def test_out_of_range_dropped(tmp_path, caplog):
    trk = b"\x00\x90\x10\x40\x60\x80\x10\x00" + b"\x00\x90\x3c\x40\x60\x80\x3c\x00"
    p = tmp_path / "low.mid"
    p.write_bytes(smf([trk], fmt=0))
    notes = read_midi(p)
    assert [n.pitch for n in notes] == [60]
    assert "dropped 1" in caplog.text


def test_sustain_pedal_extends(tmp_path):
    trk = (b"\x00\xb0\x40\x7f" + b"\x00\x90\x3c\x40" + b"\x83\x60\x80\x3c\x00"
           + b"\x83\x60\xb0\x40\x00")
    p = tmp_path / "ped.mid"
    p.write_bytes(smf([trk], fmt=0))
    assert read_midi(p)[0].offset_time == pytest.approx(0.5)
    assert read_midi(p, sustain=True)[0].offset_time == pytest.approx(1.0)


def test_missing_header(tmp_path):
    p = tmp_path / "bad.mid"
    p.write_bytes(b"RIFF\x00\x00\x00\x00")
    with pytest.raises(MidiFormatError, match="MThd"):
        read_midi(p)


def test_missing_track_chunk(tmp_path):
    p = tmp_path / "bad.mid"
    p.write_bytes(b"MThd" + struct.pack(">IHHH", 6, 0, 1, 480) + b"XXXX\x00\x00\x00\x00")
    with pytest.raises(MidiFormatError, match="MTrk"):
        read_midi(p)


def test_note_event_invariants():
    with pytest.raises(ValueError):
        NoteEvent(20, 0.0, 1.0, 10)
    with pytest.raises(ValueError):
        NoteEvent(60, 1.0, 1.0, 10)
