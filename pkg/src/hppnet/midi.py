"""Note events and Standard MIDI File reading/writing."""
from __future__ import annotations

import bisect
import logging
import struct
from collections import defaultdict, deque
from dataclasses import dataclass

log = logging.getLogger(__name__)

MIN_PITCH = 21
MAX_PITCH = 108
N_KEYS = 88

TICKS_PER_QUARTER = 480
DEFAULT_TEMPO = 500_000  # microseconds per quarter, 120 BPM
SECONDS_PER_TICK = DEFAULT_TEMPO / 1e6 / TICKS_PER_QUARTER


class MidiFormatError(ValueError):
    pass


@dataclass(frozen=True)
class NoteEvent:
    pitch: int
    onset_time: float
    offset_time: float
    velocity: int = 64

    def __post_init__(self):
        if not MIN_PITCH <= self.pitch <= MAX_PITCH:
            raise ValueError(f"pitch {self.pitch} outside piano range")
        if not self.offset_time > self.onset_time:
            raise ValueError(f"offset {self.offset_time} not after onset {self.onset_time}")

    @property
    def key(self) -> int:
        """0-based piano key index."""
        return self.pitch - MIN_PITCH

    @property
    def duration(self) -> float:
        return self.offset_time - self.onset_time


def _vlq(n: int) -> bytes:
    out = [n & 0x7F]
    n >>= 7
    while n:
        out.append((n & 0x7F) | 0x80)
        n >>= 7
    return bytes(reversed(out))


def write_midi(notes, path) -> None:
    """Write a format-0 SMF at 480 ticks/quarter and a fixed 120 BPM."""
    events = []
    for n in notes:
        on = int(round(n.onset_time / SECONDS_PER_TICK))
        off = max(on + 1, int(round(n.offset_time / SECONDS_PER_TICK)))
        # note-offs sort ahead of note-ons at the same tick
        events.append((on, 1, bytes([0x90, n.pitch, n.velocity])))
        events.append((off, 0, bytes([0x80, n.pitch, 0])))
    events.sort(key=lambda e: (e[0], e[1], e[2][1]))
    track = bytearray(b"\x00\xff\x51\x03" + DEFAULT_TEMPO.to_bytes(3, "big"))
    now = 0
    for tick, _, msg in events:
        track += _vlq(tick - now) + msg
        now = tick
    track += b"\x00\xff\x2f\x00"
    header = b"MThd" + struct.pack(">IHHH", 6, 0, 1, TICKS_PER_QUARTER)
    with open(path, "wb") as fh:
        fh.write(header + b"MTrk" + struct.pack(">I", len(track)) + bytes(track))


def _read_vlq(buf: bytes, pos: int) -> tuple[int, int]:
    value = 0
    for _ in range(4):
        if pos >= len(buf):
            raise MidiFormatError("MTrk: truncated variable-length quantity")
        b = buf[pos]
        pos += 1
        value = (value << 7) | (b & 0x7F)
        if not b & 0x80:
            return value, pos
    raise MidiFormatError("MTrk: variable-length quantity longer than 4 bytes")


def _parse_track(data: bytes):
    """Yield (tick, kind, a, b, c) with kind in {'on', 'off', 'tempo', 'cc'}."""
    pos, tick, status = 0, 0, None
    while pos < len(data):
        delta, pos = _read_vlq(data, pos)
        tick += delta
        if pos >= len(data):
            raise MidiFormatError("MTrk: event truncated")
        b0 = data[pos]
        if b0 == 0xFF:
            if pos + 1 >= len(data):
                raise MidiFormatError("MTrk: meta event truncated")
            mtype = data[pos + 1]
            length, pos = _read_vlq(data, pos + 2)
            body = data[pos:pos + length]
            pos += length
            if mtype == 0x51 and length == 3:
                yield tick, "tempo", int.from_bytes(body, "big"), 0, 0
            elif mtype == 0x2F:
                return
            continue
        if b0 in (0xF0, 0xF7):
            length, pos = _read_vlq(data, pos + 1)
            pos += length
            continue
        if b0 & 0x80:
            status = b0
            pos += 1
        elif status is None:
            raise MidiFormatError("MTrk: running status without a prior status byte")
        kind = status & 0xF0
        ch = status & 0x0F
        n_data = 1 if kind in (0xC0, 0xD0) else 2
        if pos + n_data > len(data):
            raise MidiFormatError("MTrk: channel message truncated")
        d = data[pos:pos + n_data]
        pos += n_data
        if kind == 0x90 and d[1] > 0:
            yield tick, "on", ch, d[0], d[1]
        elif kind == 0x80 or (kind == 0x90 and d[1] == 0):
            yield tick, "off", ch, d[0], 0
        elif kind == 0xB0:
            yield tick, "cc", ch, d[0], d[1]


class _TempoMap:
    def __init__(self, changes: list[tuple[int, int]], tpq: int):
        changes = sorted(changes, key=lambda c: c[0])
        if not changes or changes[0][0] != 0:
            changes.insert(0, (0, DEFAULT_TEMPO))
        self.ticks = [c[0] for c in changes]
        self.tempi = [c[1] for c in changes]
        self.seconds = [0.0]
        for i in range(1, len(changes)):
            dt = self.ticks[i] - self.ticks[i - 1]
            self.seconds.append(self.seconds[-1] + dt * self.tempi[i - 1] / 1e6 / tpq)
        self.tpq = tpq

    def to_seconds(self, tick: int) -> float:
        i = bisect.bisect_right(self.ticks, tick) - 1
        return self.seconds[i] + (tick - self.ticks[i]) * self.tempi[i] / 1e6 / self.tpq


def read_midi(path, sustain: bool = False) -> list[NoteEvent]:
    """Read all tracks of a format 0/1 SMF into piano-range note events.

    With ``sustain`` set, note-offs arriving while CC64 is held are deferred to
    the pedal release (or to a re-strike of the same pitch).
    """
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != b"MThd":
        raise MidiFormatError("MThd: missing header chunk")
    hlen, fmt, ntrks, division = struct.unpack_from(">IHHH", buf, 4)
    if fmt not in (0, 1):
        raise MidiFormatError(f"MThd: unsupported format {fmt}")
    if division & 0x8000:
        raise MidiFormatError("MThd: SMPTE time division not supported")
    pos = 8 + hlen
    events = []
    for trk in range(ntrks):
        if buf[pos:pos + 4] != b"MTrk":
            raise MidiFormatError(f"MTrk: chunk {trk} missing")
        (length,) = struct.unpack_from(">I", buf, pos + 4)
        data = buf[pos + 8:pos + 8 + length]
        if len(data) < length:
            raise MidiFormatError(f"MTrk: chunk {trk} truncated")
        for seq, ev in enumerate(_parse_track(data)):
            events.append((ev[0], trk, seq) + ev[1:])
        pos += 8 + length
    tempo = _TempoMap([(e[0], e[4]) for e in events if e[3] == "tempo"], division)

    # offs before ons at equal ticks so a re-struck note closes the old one first
    order = {"tempo": 0, "cc": 1, "off": 2, "on": 3}
    events.sort(key=lambda e: (e[0], order[e[3]], e[1], e[2]))
    open_notes: dict[tuple[int, int], deque] = defaultdict(deque)
    pedal = defaultdict(bool)
    held: dict[int, set] = defaultdict(set)
    raw = []

    def close(ch, pitch, tick):
        q = open_notes[(ch, pitch)]
        if q:
            on_tick, vel = q.popleft()
            raw.append((pitch, on_tick, tick, vel))

    for tick, _, _, kind, a, b, c in events:
        if kind == "on":
            if sustain and (a, b) in held[a]:
                held[a].discard((a, b))
                close(a, b, tick)
            open_notes[(a, b)].append((tick, c))
        elif kind == "off":
            if sustain and pedal[a]:
                held[a].add((a, b))
            else:
                close(a, b, tick)
        elif kind == "cc" and b == 64:
            down = c >= 64
            if pedal[a] and not down:
                for key in sorted(held[a]):
                    close(key[0], key[1], tick)
                held[a].clear()
            pedal[a] = down
    last = max((e[0] for e in events), default=0)
    for (ch, pitch), q in open_notes.items():
        while q:
            close(ch, pitch, last)

    notes, dropped = [], 0
    for pitch, on_tick, off_tick, vel in raw:
        if not MIN_PITCH <= pitch <= MAX_PITCH:
            dropped += 1
            continue
        on, off = tempo.to_seconds(on_tick), tempo.to_seconds(off_tick)
        if off > on:
            notes.append(NoteEvent(pitch, on, off, vel))
    if dropped:
        log.warning("%s: dropped %d notes outside the piano range", path, dropped)
    notes.sort(key=lambda n: (n.onset_time, n.pitch))
    return notes
