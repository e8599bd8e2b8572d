"""Minimal standard-MIDI-file writer, only for building test fixtures."""
from __future__ import annotations


def vlq(value: int) -> bytes:
    if value < 0:
        raise ValueError("negative delta")
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append(0x80 | (value & 0x7F))
        value >>= 7
    return bytes(reversed(out))


class Track:
    def __init__(self) -> None:
        self._chunks: list[bytes] = []

    def raw(self, delta: int, payload: bytes) -> "Track":
        self._chunks.append(vlq(delta) + payload)
        return self

    def program(self, delta: int, program: int, channel: int = 0) -> "Track":
        return self.raw(delta, bytes([0xC0 | channel, program]))

    def note_on(self, delta: int, pitch: int, velocity: int = 80, channel: int = 0) -> "Track":
        return self.raw(delta, bytes([0x90 | channel, pitch, velocity]))

    def note_off(self, delta: int, pitch: int, channel: int = 0) -> "Track":
        return self.raw(delta, bytes([0x80 | channel, pitch, 0]))

    def tempo(self, delta: int, usec_per_beat: int = 500_000) -> "Track":
        return self.raw(delta, bytes([0xFF, 0x51, 0x03]) + usec_per_beat.to_bytes(3, "big"))

    def end(self, delta: int = 0) -> "Track":
        return self.raw(delta, bytes([0xFF, 0x2F, 0x00]))

    def data(self) -> bytes:
        body = b"".join(self._chunks)
        return b"MTrk" + len(body).to_bytes(4, "big") + body


def build(tracks: list[Track], ticks_per_beat: int = 480, fmt: int = 1) -> bytes:
    header = (
        b"MThd"
        + (6).to_bytes(4, "big")
        + fmt.to_bytes(2, "big")
        + len(tracks).to_bytes(2, "big")
        + ticks_per_beat.to_bytes(2, "big")
    )
    return header + b"".join(t.data() for t in tracks)


def note_track(
    notes: list[tuple[int, int, int]],
    channel: int = 0,
    program: int | None = None,
    with_tempo: bool = False,
) -> Track:
    """Absolute (onset, duration, pitch) triples to a delta-encoded track.

    Same-tick events emit note-offs (and program changes) before note-ons.
    """
    events: list[tuple[int, int, bytes]] = []
    if program is not None:
        events.append((0, 0, bytes([0xC0 | channel, program])))
    if with_tempo:
        events.append((0, 0, bytes([0xFF, 0x51, 0x03]) + (500_000).to_bytes(3, "big")))
    for onset, duration, pitch in notes:
        events.append((onset, 1, bytes([0x90 | channel, pitch, 80])))
        events.append((onset + duration, 0, bytes([0x80 | channel, pitch, 0])))
    events.sort(key=lambda e: (e[0], e[1]))
    track = Track()
    tick = 0
    for at, _, payload in events:
        track.raw(at - tick, payload)
        tick = at
    track.end()
    return track
