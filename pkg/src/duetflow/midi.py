"""Standard MIDI file ingestion: parsing, grid quantization, track handling.

Only note content survives ingestion. Tempo, control changes and other
performance data are deliberately dropped; the downstream representation is
metrical (beats and positions), not wall-clock.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

from .grid import GridSpec, round_half_away

DRUM_CHANNEL = 9  # channel 10 in MIDI UI terms, 0-indexed here


class MidiParseError(ValueError):
    """Malformed MIDI data. Carries the byte offset of the failure."""

    def __init__(self, message: str, offset: int) -> None:
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class IneligiblePieceError(ValueError):
    """Piece cannot be scored, e.g. it does not have exactly two voices."""

    def __init__(self, message: str, source_id: str) -> None:
        super().__init__(f"{source_id}: {message}")
        self.source_id = source_id


class RawNote(NamedTuple):
    onset_ticks: int
    duration_ticks: int
    pitch: int
    program: int
    track_index: int


class QuantNote(NamedTuple):
    """Grid-aligned note. Field order doubles as the canonical sort order."""

    beat: int
    position: int
    pitch: int
    duration_steps: int
    program: int


@dataclass(frozen=True, slots=True)
class ParsedMidi:
    notes: tuple[RawNote, ...]
    ticks_per_beat: int
    format_type: int
    unclosed_notes: int


@dataclass(frozen=True, slots=True)
class Piece:
    """Quantized non-empty tracks of one file, in file order."""

    source_id: str
    grid: GridSpec
    tracks: tuple[tuple[QuantNote, ...], ...]
    dropped_notes: int = 0
    unclosed_notes: int = 0


class _Reader:
    __slots__ = ("data", "pos")

    def __init__(self, data: bytes) -> None:
        self.data = data
        self.pos = 0

    def remaining(self) -> int:
        return len(self.data) - self.pos

    def take(self, n: int, what: str) -> bytes:
        if self.remaining() < n:
            raise MidiParseError(f"truncated {what}", self.pos)
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self, what: str) -> int:
        return self.take(1, what)[0]

    def u16(self, what: str) -> int:
        b = self.take(2, what)
        return (b[0] << 8) | b[1]

    def u32(self, what: str) -> int:
        b = self.take(4, what)
        return (b[0] << 24) | (b[1] << 16) | (b[2] << 8) | b[3]

    def varint(self) -> int:
        # Variable-length quantity: 7 bits per byte, at most 4 bytes.
        value = 0
        for i in range(4):
            byte = self.u8("variable-length quantity")
            value = (value << 7) | (byte & 0x7F)
            if not byte & 0x80:
                return value
        raise MidiParseError("variable-length quantity longer than 4 bytes", self.pos - 1)

    def data_byte(self, what: str) -> int:
        off = self.pos
        byte = self.u8(what)
        if byte & 0x80:
            raise MidiParseError(f"status byte where {what} expected", off)
        return byte


def parse_midi(data: bytes, *, include_drums: bool = False) -> ParsedMidi:
    """Extract notes from a format 0 or 1 standard MIDI file.

    Note-offs are matched FIFO to the earliest open note-on of the same
    channel and pitch. Note-ons still open at end of track are closed there
    and counted in ``unclosed_notes``. A note's program is whatever the last
    program change on its channel set at onset time (default 0).
    """
    r = _Reader(data)
    if r.take(4, "header chunk id") != b"MThd":
        raise MidiParseError("missing MThd header", 0)
    header_len = r.u32("header length")
    if header_len < 6:
        raise MidiParseError(f"header length {header_len} shorter than 6", r.pos - 4)
    fmt = r.u16("format")
    declared_tracks = r.u16("track count")
    division = r.u16("division")
    if fmt not in (0, 1):
        raise MidiParseError(f"unsupported format {fmt}", r.pos - 6)
    if division & 0x8000:
        raise MidiParseError("SMPTE division is not beat-based", r.pos - 2)
    if division == 0:
        raise MidiParseError("zero ticks per beat", r.pos - 2)
    r.take(header_len - 6, "header padding")

    notes: list[RawNote] = []
    unclosed = 0
    track_index = 0
    while r.remaining() > 0:
        chunk_id = r.take(4, "chunk id")
        chunk_len = r.u32("chunk length")
        if chunk_id != b"MTrk":
            # Unknown chunk types are legal between tracks; skip them whole.
            r.take(chunk_len, "unknown chunk body")
            continue
        track_end = r.pos + chunk_len
        if track_end > len(data):
            raise MidiParseError("track chunk overruns file", r.pos - 4)
        got, n_open = _parse_track(r, track_end, track_index, include_drums)
        notes.extend(got)
        unclosed += n_open
        track_index += 1

    if track_index != declared_tracks:
        raise MidiParseError(
            f"header declared {declared_tracks} tracks, found {track_index}", r.pos
        )
    return ParsedMidi(tuple(notes), division, fmt, unclosed)


def _parse_track(
    r: _Reader, track_end: int, track_index: int, include_drums: bool
) -> tuple[list[RawNote], int]:
    notes: list[RawNote] = []
    # FIFO queues of (onset_tick, program) keyed by (channel, pitch).
    open_notes: dict[tuple[int, int], list[tuple[int, int]]] = {}
    programs = [0] * 16
    tick = 0
    running_status = 0

    def close(key: tuple[int, int], off_tick: int) -> None:
        onset, program = open_notes[key].pop(0)
        if not open_notes[key]:
            del open_notes[key]
        channel, pitch = key
        if channel == DRUM_CHANNEL and not include_drums:
            return
        notes.append(
            RawNote(onset, max(1, off_tick - onset), pitch, program, track_index)
        )

    while r.pos < track_end:
        tick += r.varint()
        status_off = r.pos
        first = r.u8("event status")
        if first & 0x80:
            status = first
        else:
            if running_status == 0:
                raise MidiParseError("data byte without running status", status_off)
            status = running_status
            r.pos = status_off  # re-read as a data byte below

        if status == 0xFF:
            meta_type = r.u8("meta type")
            length = r.varint()
            r.take(length, "meta payload")
            running_status = 0
            if meta_type == 0x2F:
                break  # end of track; any padding is skipped after the loop
            continue
        if status in (0xF0, 0xF7):
            length = r.varint()
            r.take(length, "sysex payload")
            running_status = 0
            continue
        if status >= 0xF0:
            raise MidiParseError(f"unexpected status 0x{status:02x}", status_off)

        running_status = status
        kind = status & 0xF0
        channel = status & 0x0F
        if kind in (0x80, 0x90, 0xA0, 0xB0, 0xE0):
            a = r.data_byte("first data byte")
            b = r.data_byte("second data byte")
        else:  # 0xC0 program change, 0xD0 channel pressure
            a = r.data_byte("data byte")
            b = 0

        if kind == 0xC0:
            programs[channel] = a
        elif kind == 0x90 and b > 0:
            open_notes.setdefault((channel, a), []).append((tick, programs[channel]))
        elif kind == 0x80 or (kind == 0x90 and b == 0):
            key = (channel, a)
            if key in open_notes:
                close(key, tick)
            # A note-off with nothing open is harmless noise; drop it.

    r.pos = track_end
    n_open = sum(len(v) for v in open_notes.values())
    for key in sorted(open_notes):
        while key in open_notes:
            close(key, tick)
    return notes, n_open


def quantize(
    notes: list[RawNote] | tuple[RawNote, ...],
    ticks_per_beat: int,
    grid: GridSpec,
) -> tuple[list[QuantNote], int]:
    """Snap notes to the grid. Returns (quantized notes, dropped count).

    Onsets and durations round half away from zero in exact integer
    arithmetic. Durations clamp to [1, max_duration]; notes whose beat
    lands at or beyond max_beat are dropped and counted.
    """
    if ticks_per_beat <= 0:
        raise ValueError("ticks_per_beat must be positive")
    out: list[QuantNote] = []
    dropped = 0
    res = grid.resolution
    for note in notes:
        steps = round_half_away(note.onset_ticks * res, ticks_per_beat)
        beat, position = divmod(steps, res)
        if beat >= grid.max_beat:
            dropped += 1
            continue
        duration = round_half_away(note.duration_ticks * res, ticks_per_beat)
        duration = min(max(duration, 1), grid.max_duration)
        out.append(QuantNote(beat, position, note.pitch, duration, note.program))
    return out, dropped


def build_piece(
    parsed: ParsedMidi, grid: GridSpec, source_id: str
) -> Piece:
    """Quantize a parsed file into canonical per-track note lists.

    Tracks that end up empty (no notes, or all notes dropped) are omitted,
    keeping file order for the rest.
    """
    by_track: dict[int, list[RawNote]] = {}
    for note in parsed.notes:
        by_track.setdefault(note.track_index, []).append(note)
    tracks: list[tuple[QuantNote, ...]] = []
    dropped = 0
    for index in sorted(by_track):
        quant, n_drop = quantize(by_track[index], parsed.ticks_per_beat, grid)
        dropped += n_drop
        if quant:
            tracks.append(tuple(sorted(quant)))
    return Piece(source_id, grid, tuple(tracks), dropped, parsed.unclosed_notes)


def piece_from_bytes(
    data: bytes, source_id: str, grid: GridSpec, *, include_drums: bool = False
) -> Piece:
    return build_piece(parse_midi(data, include_drums=include_drums), grid, source_id)


def split_tracks(piece: Piece) -> tuple[tuple[QuantNote, ...], tuple[QuantNote, ...]]:
    if len(piece.tracks) != 2:
        raise IneligiblePieceError(
            f"expected exactly 2 non-empty tracks, found {len(piece.tracks)}",
            piece.source_id,
        )
    return piece.tracks[0], piece.tracks[1]


def merge_tracks(
    x: tuple[QuantNote, ...] | list[QuantNote],
    y: tuple[QuantNote, ...] | list[QuantNote],
) -> tuple[QuantNote, ...]:
    """Multiset union in canonical order. Track identity does not survive."""
    return tuple(sorted(list(x) + list(y)))


def track_to_text(track: tuple[QuantNote, ...] | list[QuantNote]) -> str:
    lines = [
        f"{n.beat} {n.position} {n.pitch} {n.duration_steps} {n.program}"
        for n in track
    ]
    return "\n".join(lines) + ("\n" if lines else "")


def track_from_text(text: str) -> tuple[QuantNote, ...]:
    notes = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise ValueError(f"line {lineno}: expected 5 integers, got {len(parts)}")
        try:
            values = [int(p) for p in parts]
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
        if any(v < 0 for v in values):
            raise ValueError(f"line {lineno}: negative field")
        notes.append(QuantNote(*values))
    return tuple(notes)
