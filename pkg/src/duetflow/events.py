"""Six-field event encoding of quantized tracks.

An event is (type, beat, position, pitch, duration, instrument). Types:

    0 piece start          1 instrument declaration
    2 start of notes       3 note
    4 piece end

Structural events (0, 2, 4) carry zeros in every other field; instrument
events carry only the instrument field. One encoded sequence is: start,
the distinct programs in ascending order, start-of-notes, the notes in
canonical order, end.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

from .grid import GridSpec
from .midi import QuantNote, merge_tracks

TYPE_START = 0
TYPE_INSTRUMENT = 1
TYPE_NOTES_BEGIN = 2
TYPE_NOTE = 3
TYPE_END = 4

N_FIELDS = 6
FIELD_NAMES = ("type", "beat", "position", "pitch", "duration", "instrument")


class Event(NamedTuple):
    type: int
    beat: int
    position: int
    pitch: int
    duration: int
    instrument: int


class SequenceStructureError(ValueError):
    """Sequence violates the encoding invariants. Carries the event index."""

    def __init__(self, message: str, index: int) -> None:
        super().__init__(f"event {index}: {message}")
        self.index = index


@dataclass(frozen=True, slots=True)
class EventSequence:
    events: tuple[Event, ...]
    grid: GridSpec

    def __len__(self) -> int:
        return len(self.events)

    @property
    def note_count(self) -> int:
        return sum(1 for e in self.events if e.type == TYPE_NOTE)


def vocab_sizes(grid: GridSpec) -> tuple[int, ...]:
    """Per-field vocabulary sizes for models over this grid.

    Duration needs max_duration + 1 slots: notes use 1..max_duration and
    structural events carry 0.
    """
    return (5, grid.max_beat, grid.resolution, 128, grid.max_duration + 1, 128)


def _check_note_fields(note: QuantNote, grid: GridSpec) -> str | None:
    if not 0 <= note.beat < grid.max_beat:
        return f"beat {note.beat} outside [0, {grid.max_beat})"
    if not 0 <= note.position < grid.resolution:
        return f"position {note.position} outside [0, {grid.resolution})"
    if not 0 <= note.pitch < 128:
        return f"pitch {note.pitch} outside [0, 128)"
    if not 1 <= note.duration_steps <= grid.max_duration:
        return f"duration {note.duration_steps} outside [1, {grid.max_duration}]"
    if not 0 <= note.program < 128:
        return f"program {note.program} outside [0, 128)"
    return None


def encode(
    tracks: Sequence[Sequence[QuantNote]],
    grid: GridSpec,
    *,
    split_shared_programs: bool = False,
) -> EventSequence:
    """Encode one track, or the merge of two, as an event sequence.

    With ``split_shared_programs`` a program used by both tracks keeps its
    id in the first track and becomes (program + 1) mod 128 in the second,
    so the voices stay distinguishable at the cost of merge symmetry.
    """
    if not 1 <= len(tracks) <= 2:
        raise ValueError(f"expected 1 or 2 tracks, got {len(tracks)}")
    prepared = [list(t) for t in tracks]
    if split_shared_programs and len(prepared) == 2:
        first_programs = {n.program for n in prepared[0]}
        prepared[1] = [
            n._replace(program=(n.program + 1) % 128)
            if n.program in first_programs
            else n
            for n in prepared[1]
        ]
    notes = merge_tracks(*prepared) if len(prepared) == 2 else tuple(sorted(prepared[0]))
    if not notes:
        raise ValueError("cannot encode an empty note list")
    for note in notes:
        problem = _check_note_fields(note, grid)
        if problem is not None:
            raise ValueError(problem)

    events = [Event(TYPE_START, 0, 0, 0, 0, 0)]
    for program in sorted({n.program for n in notes}):
        events.append(Event(TYPE_INSTRUMENT, 0, 0, 0, 0, program))
    events.append(Event(TYPE_NOTES_BEGIN, 0, 0, 0, 0, 0))
    for n in notes:
        events.append(
            Event(TYPE_NOTE, n.beat, n.position, n.pitch, n.duration_steps, n.program)
        )
    events.append(Event(TYPE_END, 0, 0, 0, 0, 0))
    return EventSequence(tuple(events), grid)


def validate_sequence(seq: EventSequence) -> None:
    """Raise SequenceStructureError at the first offending event."""
    events = seq.events
    grid = seq.grid
    if not events or events[0] != Event(TYPE_START, 0, 0, 0, 0, 0):
        raise SequenceStructureError("expected the start event", 0)
    i = 1
    header: list[int] = []
    while i < len(events) and events[i].type == TYPE_INSTRUMENT:
        e = events[i]
        if (e.beat, e.position, e.pitch, e.duration) != (0, 0, 0, 0):
            raise SequenceStructureError("instrument event with stray fields", i)
        if not 0 <= e.instrument < 128:
            raise SequenceStructureError(f"instrument {e.instrument} out of range", i)
        if header and e.instrument <= header[-1]:
            raise SequenceStructureError("instruments not strictly ascending", i)
        header.append(e.instrument)
        i += 1
    if not header:
        raise SequenceStructureError("expected at least one instrument event", i)
    if i >= len(events) or events[i] != Event(TYPE_NOTES_BEGIN, 0, 0, 0, 0, 0):
        raise SequenceStructureError("expected the start-of-notes event", i)
    i += 1
    declared = set(header)
    prev: Event | None = None
    while i < len(events) and events[i].type == TYPE_NOTE:
        e = events[i]
        note = QuantNote(e.beat, e.position, e.pitch, e.duration, e.instrument)
        problem = _check_note_fields(note, grid)
        if problem is not None:
            raise SequenceStructureError(problem, i)
        if e.instrument not in declared:
            raise SequenceStructureError(
                f"note instrument {e.instrument} not declared in header", i
            )
        if prev is not None and tuple(e)[1:] < tuple(prev)[1:]:
            raise SequenceStructureError("notes out of canonical order", i)
        prev = e
        i += 1
    if i >= len(events) or events[i] != Event(TYPE_END, 0, 0, 0, 0, 0):
        raise SequenceStructureError("expected the end event", i)
    if i != len(events) - 1:
        raise SequenceStructureError("content after the end event", i + 1)


def decode(seq: EventSequence) -> tuple[QuantNote, ...]:
    """Notes of a valid sequence, in canonical order."""
    validate_sequence(seq)
    return tuple(
        QuantNote(e.beat, e.position, e.pitch, e.duration, e.instrument)
        for e in seq.events
        if e.type == TYPE_NOTE
    )


def seq_to_text(seq: EventSequence) -> str:
    return "\n".join(" ".join(str(v) for v in e) for e in seq.events) + "\n"


def seq_from_text(text: str, grid: GridSpec, *, validate: bool = True) -> EventSequence:
    events = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != N_FIELDS:
            raise ValueError(f"line {lineno}: expected 6 integers, got {len(parts)}")
        try:
            events.append(Event(*(int(p) for p in parts)))
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    seq = EventSequence(tuple(events), grid)
    if validate:
        validate_sequence(seq)
    return seq


def sequences_from_notes(
    x: Iterable[QuantNote],
    y: Iterable[QuantNote],
    grid: GridSpec,
    *,
    split_shared_programs: bool = False,
) -> tuple[EventSequence, EventSequence, EventSequence]:
    """The (X, Y, merged XY) encodings scored by the flow estimator."""
    x = tuple(x)
    y = tuple(y)
    return (
        encode([x], grid),
        encode([y], grid),
        encode([x, y], grid, split_shared_programs=split_shared_programs),
    )
