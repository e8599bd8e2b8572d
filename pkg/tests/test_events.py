from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from duetflow.events import (
    Event,
    EventSequence,
    SequenceStructureError,
    decode,
    encode,
    seq_from_text,
    seq_to_text,
    sequences_from_notes,
    validate_sequence,
    vocab_sizes,
)
from duetflow.grid import GridSpec
from duetflow.midi import QuantNote, merge_tracks

GRID = GridSpec()


def test_single_note_encoding_layout() -> None:
    seq = encode([[QuantNote(2, 5, 60, 10, 3)]], GRID)
    assert seq.events == (
        Event(0, 0, 0, 0, 0, 0),
        Event(1, 0, 0, 0, 0, 3),
        Event(2, 0, 0, 0, 0, 0),
        Event(3, 2, 5, 60, 10, 3),
        Event(4, 0, 0, 0, 0, 0),
    )
    # the grid places this note at onset step beat * resolution + position
    assert 2 * GRID.resolution + 5 == 29


def test_header_is_sorted_distinct_programs() -> None:
    notes = [QuantNote(0, 0, 60, 1, 40), QuantNote(1, 0, 62, 1, 0), QuantNote(2, 0, 64, 1, 40)]
    seq = encode([notes], GRID)
    header = [e.instrument for e in seq.events if e.type == 1]
    assert header == [0, 40]


def test_header_independent_of_track_order() -> None:
    a = [QuantNote(0, 0, 60, 1, 7)]
    b = [QuantNote(0, 0, 40, 1, 2)]
    assert encode([a, b], GRID) == encode([b, a], GRID)


def test_encode_empty_rejected() -> None:
    with pytest.raises(ValueError, match="empty"):
        encode([[]], GRID)


def test_encode_checks_bounds() -> None:
    with pytest.raises(ValueError, match="beat"):
        encode([[QuantNote(GRID.max_beat, 0, 60, 1, 0)]], GRID)
    with pytest.raises(ValueError, match="duration"):
        encode([[QuantNote(0, 0, 60, 0, 0)]], GRID)


def test_vocab_sizes() -> None:
    assert vocab_sizes(GRID) == (5, 1024, 12, 128, 97, 128)


note_strategy = st.builds(
    QuantNote,
    beat=st.integers(0, 100),
    position=st.integers(0, 11),
    pitch=st.integers(0, 127),
    duration_steps=st.integers(1, 96),
    program=st.integers(0, 127),
)


@given(st.lists(note_strategy, min_size=1, max_size=40))
def test_encode_decode_identity_single(notes) -> None:
    seq = encode([notes], GRID)
    validate_sequence(seq)
    assert decode(seq) == tuple(sorted(notes))


@given(
    st.lists(note_strategy, min_size=1, max_size=20),
    st.lists(note_strategy, min_size=1, max_size=20),
)
def test_encode_decode_identity_merged(xs, ys) -> None:
    seq = encode([xs, ys], GRID)
    assert decode(seq) == merge_tracks(xs, ys)


@given(st.lists(note_strategy, min_size=1, max_size=30))
def test_text_round_trip(notes) -> None:
    seq = encode([notes], GRID)
    assert seq_from_text(seq_to_text(seq), GRID) == seq


def test_decode_names_first_offending_index() -> None:
    good = encode([[QuantNote(0, 0, 60, 4, 0), QuantNote(1, 0, 62, 4, 0)]], GRID)
    events = list(good.events)
    events[3], events[4] = events[4], events[3]  # notes out of order
    with pytest.raises(SequenceStructureError) as err:
        decode(EventSequence(tuple(events), GRID))
    assert err.value.index == 4

    with pytest.raises(SequenceStructureError) as err:
        decode(EventSequence(good.events[1:], GRID))
    assert err.value.index == 0

    # stray field on an instrument event
    events = list(good.events)
    events[1] = Event(1, 0, 0, 3, 0, 0)
    with pytest.raises(SequenceStructureError) as err:
        decode(EventSequence(tuple(events), GRID))
    assert err.value.index == 1

    # missing terminator
    with pytest.raises(SequenceStructureError):
        decode(EventSequence(good.events[:-1], GRID))

    # undeclared instrument on a note
    events = list(good.events)
    events[3] = events[3]._replace(instrument=9)
    with pytest.raises(SequenceStructureError) as err:
        decode(EventSequence(tuple(events), GRID))
    assert err.value.index == 3


def test_seq_from_text_rejects_malformed() -> None:
    with pytest.raises(ValueError, match="line 1"):
        seq_from_text("0 0 0 0 0\n", GRID)
    with pytest.raises(SequenceStructureError):
        seq_from_text("3 0 0 60 1 0\n", GRID)


def test_split_shared_programs_flag() -> None:
    x = [QuantNote(0, 0, 60, 4, 7)]
    y = [QuantNote(1, 0, 40, 4, 7), QuantNote(2, 0, 41, 4, 9)]
    plain = encode([x, y], GRID)
    assert [e.instrument for e in plain.events if e.type == 1] == [7, 9]
    remapped = encode([x, y], GRID, split_shared_programs=True)
    assert [e.instrument for e in remapped.events if e.type == 1] == [7, 8, 9]
    programs = {e.pitch: e.instrument for e in remapped.events if e.type == 3}
    assert programs == {60: 7, 40: 8, 41: 9}


def test_sequences_from_notes_shapes() -> None:
    x = [QuantNote(0, 0, 60, 4, 0)]
    y = [QuantNote(0, 6, 45, 4, 8)]
    sx, sy, sxy = sequences_from_notes(x, y, GRID)
    assert sx.note_count == 1
    assert sy.note_count == 1
    assert sxy.note_count == 2
    assert [e.instrument for e in sxy.events if e.type == 1] == [0, 8]
