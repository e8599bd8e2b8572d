from __future__ import annotations

import pytest

import midibuild
from duetflow.grid import GridSpec
from duetflow.midi import QuantNote

# Two-voice golden file: ticks_per_beat 480, grid resolution 12 (40 ticks per
# step). Expected values below are worked out by hand from those numbers.
MELODY_NOTES = [(0, 480, 60), (480, 240, 64), (740, 250, 67), (1920, 60, 72)]
ACCOMP_NOTES = [(0, 960, 36), (960, 960, 43), (1900, 20, 36), (1920, 480, 48)]

GOLDEN_TICKS_PER_BEAT = 480

GOLDEN_QUANT_MELODY = (
    QuantNote(0, 0, 60, 12, 5),
    QuantNote(1, 0, 64, 6, 5),
    QuantNote(1, 7, 67, 6, 5),   # onset 740 -> 18.5 steps, rounds half away to 19
    QuantNote(4, 0, 72, 2, 5),   # duration 60 -> 1.5 steps, rounds to 2
)
GOLDEN_QUANT_ACCOMP = (
    QuantNote(0, 0, 36, 24, 33),
    QuantNote(2, 0, 43, 24, 33),
    QuantNote(4, 0, 36, 1, 33),  # 20 ticks -> 0.5 steps, rounds to 1
    QuantNote(4, 0, 48, 12, 33),
)


@pytest.fixture(scope="session")
def golden_midi() -> bytes:
    melody = midibuild.note_track(MELODY_NOTES, channel=0, program=5, with_tempo=True)
    accomp = midibuild.note_track(ACCOMP_NOTES, channel=1, program=33)
    return midibuild.build([melody, accomp], ticks_per_beat=GOLDEN_TICKS_PER_BEAT)


@pytest.fixture(scope="session")
def grid() -> GridSpec:
    return GridSpec()
