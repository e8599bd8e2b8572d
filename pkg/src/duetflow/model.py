"""Count-based sequence model over events, with interpolated back-off.

The model keeps, for every context length j = 0..k, a table mapping the
hash of the last j whole events to per-field next-event counts. Prediction
interpolates from the uniform distribution up through every matched
context length:

    P_-1 = uniform
    P_j  = (counts_j + lambda * P_{j-1}) / (total_j + lambda)

Context hashing is a fixed 64-bit mix, so trained models are reproducible
across runs and platforms. The six fields of the next event are predicted
independently given the context.
"""
from __future__ import annotations

import hashlib
import io
import math
import os
import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .events import (
    Event,
    EventSequence,
    N_FIELDS,
    TYPE_END,
    TYPE_INSTRUMENT,
    TYPE_NOTE,
    TYPE_NOTES_BEGIN,
    TYPE_START,
    SequenceStructureError,
    encode,
    vocab_sizes,
)
from .grid import GridSpec
from .midi import QuantNote

_MASK64 = (1 << 64) - 1
_CTX_MULT = 0x100000001B3
_FIELD_SEED = 0x9E3779B97F4A7C15

MAGIC = b"DFM1"
FORMAT_VERSION = 1


def _mix64(x: int) -> int:
    x &= _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def event_hash(e: Event) -> int:
    h = _FIELD_SEED
    for v in e:
        # int() guards against numpy integers, which overflow the xor below.
        h = _mix64(h ^ (int(v) + _FIELD_SEED))
    return h


@dataclass(frozen=True, slots=True)
class FieldDistributions:
    """One probability vector per event field."""

    vectors: tuple[np.ndarray, ...]

    def probability(self, field_index: int, value: int) -> float:
        return float(self.vectors[field_index][value])

    def validate(self) -> None:
        for i, vec in enumerate(self.vectors):
            total = float(vec.sum())
            if abs(total - 1.0) > 1e-9:
                raise AssertionError(f"field {i} sums to {total}")
            if float(vec.min()) <= 0.0:
                raise AssertionError(f"field {i} has a non-positive entry")


@dataclass
class ContextModel:
    k: int
    lam: float
    grid: GridSpec
    # tables[j]: context hash -> [total, {value * 8 + field: count}]
    tables: list[dict[int, list]]
    trained_events: int = 0
    _fingerprint: str | None = field(default=None, repr=False, compare=False)

    @property
    def vocab(self) -> tuple[int, ...]:
        return vocab_sizes(self.grid)

    def fingerprint(self) -> str:
        if self._fingerprint is None:
            digest = hashlib.blake2b(save_model(self), digest_size=8).hexdigest()
            object.__setattr__(self, "_fingerprint", digest)
        return self._fingerprint

    def _matched_entries(self, ctx_hashes: Sequence[int]) -> list[list]:
        """Entries for the longest matched context prefix, shortest first."""
        entries = []
        for j, h in enumerate(ctx_hashes):
            entry = self.tables[j].get(h) if j < len(self.tables) else None
            if entry is None:
                break
            entries.append(entry)
        return entries

    def _context_hashes(self, context: Sequence[Event], limit: int) -> list[int]:
        kmax = min(self.k, limit, len(context))
        hashes = [0]
        acc = 0
        power = 1
        for i in range(1, kmax + 1):
            acc = (acc + event_hash(context[-i]) * power) & _MASK64
            power = (power * _CTX_MULT) & _MASK64
            hashes.append(acc)
        return hashes

    def predict_next(self, context: Sequence[Event]) -> FieldDistributions:
        """Distributions over the next event's fields given trailing context."""
        entries = self._matched_entries(self._context_hashes(context, self.k))
        lam = self.lam
        vectors = []
        for f, size in enumerate(self.vocab):
            vec = np.full(size, 1.0 / size)
            for entry in entries:
                total, counts = entry
                out = vec * (lam / (total + lam))
                for key, c in counts.items():
                    if key & 7 == f:
                        out[key >> 3] += c / (total + lam)
                vec = out
            vectors.append(vec)
        return FieldDistributions(tuple(vectors))


def empty_model(grid: GridSpec, k: int = 4, lam: float = 1.0) -> ContextModel:
    """A model with no counts; every prediction is uniform."""
    if k < 0:
        raise ValueError("k must be >= 0")
    if not lam > 0:
        raise ValueError("lambda must be positive")
    return ContextModel(k, lam, grid, [{} for _ in range(k + 1)], 0)


def train(corpus: Sequence[EventSequence], k: int, lam: float = 1.0) -> ContextModel:
    """Count every event of every sequence under context lengths 0..min(k, t)."""
    if not corpus:
        raise ValueError("training corpus is empty")
    if k < 0:
        raise ValueError("k must be >= 0")
    if not lam > 0:
        raise ValueError("lambda must be positive")
    grid = corpus[0].grid
    for seq in corpus:
        if seq.grid != grid:
            raise ValueError(f"mixed grids in corpus: {seq.grid} vs {grid}")
    tables: list[dict[int, list]] = [{} for _ in range(k + 1)]
    total_events = 0
    for seq in corpus:
        hashes = [0] * (k + 1)
        for t, e in enumerate(seq.events):
            avail = min(k, t)
            for j in range(avail + 1):
                entry = tables[j].get(hashes[j])
                if entry is None:
                    entry = [0, {}]
                    tables[j][hashes[j]] = entry
                entry[0] += 1
                counts = entry[1]
                for f in range(N_FIELDS):
                    key = (e[f] << 3) | f
                    counts[key] = counts.get(key, 0) + 1
            eh = event_hash(e)
            for j in range(k, 0, -1):
                hashes[j] = (eh + _CTX_MULT * hashes[j - 1]) & _MASK64
            total_events += 1
    return ContextModel(k, lam, grid, tables, total_events)


def predict_next(model: ContextModel, context: Sequence[Event]) -> FieldDistributions:
    return model.predict_next(context)


def score_sequence(
    model: ContextModel,
    events: Sequence[Event],
    context_len: int,
    mode: str = "nll",
) -> np.ndarray:
    """Per-event, per-field scores in nats, shape (len(events), 6).

    nll mode scores the realized value, -log p(value | context); predictive
    mode scores the full predicted distribution, -sum p log p. The context
    window is the last min(k, context_len, t) events.
    """
    if mode not in ("nll", "predictive"):
        raise ValueError(f"unknown mode {mode!r}")
    if context_len < 0:
        raise ValueError("context_len must be >= 0")
    kmax = min(model.k, context_len)
    lam = model.lam
    vocab = model.vocab
    tables = model.tables
    out = np.empty((len(events), N_FIELDS))
    hashes = [0] * (kmax + 1)
    log = math.log
    for t, e in enumerate(events):
        avail = min(kmax, t)
        entries = []
        for j in range(avail + 1):
            entry = tables[j].get(hashes[j])
            if entry is None:
                break
            entries.append(entry)
        if mode == "nll":
            for f in range(N_FIELDS):
                p = 1.0 / vocab[f]
                key = (e[f] << 3) | f
                for entry in entries:
                    p = (entry[1].get(key, 0) + lam * p) / (entry[0] + lam)
                out[t, f] = -log(p)
        else:
            for f in range(N_FIELDS):
                vec = np.full(vocab[f], 1.0 / vocab[f])
                for entry in entries:
                    total, counts = entry
                    nxt = vec * (lam / (total + lam))
                    for key, c in counts.items():
                        if key & 7 == f:
                            nxt[key >> 3] += c / (total + lam)
                    vec = nxt
                out[t, f] = float(-(vec * np.log(vec)).sum())
        eh = event_hash(e)
        for j in range(kmax, 0, -1):
            hashes[j] = (eh + _CTX_MULT * hashes[j - 1]) & _MASK64
    return out


@dataclass(frozen=True, slots=True)
class GenerationResult:
    sequence: EventSequence
    sampled_notes: tuple[QuantNote, ...]


def _validate_prime(prime: EventSequence) -> list[Event]:
    events = list(prime.events)
    if events and events[-1].type == TYPE_END:
        events = events[:-1]
    stage = TYPE_START
    for i, e in enumerate(events):
        if i == 0:
            if e != Event(TYPE_START, 0, 0, 0, 0, 0):
                raise SequenceStructureError("prime must open with the start event", 0)
            continue
        if e.type == TYPE_INSTRUMENT and stage in (TYPE_START, TYPE_INSTRUMENT):
            stage = TYPE_INSTRUMENT
        elif e.type == TYPE_NOTES_BEGIN and stage == TYPE_INSTRUMENT:
            stage = TYPE_NOTES_BEGIN
        elif e.type == TYPE_NOTE and stage in (TYPE_NOTES_BEGIN, TYPE_NOTE):
            stage = TYPE_NOTE
        else:
            raise SequenceStructureError("prime is not a valid sequence prefix", i)
    if stage == TYPE_START:
        raise SequenceStructureError("prime header is incomplete", len(events))
    if stage == TYPE_INSTRUMENT:
        events.append(Event(TYPE_NOTES_BEGIN, 0, 0, 0, 0, 0))
    return events


def generate(
    model: ContextModel, prime: EventSequence, steps: int, seed: int
) -> GenerationResult:
    """Sample `steps` note events after the prime, then close the sequence.

    Every sampled event is forced to be a note (durations resample away
    from zero); the finished sequence is re-canonicalized so downstream
    consumers see a valid encoding. With steps == 0 the prime itself is
    returned, terminated.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    context = _validate_prime(prime)
    if steps == 0:
        seq = EventSequence(tuple(context) + (Event(TYPE_END, 0, 0, 0, 0, 0),), prime.grid)
        return GenerationResult(seq, ())
    rng = np.random.default_rng(seed)
    sampled: list[QuantNote] = []
    for _ in range(steps):
        dists = model.predict_next(context)
        values = []
        for f in range(1, N_FIELDS):
            vec = dists.vectors[f]
            if f == 4:
                vec = vec.copy()
                vec[0] = 0.0  # a note cannot have duration zero
            vec = vec / vec.sum()
            values.append(int(rng.choice(len(vec), p=vec)))
        e = Event(TYPE_NOTE, *values)
        context.append(e)
        sampled.append(QuantNote(e.beat, e.position, e.pitch, e.duration, e.instrument))
    notes = [
        QuantNote(e.beat, e.position, e.pitch, e.duration, e.instrument)
        for e in context
        if e.type == TYPE_NOTE
    ]
    return GenerationResult(encode([notes], model.grid), tuple(sorted(sampled)))


def save_model(model: ContextModel) -> bytes:
    """Serialize to a fixed little-endian layout, keys sorted for stability."""
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(
        struct.pack(
            "<HIdIIIQ",
            FORMAT_VERSION,
            model.k,
            model.lam,
            model.grid.resolution,
            model.grid.max_beat,
            model.grid.max_duration,
            model.trained_events,
        )
    )
    for table in model.tables:
        buf.write(struct.pack("<Q", len(table)))
        for ctx in sorted(table):
            total, counts = table[ctx]
            buf.write(struct.pack("<QQI", ctx, total, len(counts)))
            for key in sorted(counts):
                buf.write(struct.pack("<QQ", key, counts[key]))
    return buf.getvalue()


def load_model(data: bytes) -> ContextModel:
    if data[:4] != MAGIC:
        raise ValueError("not a model file (bad magic)")
    offset = 4
    header = struct.Struct("<HIdIIIQ")
    try:
        version, k, lam, res, max_beat, max_dur, trained = header.unpack_from(
            data, offset
        )
    except struct.error as exc:
        raise ValueError(f"truncated model header: {exc}") from None
    offset += header.size
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported model version {version}")
    if not lam > 0:
        raise ValueError(f"invalid lambda {lam}")
    try:
        grid = GridSpec(res, max_beat, max_dur)
    except ValueError as exc:
        raise ValueError(f"invalid grid in model header: {exc}") from None
    tables: list[dict[int, list]] = []
    try:
        for _ in range(k + 1):
            (n_entries,) = struct.unpack_from("<Q", data, offset)
            offset += 8
            table: dict[int, list] = {}
            for _ in range(n_entries):
                ctx, total, n_pairs = struct.unpack_from("<QQI", data, offset)
                offset += 20
                counts = {}
                for _ in range(n_pairs):
                    key, c = struct.unpack_from("<QQ", data, offset)
                    offset += 16
                    counts[key] = c
                table[ctx] = [total, counts]
            tables.append(table)
    except struct.error as exc:
        raise ValueError(f"truncated model tables: {exc}") from None
    if offset != len(data):
        raise ValueError(f"{len(data) - offset} trailing bytes after model tables")
    return ContextModel(k, lam, grid, tables, trained)


def save_model_file(model: ContextModel, path: str | os.PathLike) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(save_model(model))
    os.replace(tmp, path)


def load_model_file(path: str | os.PathLike) -> ContextModel:
    with open(path, "rb") as fh:
        return load_model(fh.read())
