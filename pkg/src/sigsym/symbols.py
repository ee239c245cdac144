"""Discrete label vocabulary, one-hot codec, and MIDI ingestion.

A label is a (pitch_class, octave, dynamics) triplet; a group of M
sources is described by M triplets in a fixed instrument order. The
vector code concatenates one one-hot block per family per source:
``[pitch | octave | dynamics] * M``.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import (ArityError, ContractError, ParseError, RangeError,
                     UnsupportedVersionError, VocabularyError)

log = logging.getLogger(__name__)

PITCH_NAMES = ("C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B")
DYNAMICS = ("pp", "mf", "ff")

N_PITCH_CLASSES = 12
N_DYNAMICS = 3

# velocity 0 is note-off by convention; bands chosen so the mapping is
# monotone and surjective onto the three levels
_VELOCITY_EDGES = (42, 85)


class LabelTriplet(NamedTuple):
    pitch_class: int
    octave: int
    dynamics: int

    def name(self):
        return f"{PITCH_NAMES[self.pitch_class]}{self.octave}:{DYNAMICS[self.dynamics]}"


@dataclass(frozen=True)
class VocabSpec:
    """Families and their cardinalities for a group of M sources."""

    instruments: tuple
    octaves: int = 8

    def __post_init__(self):
        if len(self.instruments) < 1:
            raise ContractError("at least one instrument")
        if list(self.instruments) != sorted(self.instruments):
            raise ContractError("instruments must be listed alphabetically")
        if len(set(self.instruments)) != len(self.instruments):
            raise ContractError("duplicate instrument name")
        if not 1 <= self.octaves <= 10:
            raise RangeError(f"octaves must be in [1, 10], got {self.octaves}")

    @property
    def n_sources(self):
        return len(self.instruments)

    @property
    def family_sizes(self):
        return (N_PITCH_CLASSES, self.octaves, N_DYNAMICS)

    @property
    def block_length(self):
        return sum(self.family_sizes)

    @property
    def code_length(self):
        return self.block_length * self.n_sources

    def to_dict(self):
        return {"instruments": list(self.instruments), "octaves": self.octaves}

    @classmethod
    def from_dict(cls, d):
        return cls(instruments=tuple(d["instruments"]), octaves=int(d["octaves"]))

    def validate_triplet(self, t: LabelTriplet):
        if not 0 <= t.pitch_class < N_PITCH_CLASSES:
            raise VocabularyError(f"pitch class {t.pitch_class} outside [0, 12)")
        if not 0 <= t.octave < self.octaves:
            raise VocabularyError(f"octave {t.octave} outside [0, {self.octaves})")
        if not 0 <= t.dynamics < N_DYNAMICS:
            raise VocabularyError(f"dynamics index {t.dynamics} outside [0, 3)")


def encode_labels(triplets, vocab: VocabSpec) -> np.ndarray:
    """One-hot encode M triplets into a float32 vector of code_length."""
    if len(triplets) != vocab.n_sources:
        raise ArityError(f"expected {vocab.n_sources} triplets, got {len(triplets)}")
    out = np.zeros(vocab.code_length, dtype=np.float32)
    for i, t in enumerate(triplets):
        t = LabelTriplet(*t)
        vocab.validate_triplet(t)
        base = i * vocab.block_length
        out[base + t.pitch_class] = 1.0
        out[base + N_PITCH_CLASSES + t.octave] = 1.0
        out[base + N_PITCH_CLASSES + vocab.octaves + t.dynamics] = 1.0
    return out


def decode_labels(family_probs, vocab: VocabSpec, atol=1e-6):
    """Pick arg-max labels from per-family probability vectors.

    ``family_probs`` holds 3*M vectors ordered (pitch, octave, dynamics)
    per source. Each must sum to one. Ties resolve to the lowest index.
    Returns (triplets, confidences) where confidences are the winning
    probabilities per family.
    """
    expected = 3 * vocab.n_sources
    if len(family_probs) != expected:
        raise ArityError(f"expected {expected} probability vectors, got {len(family_probs)}")
    sizes = vocab.family_sizes
    triplets = []
    confidences = []
    for i in range(vocab.n_sources):
        picks = []
        confs = []
        for j in range(3):
            p = np.asarray(family_probs[3 * i + j], dtype=np.float64)
            if p.shape != (sizes[j],):
                raise ArityError(f"family {j} of source {i} has size {p.shape}, expected {sizes[j]}")
            if abs(p.sum() - 1.0) > atol or np.any(p < -atol):
                raise ContractError(f"family {j} of source {i} is not a probability vector")
            picks.append(int(np.argmax(p)))
            confs.append(float(p.max()))
        triplets.append(LabelTriplet(*picks))
        confidences.append(tuple(confs))
    return triplets, confidences


def split_code(vector, vocab: VocabSpec):
    """Slice a flat code vector back into per-family blocks."""
    v = np.asarray(vector)
    if v.shape[-1] != vocab.code_length:
        raise ArityError(f"code length {v.shape[-1]} != {vocab.code_length}")
    sizes = vocab.family_sizes
    blocks = []
    for i in range(vocab.n_sources):
        base = i * vocab.block_length
        for s in sizes:
            blocks.append(v[..., base:base + s])
            base += s
    return blocks


def triplets_from_code(vector, vocab: VocabSpec):
    """Arg-max decode of a (possibly soft) code vector."""
    blocks = split_code(np.asarray(vector, dtype=np.float64), vocab)
    out = []
    for i in range(vocab.n_sources):
        pc = int(np.argmax(blocks[3 * i]))
        oc = int(np.argmax(blocks[3 * i + 1]))
        dy = int(np.argmax(blocks[3 * i + 2]))
        out.append(LabelTriplet(pc, oc, dy))
    return out


# -- MIDI ------------------------------------------------------------------


class NoteEvent(NamedTuple):
    onset: float      # seconds
    duration: float   # seconds
    midi_pitch: int
    velocity: int
    channel: int


class TimedLabel(NamedTuple):
    onset: float
    duration: float
    instrument: str
    triplet: LabelTriplet


_META_TEMPO = 0x51
_DEFAULT_TEMPO = 500000  # microseconds per quarter note


class _Cursor:
    __slots__ = ("data", "pos")

    def __init__(self, data, pos=0):
        self.data = data
        self.pos = pos

    def read(self, n):
        if self.pos + n > len(self.data):
            raise ParseError("unexpected end of track data", offset=self.pos)
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def byte(self):
        return self.read(1)[0]

    def varlength(self):
        value = 0
        for _ in range(4):
            b = self.byte()
            value = (value << 7) | (b & 0x7F)
            if not b & 0x80:
                return value
        raise ParseError("variable-length quantity longer than four bytes", offset=self.pos)


def parse_midi(data: bytes):
    """Parse a Standard MIDI File into note events with second timing.

    Supports formats 0 and 1 with running status. Note-on with velocity
    zero counts as note-off. A note still sounding at end of track is
    closed there with a warning. Returns (events, tempo_map) where the
    tempo map lists (tick, microseconds_per_quarter) changes.
    """
    data = bytes(data)
    if len(data) < 14 or data[0:4] != b"MThd":
        raise ParseError("missing MThd header", offset=0)
    (hlen,) = struct.unpack_from(">I", data, 4)
    if hlen != 6:
        raise ParseError(f"MThd length {hlen}, expected 6", offset=4)
    fmt, ntrks, division = struct.unpack_from(">HHH", data, 8)
    if fmt not in (0, 1):
        raise UnsupportedVersionError(f"MIDI format {fmt} not supported (only 0 and 1)")
    if division & 0x8000:
        raise UnsupportedVersionError("SMPTE time division not supported")
    if division == 0:
        raise ParseError("zero ticks per quarter note", offset=12)

    pos = 14
    tracks = []
    for i in range(ntrks):
        if pos + 8 > len(data):
            raise ParseError(f"track {i} header truncated", offset=pos)
        if data[pos:pos + 4] != b"MTrk":
            raise ParseError(f"expected MTrk, got {data[pos:pos + 4]!r}", offset=pos)
        (length,) = struct.unpack_from(">I", data, pos + 4)
        body = data[pos + 8:pos + 8 + length]
        if len(body) < length:
            raise ParseError(f"track {i} body truncated", offset=pos + 8)
        tracks.append((pos + 8, body))
        pos += 8 + length

    tempo_map = [(0, _DEFAULT_TEMPO)]
    raw_notes = []  # (onset_tick, off_tick, pitch, velocity, channel)
    for base, body in tracks:
        cur = _Cursor(body)
        tick = 0
        status = None
        open_notes = {}
        while cur.pos < len(body):
            try:
                tick += cur.varlength()
                b = cur.byte()
                if b & 0x80:
                    status = b
                else:
                    if status is None:
                        raise ParseError("data byte with no running status", offset=base + cur.pos)
                    cur.pos -= 1
                if status == 0xFF:
                    meta = cur.byte()
                    length = cur.varlength()
                    payload = cur.read(length)
                    if meta == _META_TEMPO and length == 3:
                        tempo = (payload[0] << 16) | (payload[1] << 8) | payload[2]
                        tempo_map.append((tick, tempo))
                    continue
                if status in (0xF0, 0xF7):  # sysex
                    cur.read(cur.varlength())
                    continue
                kind = status & 0xF0
                channel = status & 0x0F
                if kind in (0x80, 0x90, 0xA0, 0xB0, 0xE0):
                    d1, d2 = cur.byte(), cur.byte()
                elif kind in (0xC0, 0xD0):
                    d1, d2 = cur.byte(), 0
                else:
                    raise ParseError(f"unknown status byte 0x{status:02X}", offset=base + cur.pos)
            except ParseError as exc:
                if exc.offset is not None and exc.offset <= len(body):
                    raise ParseError(str(exc.args[0]).split(" (at offset")[0],
                                     offset=base + min(cur.pos, len(body))) from None
                raise
            if kind == 0x90 and d2 > 0:
                open_notes.setdefault((channel, d1), []).append((tick, d2))
            elif kind == 0x80 or (kind == 0x90 and d2 == 0):
                stack = open_notes.get((channel, d1))
                if stack:
                    onset, vel = stack.pop(0)
                    raw_notes.append((onset, tick, d1, vel, channel))
        for (channel, pitch), stack in open_notes.items():
            for onset, vel in stack:
                log.warning("note-on without note-off (pitch %d, channel %d); closing at track end",
                            pitch, channel)
                raw_notes.append((onset, max(tick, onset + 1), pitch, vel, channel))

    tempo_map.sort()
    events = []
    for onset_tick, off_tick, pitch, vel, channel in raw_notes:
        events.append(NoteEvent(onset=_ticks_to_seconds(onset_tick, tempo_map, division),
                                duration=max(_ticks_to_seconds(off_tick, tempo_map, division)
                                             - _ticks_to_seconds(onset_tick, tempo_map, division), 0.0),
                                midi_pitch=pitch, velocity=vel, channel=channel))
    events.sort(key=lambda e: (e.onset, e.midi_pitch))
    return events, tempo_map


def _ticks_to_seconds(tick, tempo_map, division):
    seconds = 0.0
    last_tick, tempo = tempo_map[0]
    for change_tick, new_tempo in tempo_map[1:]:
        if change_tick >= tick:
            break
        seconds += (change_tick - last_tick) * tempo / (division * 1e6)
        last_tick, tempo = change_tick, new_tempo
    seconds += (tick - last_tick) * tempo / (division * 1e6)
    return seconds


def velocity_to_dynamics(velocity: int) -> int:
    if not 1 <= velocity <= 127:
        raise RangeError(f"velocity {velocity} outside [1, 127]")
    if velocity <= _VELOCITY_EDGES[0]:
        return 0
    if velocity <= _VELOCITY_EDGES[1]:
        return 1
    return 2


def pitch_to_class_octave(midi_pitch: int, vocab: VocabSpec):
    if not 0 <= midi_pitch <= 127:
        raise RangeError(f"MIDI pitch {midi_pitch} outside [0, 127]")
    pc = midi_pitch % 12
    octave = midi_pitch // 12 - 1
    clamped = min(max(octave, 0), vocab.octaves - 1)
    if clamped != octave:
        log.warning("octave %d clamped to %d for pitch %d", octave, clamped, midi_pitch)
    return pc, clamped


def triplet_to_midi_pitch(t: LabelTriplet) -> int:
    return 12 * (t.octave + 1) + t.pitch_class


def midi_to_labels(events, vocab: VocabSpec, channel_map=None):
    """Convert note events to timed vocabulary labels.

    ``channel_map`` maps MIDI channel -> instrument name; by default all
    channels map to the first instrument.
    """
    channel_map = channel_map or {}
    out = []
    for ev in events:
        name = channel_map.get(ev.channel, vocab.instruments[0])
        if name not in vocab.instruments:
            raise VocabularyError(f"instrument {name!r} not in vocabulary {vocab.instruments}")
        pc, octave = pitch_to_class_octave(ev.midi_pitch, vocab)
        out.append(TimedLabel(onset=ev.onset, duration=ev.duration, instrument=name,
                              triplet=LabelTriplet(pc, octave, velocity_to_dynamics(ev.velocity))))
    return out


# -- sidecar label files -----------------------------------------------------


def write_sidecar(path, records):
    """One JSON object per line: {file, instrument, pitch_class, octave, dynamics}."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_sidecar(path):
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"bad sidecar line: {exc.msg}", offset=lineno) from None
            if "file" not in rec:
                raise ParseError("sidecar record missing 'file'", offset=lineno)
            records.append(rec)
    return records
