import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sigsym import symbols as S
from sigsym.errors import (ArityError, ContractError, ParseError, RangeError,
                           UnsupportedVersionError, VocabularyError)


VOCAB1 = S.VocabSpec(instruments=("alto_sax",), octaves=8)
VOCAB2 = S.VocabSpec(instruments=("alto_sax", "violin"), octaves=8)


def test_block_geometry():
    assert VOCAB1.family_sizes == (12, 8, 3)
    assert VOCAB1.block_length == 23
    assert VOCAB1.code_length == 23
    assert VOCAB2.code_length == 46


def test_encode_known_positions():
    # C, octave 4, mf -> ones at 0, 12+4, 20+1
    vec = S.encode_labels([S.LabelTriplet(0, 4, 1)], VOCAB1)
    assert vec.shape == (23,)
    assert vec.sum() == 3
    assert set(np.nonzero(vec)[0]) == {0, 16, 21}


def test_encode_two_sources_offsets():
    vec = S.encode_labels([S.LabelTriplet(0, 4, 1), S.LabelTriplet(9, 3, 2)], VOCAB2)
    assert set(np.nonzero(vec)[0]) == {0, 16, 21, 23 + 9, 23 + 12 + 3, 23 + 20 + 2}


def test_encode_decode_round_trip_exhaustive():
    for pc in range(12):
        for octave in range(8):
            for dyn in range(3):
                t = S.LabelTriplet(pc, octave, dyn)
                vec = S.encode_labels([t], VOCAB1)
                assert S.triplets_from_code(vec, VOCAB1) == [t]


@given(st.lists(st.tuples(st.integers(0, 11), st.integers(0, 7), st.integers(0, 2)),
                min_size=2, max_size=2))
def test_encode_decode_round_trip_two_sources(pair):
    triplets = [S.LabelTriplet(*t) for t in pair]
    vec = S.encode_labels(triplets, VOCAB2)
    assert S.triplets_from_code(vec, VOCAB2) == triplets


def test_encode_rejects_out_of_vocab():
    with pytest.raises(VocabularyError):
        S.encode_labels([S.LabelTriplet(12, 0, 0)], VOCAB1)
    with pytest.raises(VocabularyError):
        S.encode_labels([S.LabelTriplet(0, 8, 0)], VOCAB1)
    with pytest.raises(ArityError):
        S.encode_labels([S.LabelTriplet(0, 0, 0)], VOCAB2)


def test_decode_labels_tie_breaks_to_lowest_index():
    probs = [np.full(12, 1.0 / 12), np.full(8, 1.0 / 8), np.full(3, 1.0 / 3)]
    triplets, confs = S.decode_labels(probs, VOCAB1)
    assert triplets == [S.LabelTriplet(0, 0, 0)]
    assert confs[0][0] == pytest.approx(1.0 / 12)


def test_decode_labels_rejects_unnormalized():
    probs = [np.full(12, 1.0 / 12), np.full(8, 1.0 / 8), np.array([0.5, 0.4, 0.2])]
    with pytest.raises(ContractError):
        S.decode_labels(probs, VOCAB1)


def test_vocab_requires_alphabetical_instruments():
    with pytest.raises(ContractError):
        S.VocabSpec(instruments=("violin", "alto_sax"))


# -- MIDI byte-level construction oracle ------------------------------------


def varlen(value):
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append(0x80 | (value & 0x7F))
        value >>= 7
    return bytes(reversed(out))


def smf(track_events, fmt=0, division=480, extra_tracks=()):
    body = b""
    for delta, payload in track_events:
        body += varlen(delta) + payload
    body += varlen(0) + bytes([0xFF, 0x2F, 0x00])  # end of track
    tracks = [body] + list(extra_tracks)
    out = b"MThd" + struct.pack(">IHHH", 6, fmt, len(tracks), division)
    for t in tracks:
        out += b"MTrk" + struct.pack(">I", len(t)) + t
    return out


def test_parse_single_note():
    data = smf([
        (0, bytes([0x90, 60, 100])),
        (480, bytes([0x80, 60, 0])),
    ])
    events, tempo = parse = S.parse_midi(data)
    assert len(events) == 1
    ev = events[0]
    assert ev.midi_pitch == 60 and ev.velocity == 100 and ev.channel == 0
    # default tempo 500000 us/quarter, 480 ticks/quarter -> 0.5 s
    assert ev.onset == pytest.approx(0.0)
    assert ev.duration == pytest.approx(0.5)


def test_running_status_and_velocity_zero_off():
    data = smf([
        (0, bytes([0x90, 60, 80])),
        (240, bytes([62, 90])),        # running status note-on
        (240, bytes([60, 0])),         # running status, vel 0 -> off
        (240, bytes([62, 0])),
    ])
    events, _ = S.parse_midi(data)
    assert [e.midi_pitch for e in events] == [60, 62]
    assert events[0].duration == pytest.approx(0.5)
    assert events[1].duration == pytest.approx(0.5)


def test_tempo_change_scales_seconds():
    data = smf([
        (0, bytes([0xFF, 0x51, 0x03, 0x0F, 0x42, 0x40])),  # 1e6 us per quarter
        (0, bytes([0x90, 60, 100])),
        (480, bytes([0x80, 60, 0])),
    ])
    events, tempo_map = S.parse_midi(data)
    assert events[0].duration == pytest.approx(1.0)
    assert (0, 1000000) in tempo_map


def test_format_one_merges_tracks():
    melody = varlen(0) + bytes([0x91, 64, 70]) + varlen(480) + bytes([0x81, 64, 0])
    melody += varlen(0) + bytes([0xFF, 0x2F, 0x00])
    data = smf([(0, bytes([0x90, 60, 100])), (480, bytes([0x80, 60, 0]))],
               fmt=1, extra_tracks=[melody])
    events, _ = S.parse_midi(data)
    assert sorted(e.midi_pitch for e in events) == [60, 64]
    assert {e.channel for e in events} == {0, 1}


def test_truncated_file_reports_offset():
    data = smf([(0, bytes([0x90, 60, 100])), (480, bytes([0x80, 60, 0]))])
    with pytest.raises(ParseError) as err:
        S.parse_midi(data[:20])
    assert err.value.offset is not None


def test_format_two_rejected():
    data = smf([(0, bytes([0x90, 60, 100])), (1, bytes([0x80, 60, 0]))], fmt=2)
    with pytest.raises(UnsupportedVersionError):
        S.parse_midi(data)


def test_dangling_note_on_closes_at_track_end(caplog):
    import logging
    data = smf([(0, bytes([0x90, 60, 100])), (960, bytes([0x90, 62, 100]))])
    with caplog.at_level(logging.WARNING, logger="sigsym.symbols"):
        events, _ = S.parse_midi(data)
    assert len(events) == 2
    assert any("note-on without note-off" in r.message for r in caplog.records)


def test_non_midi_bytes_rejected():
    with pytest.raises(ParseError):
        S.parse_midi(b"RIFFxxxxWAVE")


@settings(max_examples=200, deadline=None)
@given(st.binary(max_size=256))
def test_fuzzed_bytes_never_crash(data):
    try:
        S.parse_midi(data)
    except (ParseError, UnsupportedVersionError):
        pass


@settings(max_examples=60, deadline=None)
@given(st.binary(max_size=64))
def test_fuzzed_track_bodies_never_crash(body):
    head = b"MThd" + struct.pack(">IHHH", 6, 0, 1, 480)
    data = head + b"MTrk" + struct.pack(">I", len(body)) + body
    try:
        S.parse_midi(data)
    except (ParseError, UnsupportedVersionError):
        pass


# -- label mapping -----------------------------------------------------------


def test_velocity_bands():
    assert S.velocity_to_dynamics(1) == 0
    assert S.velocity_to_dynamics(42) == 0
    assert S.velocity_to_dynamics(43) == 1
    assert S.velocity_to_dynamics(85) == 1
    assert S.velocity_to_dynamics(86) == 2
    assert S.velocity_to_dynamics(127) == 2
    with pytest.raises(RangeError):
        S.velocity_to_dynamics(0)
    # monotone
    bands = [S.velocity_to_dynamics(v) for v in range(1, 128)]
    assert bands == sorted(bands)


def test_pitch_mapping_and_clamping(caplog):
    import logging
    assert S.pitch_to_class_octave(60, VOCAB1) == (0, 4)   # middle C
    assert S.pitch_to_class_octave(69, VOCAB1) == (9, 4)   # A4
    assert S.triplet_to_midi_pitch(S.LabelTriplet(9, 4, 1)) == 69
    with caplog.at_level(logging.WARNING, logger="sigsym.symbols"):
        pc, octave = S.pitch_to_class_octave(119, VOCAB1)  # B8 -> clamp to 7
    assert (pc, octave) == (11, 7)
    assert any("clamped" in r.message for r in caplog.records)


def test_midi_to_labels_round_trip():
    data = smf([
        (0, bytes([0x90, 69, 100])),
        (480, bytes([0x80, 69, 0])),
        (0, bytes([0x90, 48, 30])),
        (480, bytes([0x80, 48, 0])),
    ])
    events, _ = S.parse_midi(data)
    labels = S.midi_to_labels(events, VOCAB1)
    assert labels[0].triplet == S.LabelTriplet(9, 4, 2)
    assert labels[1].triplet == S.LabelTriplet(0, 3, 0)
    assert labels[0].instrument == "alto_sax"


def test_sidecar_round_trip(tmp_path):
    records = [
        {"file": "a.wav", "instrument": "alto_sax", "pitch_class": 0, "octave": 4, "dynamics": "mf"},
        {"file": "b.wav"},
    ]
    path = tmp_path / "labels.jsonl"
    S.write_sidecar(path, records)
    back = S.read_sidecar(path)
    assert back == records


def test_sidecar_bad_line_reports_line_number(tmp_path):
    path = tmp_path / "labels.jsonl"
    path.write_text('{"file": "a.wav"}\nnot json\n')
    with pytest.raises(ParseError) as err:
        S.read_sidecar(path)
    assert err.value.offset == 2
