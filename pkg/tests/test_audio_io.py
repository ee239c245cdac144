import numpy as np
import pytest

from sigsym import audio_io
from sigsym.audio_io import AudioBuffer
from sigsym.errors import FormatError, RangeError


def sine(freq, duration, rate, amp=0.5):
    t = np.arange(int(duration * rate)) / rate
    return (amp * np.sin(2 * np.pi * freq * t)).astype(np.float32)


def test_wav_pcm16_round_trip(tmp_path):
    buf = AudioBuffer(sine(440, 0.25, 22050), 22050)
    path = tmp_path / "tone.wav"
    audio_io.save_audio(path, buf)
    back = audio_io.load_audio(path)
    assert back.sample_rate == 22050
    assert len(back.samples) == len(buf.samples)
    np.testing.assert_allclose(back.samples, buf.samples, atol=2.0 / 32768)


def test_wav_float32_round_trip(tmp_path):
    buf = AudioBuffer(sine(440, 0.1, 22050), 22050)
    path = tmp_path / "tone32.wav"
    audio_io.save_audio(path, buf, bits=32)
    back = audio_io.load_audio(path)
    np.testing.assert_allclose(back.samples, buf.samples, atol=1e-7)


def test_full_scale_pcm16_stays_below_one():
    data = audio_io.encode_wav(AudioBuffer(np.array([1.0], dtype=np.float32), 22050))
    buf = audio_io.decode_wav(data)
    assert buf.samples[0] == pytest.approx(32767.0 / 32768.0)
    assert buf.samples[0] < 1.0


def test_stereo_is_averaged_to_mono():
    left = np.array([0.5, 0.5], dtype=np.float32)
    right = np.array([-0.5, 0.5], dtype=np.float32)
    inter = np.empty(4, dtype=np.float32)
    inter[0::2] = left
    inter[1::2] = right
    import struct
    payload = (inter * 32767).astype("<i2").tobytes()
    head = b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE"
    head += b"fmt " + struct.pack("<IHHIIHH", 16, 1, 2, 22050, 22050 * 4, 4, 16)
    head += b"data" + struct.pack("<I", len(payload))
    buf = audio_io.decode_wav(head + payload)
    np.testing.assert_allclose(buf.samples, [0.0, 0.5], atol=1e-3)


def test_non_wav_magic_rejected():
    with pytest.raises(FormatError):
        audio_io.decode_wav(b"OggS" + b"\x00" * 64)
    with pytest.raises(FormatError):
        audio_io.decode_wav(b"RIFF\x10\x00\x00\x00AIFF" + b"\x00" * 16)


def test_truncated_chunk_rejected():
    import struct
    good = audio_io.encode_wav(AudioBuffer(sine(440, 0.05, 22050), 22050))
    with pytest.raises(FormatError):
        audio_io.decode_wav(good[:40])


def test_unsupported_codec_rejected():
    import struct
    payload = b"\x00" * 8
    head = b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE"
    head += b"fmt " + struct.pack("<IHHIIHH", 16, 7, 1, 8000, 8000, 1, 8)  # mu-law
    head += b"data" + struct.pack("<I", len(payload))
    with pytest.raises(FormatError):
        audio_io.decode_wav(head + payload)


def test_resample_preserves_tone_frequency():
    rate_in = 44100
    buf = AudioBuffer(sine(1000, 0.5, rate_in), rate_in)
    out = audio_io.resample(buf, 22050)
    assert out.sample_rate == 22050
    assert len(out.samples) == pytest.approx(len(buf.samples) / 2, abs=2)
    # dominant DFT bin should stay at 1 kHz
    spec = np.abs(np.fft.rfft(out.samples * np.hanning(len(out.samples))))
    peak_hz = np.argmax(spec) * 22050 / len(out.samples)
    assert peak_hz == pytest.approx(1000, abs=5)


def test_resample_identity_when_rates_match():
    buf = AudioBuffer(sine(500, 0.1, 22050), 22050)
    out = audio_io.resample(buf, 22050)
    np.testing.assert_array_equal(out.samples, buf.samples)


def test_resample_amplitude_is_stable():
    buf = AudioBuffer(sine(400, 0.5, 48000, amp=0.5), 48000)
    out = audio_io.resample(buf, 22050)
    mid = out.samples[len(out.samples) // 4: -len(out.samples) // 4]
    assert np.max(np.abs(mid)) == pytest.approx(0.5, rel=0.05)


def test_audio_buffer_validation():
    with pytest.raises(RangeError):
        AudioBuffer(np.zeros(4), 0)
