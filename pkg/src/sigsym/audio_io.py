"""WAV container I/O and sample-rate conversion.

Readers accept RIFF/WAVE files holding 16-bit integer PCM or 32-bit
float samples, little-endian. Multichannel input is averaged down to
mono and everything is resampled to the target rate with a windowed
sinc kernel.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, RangeError

TARGET_RATE = 22050


@dataclass
class AudioBuffer:
    """Mono float32 samples in [-1, 1] plus their sample rate."""

    samples: np.ndarray
    sample_rate: int = TARGET_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float32).reshape(-1)
        if self.sample_rate <= 0:
            raise RangeError(f"sample rate must be positive, got {self.sample_rate}")

    @property
    def duration(self):
        return len(self.samples) / self.sample_rate


def _read_chunks(data):
    if len(data) < 12:
        raise FormatError("file too short to be a WAV container")
    if data[0:4] != b"RIFF":
        raise FormatError(f"not a RIFF file (magic {data[0:4]!r})")
    if data[8:12] != b"WAVE":
        raise FormatError(f"RIFF form type is {data[8:12]!r}, expected WAVE")
    chunks = {}
    pos = 12
    while pos + 8 <= len(data):
        cid = data[pos:pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8:pos + 8 + size]
        if len(body) < size:
            raise FormatError(f"chunk {cid!r} truncated: declared {size}, got {len(body)}")
        if cid not in chunks:
            chunks[cid] = body
        pos += 8 + size + (size & 1)
    return chunks


def decode_wav(data: bytes) -> AudioBuffer:
    """Decode WAV bytes to a mono buffer at the file's native rate.

    Sample values keep their container scaling: 16-bit PCM divides by
    32768, so full scale 32767 maps to just under 1.0.
    """
    chunks = _read_chunks(bytes(data))
    if b"fmt " not in chunks or b"data" not in chunks:
        raise FormatError("missing fmt or data chunk")
    fmt = chunks[b"fmt "]
    if len(fmt) < 16:
        raise FormatError("fmt chunk too short")
    code, channels, rate, _, _, bits = struct.unpack_from("<HHIIHH", fmt, 0)
    if code == 0xFFFE and len(fmt) >= 26:
        # WAVE_FORMAT_EXTENSIBLE: the real code leads the GUID
        (code,) = struct.unpack_from("<H", fmt, 24)
    if channels < 1:
        raise FormatError("zero channels")
    raw = chunks[b"data"]
    if code == 1 and bits == 16:
        ints = np.frombuffer(raw[: len(raw) - len(raw) % 2], dtype="<i2")
        samples = ints.astype(np.float32) / 32768.0
    elif code == 3 and bits == 32:
        samples = np.frombuffer(raw[: len(raw) - len(raw) % 4], dtype="<f4").astype(np.float32)
    else:
        raise FormatError(f"unsupported sample format: code={code}, bits={bits}")
    usable = len(samples) - len(samples) % channels
    frames = samples[:usable].reshape(-1, channels)
    mono = frames.mean(axis=1)
    return AudioBuffer(mono, rate)


def load_audio(path, target_rate=TARGET_RATE) -> AudioBuffer:
    """Load a WAV file, mix to mono, resample, and bound the peak at 1."""
    with open(path, "rb") as fh:
        buf = decode_wav(fh.read())
    if buf.sample_rate != target_rate:
        buf = resample(buf, target_rate)
    peak = float(np.max(np.abs(buf.samples))) if len(buf.samples) else 0.0
    if peak > 1.0:
        buf = AudioBuffer(buf.samples / peak, buf.sample_rate)
    return buf


def encode_wav(buf: AudioBuffer, bits=16) -> bytes:
    """Serialize a buffer as mono WAV (16-bit PCM or 32-bit float)."""
    x = np.clip(buf.samples, -1.0, 1.0)
    if bits == 16:
        payload = (x * 32767.0).astype("<i2").tobytes()
        code, block, depth = 1, 2, 16
    elif bits == 32:
        payload = x.astype("<f4").tobytes()
        code, block, depth = 3, 4, 32
    else:
        raise RangeError(f"bits must be 16 or 32, got {bits}")
    out = io.BytesIO()
    out.write(b"RIFF")
    out.write(struct.pack("<I", 36 + len(payload)))
    out.write(b"WAVE")
    out.write(b"fmt ")
    out.write(struct.pack("<IHHIIHH", 16, code, 1, buf.sample_rate,
                          buf.sample_rate * block, block, depth))
    out.write(b"data")
    out.write(struct.pack("<I", len(payload)))
    out.write(payload)
    return out.getvalue()


def save_audio(path, buf: AudioBuffer, bits=16):
    with open(path, "wb") as fh:
        fh.write(encode_wav(buf, bits=bits))


def resample(buf: AudioBuffer, target_rate, half_width=32) -> AudioBuffer:
    """Windowed-sinc resampling (Hann window, cutoff at the lower Nyquist)."""
    if target_rate <= 0:
        raise RangeError("target rate must be positive")
    if target_rate == buf.sample_rate or len(buf.samples) == 0:
        return AudioBuffer(buf.samples.copy(), target_rate)
    x = buf.samples.astype(np.float64)
    ratio = target_rate / buf.sample_rate
    n_out = int(round(len(x) * ratio))
    cutoff = min(1.0, ratio) * 0.95
    # pad so every tap window stays in bounds
    pad = half_width + 1
    xp = np.concatenate([np.zeros(pad), x, np.zeros(pad)])
    out = np.empty(n_out, dtype=np.float64)
    offsets = np.arange(-half_width, half_width + 1)
    block = 8192
    for start in range(0, n_out, block):
        stop = min(start + block, n_out)
        t = np.arange(start, stop) / ratio
        base = np.floor(t).astype(int)
        frac = t - base
        # taps: distance from the ideal sample position
        dist = offsets[None, :] - frac[:, None]
        kern = cutoff * np.sinc(cutoff * dist)
        window = 0.5 + 0.5 * np.cos(np.pi * dist / (half_width + 1))
        kern *= np.where(np.abs(dist) <= half_width + 1, window, 0.0)
        idx = base[:, None] + offsets[None, :] + pad
        out[start:stop] = (xp[idx] * kern).sum(axis=1)
    return AudioBuffer(out.astype(np.float32), target_rate)
