"""Additive-synthesis instrument bank for reproducible datasets.

Each preset is a steady-state harmonic model: relative partial
amplitudes, an inharmonicity coefficient, vibrato, a brightness slope
that tilts the partials with playing dynamics, and a faint steady bed
(bow/breath resonance) so analysis frames have a realistic floor instead
of exact zeros. The bed has two parts: a dense base comb at a fixed
level, and a sparse comb sitting a quarter tone off the tempered grid
whose level tracks playing dynamics — soft playing carries the larger
noise share. Each instrument keeps its sparse comb on a private lane of
slots, so the cue survives mixing. Synthesis is deterministic: bed
phases are seeded by the instrument name alone, so the corpus is a pure
function of the labels.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, replace

import numpy as np

from .audio_io import AudioBuffer
from .errors import ConfigurationError, RangeError
from .symbols import DYNAMICS, LabelTriplet, triplet_to_midi_pitch

MAX_PARTIALS = 16

# amplitude per dynamics level: pp = -18 dB, mf = -6 dB, ff = 0 dB
DYNAMICS_GAIN = (10.0 ** (-18.0 / 20.0), 10.0 ** (-6.0 / 20.0), 1.0)

_PEAK = 0.98


@dataclass(frozen=True)
class InstrumentSpec:
    name: str
    tessitura: tuple            # (lowest octave, highest octave), inclusive
    harmonics: tuple            # relative partial amplitudes, up to 16
    brightness: float = 0.3     # partial tilt exponent per dynamics step
    inharmonicity: float = 0.0  # f_n = n f0 sqrt(1 + B n^2)
    vibrato_cents: float = 0.0
    vibrato_hz: float = 5.0
    noise_db: float = -47.0      # coded-comb amplitude at ff, re the tone peak
    noise_tilt_db: float = 10.0  # coded-comb rise per dynamics step toward pp
    noise_base_db: float = -42.0  # fixed base-comb amplitude, re the tone peak
    noise_comb_lane: int = 1     # stride-16 slot residue carrying the coded comb
    ghost_sub: float = 0.0      # amplitude of a half-frequency ghost partial

    def __post_init__(self):
        if len(self.harmonics) < 1 or len(self.harmonics) > MAX_PARTIALS:
            raise ConfigurationError(f"harmonics must hold 1..{MAX_PARTIALS} entries")
        if self.harmonics[0] <= 0:
            raise ConfigurationError("fundamental amplitude must be positive")
        if self.tessitura[0] > self.tessitura[1]:
            raise ConfigurationError("tessitura low octave above high octave")
        if self.noise_comb_lane % 4 != 1:
            # only +25-cent slots are guaranteed free of partial leakage
            raise ConfigurationError("noise_comb_lane must be 1 mod 4")


def _geometric(decay, n=MAX_PARTIALS):
    return tuple(1.0 / (k ** decay) for k in range(1, n + 1))


PRESETS = {
    "alto_sax": InstrumentSpec(
        name="alto_sax", tessitura=(2, 6),
        harmonics=(1.0, 0.82, 0.9, 0.58, 0.42, 0.3, 0.2, 0.13, 0.085, 0.055,
                   0.035, 0.022, 0.014, 0.009, 0.006, 0.004),
        brightness=0.3, vibrato_cents=4.0, vibrato_hz=5.0, noise_db=-47.0),
    "flute": InstrumentSpec(
        name="flute", tessitura=(3, 6),
        harmonics=tuple(a for a in _geometric(1.9)),
        brightness=0.25, vibrato_cents=6.0, vibrato_hz=5.5, noise_db=-45.0,
        noise_comb_lane=5),
    "piano": InstrumentSpec(
        name="piano", tessitura=(1, 7),
        harmonics=_geometric(1.1),
        brightness=0.2, inharmonicity=4e-4, noise_db=-48.0),
    "trumpet_c": InstrumentSpec(
        name="trumpet_c", tessitura=(3, 5),
        harmonics=_geometric(0.75),
        brightness=0.35, vibrato_cents=2.0, vibrato_hz=6.0, noise_db=-47.5,
        noise_comb_lane=13),
    "violin": InstrumentSpec(
        name="violin", tessitura=(3, 6),
        harmonics=tuple(a * (1.0 if k % 2 == 0 else 0.55) for k, a in enumerate(_geometric(0.85))),
        brightness=0.45, vibrato_cents=8.0, vibrato_hz=5.2, noise_db=-45.5,
        noise_comb_lane=9),
}


def preset(name) -> InstrumentSpec:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigurationError(f"unknown instrument {name!r}; have {sorted(PRESETS)}") from None


def foreign_variant(spec: InstrumentSpec, seed=0) -> InstrumentSpec:
    """A timbre the training set never saw: perturbed partials plus a
    ghost partial one octave below the fundamental."""
    rng = np.random.default_rng(seed)
    factors = rng.uniform(0.65, 1.45, size=len(spec.harmonics))
    factors[0] = 1.0
    harmonics = tuple(float(a * f) for a, f in zip(spec.harmonics, factors))
    return replace(spec, harmonics=harmonics, ghost_sub=0.3,
                   brightness=spec.brightness + 0.1, noise_db=spec.noise_db + 3.0)


def note_frequency(triplet: LabelTriplet) -> float:
    midi = triplet_to_midi_pitch(triplet)
    return 440.0 * 2.0 ** ((midi - 69) / 12.0)


def _bed_seed(spec):
    key = f"{spec.name}/bed"
    return zlib.crc32(key.encode())


# the bed is a carpet of faint steady sub-partials, log-spaced so a
# constant-Q analysis sees one per band at a constant level; unlike true
# noise its band magnitudes do not fluctuate frame to frame. Every
# sixteenth slot, starting a quarter tone above the tempered grid,
# carries the dynamics-coded comb; no harmonic of an equal-tempered note
# falls on a +25-cent slot, so those bands stay clean of partial
# leakage. Each preset parks its coded comb on its own lane (slot
# residue mod 16), so simultaneous instruments keep their dynamics cues
# in disjoint bands.
_BED_LO_HZ = 32.7          # C1
_BED_HI_HZ = 4186.0        # C8
_BED_PER_OCTAVE = 48
_BED_CODED_STRIDE = 16

_bed_cache: dict = {}


def _bed_combs(seed, n, sample_rate, lane):
    """(base, coded) unit-amplitude sinusoid combs, cached per shape."""
    key = (seed, n, sample_rate, lane)
    if key not in _bed_cache:
        rng = np.random.default_rng(seed)
        count = int(np.log2(_BED_HI_HZ / _BED_LO_HZ) * _BED_PER_OCTAVE)
        slots = np.arange(count)
        freqs = _BED_LO_HZ * 2.0 ** (slots / _BED_PER_OCTAVE)
        keep = freqs < 0.45 * sample_rate
        slots, freqs = slots[keep], freqs[keep]
        phases = rng.uniform(0.0, 2.0 * np.pi, len(freqs))
        t = np.arange(n) / sample_rate
        waves = np.sin(2.0 * np.pi * t[:, None] * freqs[None, :] + phases[None, :])
        coded = slots % _BED_CODED_STRIDE == lane
        _bed_cache[key] = (waves[:, ~coded].sum(axis=1), waves[:, coded].sum(axis=1))
    return _bed_cache[key]


def synth_note(spec: InstrumentSpec, triplet: LabelTriplet, duration=1.0,
               sample_rate=22050, seed=None) -> AudioBuffer:
    """Render one steady-state note. Deterministic in all arguments."""
    if duration <= 0:
        raise RangeError("duration must be positive")
    dyn = triplet.dynamics
    if not 0 <= dyn < len(DYNAMICS):
        raise RangeError(f"dynamics index {dyn} out of range")
    f0 = note_frequency(triplet)
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    gain = DYNAMICS_GAIN[dyn]

    if spec.vibrato_cents > 0:
        depth = 2.0 ** (spec.vibrato_cents / 1200.0) - 1.0
        # integral of f*(1 + depth*sin(2 pi r t)) dt
        mod = t - depth * np.cos(2 * np.pi * spec.vibrato_hz * t) / (2 * np.pi * spec.vibrato_hz)
    else:
        mod = t

    tone = np.zeros(n)
    limit = 0.45 * sample_rate
    for k, amp in enumerate(spec.harmonics, start=1):
        fk = k * f0 * np.sqrt(1.0 + spec.inharmonicity * k * k)
        if fk >= limit or amp <= 0:
            continue
        tilt = float(k) ** (spec.brightness * (dyn - 1))
        tone += amp * tilt * np.sin(2 * np.pi * fk * mod)
    if spec.ghost_sub > 0 and 0.5 * f0 < limit:
        tone += spec.ghost_sub * np.sin(2 * np.pi * 0.5 * f0 * mod)

    peak = np.max(np.abs(tone))
    if peak > 0:
        tone /= peak

    # softer playing carries a higher breath/bow noise share, so the
    # coded comb relative to the tone peak falls as dynamics rise; the
    # base comb holds still so frames never depend on anything but the
    # labels
    bed_seed = _bed_seed(spec) if seed is None else seed
    base, coded = _bed_combs(bed_seed, n, sample_rate, spec.noise_comb_lane % _BED_CODED_STRIDE)
    coded_db = spec.noise_db + spec.noise_tilt_db * (len(DYNAMICS) - 1 - dyn)
    tone += 10.0 ** (spec.noise_base_db / 20.0) * base
    tone += 10.0 ** (coded_db / 20.0) * coded

    peak = np.max(np.abs(tone))
    if peak > 0:
        tone *= _PEAK * gain / peak

    # 10 ms anti-click ramps; the sustained middle stays untouched
    edge = min(int(0.01 * sample_rate), n // 4)
    if edge > 0:
        ramp = 0.5 - 0.5 * np.cos(np.pi * np.arange(edge) / edge)
        tone[:edge] *= ramp
        tone[-edge:] *= ramp[::-1]
    return AudioBuffer(np.clip(tone, -1.0, 1.0).astype(np.float32), sample_rate)


def make_mixture(buffers, gains=None) -> AudioBuffer:
    """Weighted sum of equal-rate buffers, peak-normalized."""
    if not buffers:
        raise ConfigurationError("mixture needs at least one buffer")
    rate = buffers[0].sample_rate
    if any(b.sample_rate != rate for b in buffers):
        raise ConfigurationError("mixture requires equal sample rates")
    gains = [1.0] * len(buffers) if gains is None else list(gains)
    if len(gains) != len(buffers):
        raise ConfigurationError("one gain per buffer")
    n = max(len(b.samples) for b in buffers)
    mix = np.zeros(n)
    for g, b in zip(gains, buffers):
        mix[:len(b.samples)] += g * b.samples.astype(np.float64)
    peak = np.max(np.abs(mix))
    if peak > 0:
        mix *= _PEAK / peak
    return AudioBuffer(mix.astype(np.float32), rate)
