import numpy as np
import pytest

from sigsym.audio_io import AudioBuffer
from sigsym.errors import ConfigurationError, DimensionError, LengthError
from sigsym.filterbank import (FilterbankSpec, design_filterbank, desk_spec,
                               full_spec, GAIN_FLOOR, MAG_FLOOR)

RATE = 22050


@pytest.fixture(scope="module")
def desk_fb():
    return design_filterbank(desk_spec())


def harmonic(f0, duration, partials=6, rate=RATE, seed=None):
    t = np.arange(int(duration * rate)) / rate
    rng = np.random.default_rng(0 if seed is None else seed)
    x = np.zeros_like(t)
    for n in range(1, partials + 1):
        if n * f0 >= rate / 2 * 0.95:
            break
        x += rng.uniform(0.2, 1.0) / n * np.sin(2 * np.pi * n * f0 * t + rng.uniform(0, 2 * np.pi))
    return (0.5 * x / np.max(np.abs(x))).astype(np.float32)


def snr_db(ref, est):
    ref = np.asarray(ref, dtype=np.float64)
    est = np.asarray(est, dtype=np.float64)
    n = min(len(ref), len(est))
    err = ref[:n] - est[:n]
    return 10 * np.log10(np.sum(ref[:n] ** 2) / max(np.sum(err ** 2), 1e-300))


def test_center_frequencies_are_geometric(desk_fb):
    # oracle: direct evaluation of fmin * 2**(k/48)
    expected = desk_spec().fmin * 2.0 ** (np.arange(240) / 48.0)
    np.testing.assert_allclose(desk_fb.centers, expected, rtol=1e-12)
    ratios = desk_fb.centers[1:] / desk_fb.centers[:-1]
    np.testing.assert_allclose(ratios, 2 ** (1 / 48), rtol=1e-12)


def test_band_count_matches_profile(desk_fb):
    assert desk_fb.n_bands == 48 * 5 == 240
    assert design_filterbank(full_spec()).n_bands == 384


def test_frame_bounds_are_tight(desk_fb):
    a, b = desk_fb.frame_bounds()
    assert a > 0
    assert b / a <= 1.01


def test_top_band_must_stay_below_nyquist():
    with pytest.raises(ConfigurationError):
        design_filterbank(FilterbankSpec(fmin=200.0, n_octaves=7))


def test_hop_violating_painless_bound_rejected():
    with pytest.raises(ConfigurationError):
        design_filterbank(FilterbankSpec(fmin=65.406, n_octaves=5, hop=4096))


def test_round_trip_is_near_exact(desk_fb):
    x = harmonic(220, 0.6, seed=1)
    coeffs = desk_fb.forward(AudioBuffer(x, RATE))
    back = desk_fb.inverse(coeffs)
    assert snr_db(x, back.samples) >= 100


def test_round_trip_hundred_harmonic_signals(desk_fb):
    rng = np.random.default_rng(2024)
    worst = np.inf
    for i in range(100):
        f0 = rng.uniform(desk_fb.spec.fmin * 2, 900)
        x = harmonic(f0, 0.35, partials=8, seed=int(rng.integers(1 << 30)))
        back = desk_fb.inverse(desk_fb.forward(x))
        worst = min(worst, snr_db(x, back.samples))
    assert worst >= 40, f"worst SNR {worst:.1f} dB"


def test_sinusoid_at_band_center_peaks_there(desk_fb):
    k = 120
    f = desk_fb.frequency_of_band(k)
    t = np.arange(RATE) / RATE
    x = np.sin(2 * np.pi * f * t).astype(np.float32)
    _, frames = desk_fb.analyze(x)
    mid = frames.magnitudes[frames.n_frames // 2]
    assert int(np.argmax(mid)) == k
    assert mid.max() == pytest.approx(1.0)


def test_disjoint_sinusoids_union_of_peaks(desk_fb):
    k1, k2 = 60, 170
    f1, f2 = desk_fb.frequency_of_band(k1), desk_fb.frequency_of_band(k2)
    t = np.arange(RATE) / RATE
    both = (np.sin(2 * np.pi * f1 * t) + np.sin(2 * np.pi * f2 * t)).astype(np.float32)
    _, fr = desk_fb.analyze(both)
    mid = fr.magnitudes[fr.n_frames // 2]
    lit = set(np.nonzero(mid > 0.25)[0])
    assert any(abs(b - k1) <= 1 for b in lit)
    assert any(abs(b - k2) <= 1 for b in lit)
    # nothing lights up far away from either tone
    for b in lit:
        assert min(abs(b - k1), abs(b - k2)) <= 3


def test_frames_are_normalized_with_gain(desk_fb):
    x = harmonic(300, 0.5, seed=3)
    _, frames = desk_fb.analyze(x)
    assert frames.magnitudes.min() >= 0
    assert frames.magnitudes.max() <= 1.0 + 1e-6
    active = frames.gains > GAIN_FLOOR
    assert active.any()
    np.testing.assert_allclose(frames.magnitudes[active].max(axis=1), 1.0, rtol=1e-5)


def test_live_frames_are_floored(desk_fb):
    x = harmonic(300, 0.5, seed=3)
    _, frames = desk_fb.analyze(x)
    live = frames.gains > GAIN_FLOOR
    assert live.any()
    assert frames.magnitudes[live].min() >= MAG_FLOOR


def test_silent_signal_hits_gain_floor(desk_fb):
    x = np.zeros(RATE // 2, dtype=np.float32)
    _, frames = desk_fb.analyze(x)
    np.testing.assert_array_equal(frames.gains, np.float32(GAIN_FLOOR))
    assert frames.magnitudes.max() == 0


def test_integer_hop_shift_moves_frames(desk_fb):
    rng = np.random.default_rng(5)
    n = desk_fb._pad_length(RATE)
    x = harmonic(200, 1.0, seed=6)
    x = np.resize(x, n)
    shifted = np.roll(x, 3 * desk_fb.hop)
    c0 = desk_fb.forward(x)
    c1 = desk_fb.forward(shifted)
    np.testing.assert_allclose(np.abs(c1.cq[:, 3:]), np.abs(c0.cq[:, :-3]), atol=1e-8)


def test_linearity_of_forward(desk_fb):
    a = harmonic(220, 0.4, seed=7).astype(np.float64)
    b = harmonic(500, 0.4, seed=8).astype(np.float64)
    n = min(len(a), len(b))
    ca = desk_fb.forward(a[:n])
    cb = desk_fb.forward(b[:n])
    cm = desk_fb.forward(a[:n] * 0.6 + b[:n] * 0.4)
    np.testing.assert_allclose(cm.cq, 0.6 * ca.cq + 0.4 * cb.cq, atol=1e-9)


def test_magnitude_to_signal_reproduces_tone(desk_fb):
    k = 96
    f = desk_fb.frequency_of_band(k)
    t = np.arange(RATE // 2) / RATE
    x = (0.7 * np.sin(2 * np.pi * f * t)).astype(np.float32)
    _, frames = desk_fb.analyze(x)
    out = desk_fb.magnitude_to_signal(frames.magnitudes, frames.gains)
    # strongest band of the re-analysis stays within one bin
    _, fr2 = desk_fb.analyze(out.samples)
    mid = fr2.magnitudes[fr2.n_frames // 2]
    assert abs(int(np.argmax(mid)) - k) <= 1
    assert np.all(np.isfinite(out.samples))


def test_magnitude_to_signal_is_linear_in_gain(desk_fb):
    mags = np.zeros((40, desk_fb.n_bands), dtype=np.float32)
    mags[:, 100] = 1.0
    one = desk_fb.magnitude_to_signal(mags, 0.01)
    two = desk_fb.magnitude_to_signal(mags, 0.02)
    rms1 = np.sqrt(np.mean(one.samples ** 2))
    rms2 = np.sqrt(np.mean(two.samples ** 2))
    assert rms2 / rms1 == pytest.approx(2.0, rel=0.01)


def test_short_input_raises_length_error(desk_fb):
    with pytest.raises(LengthError):
        desk_fb.forward(np.zeros(10, dtype=np.float32))


def test_band_count_mismatch_raises(desk_fb):
    x = harmonic(300, 0.4, seed=9)
    coeffs = desk_fb.forward(x)
    other = design_filterbank(FilterbankSpec(fmin=65.406, n_octaves=4))
    with pytest.raises(DimensionError):
        other.inverse(coeffs)
