"""Invertible constant-Q filterbank with geometrically spaced bands.

Bands sit at ``fmin * 2**(k / bins_per_octave)``. Analysis happens in
the frequency domain: the signal spectrum is multiplied by compactly
supported band profiles and each windowed segment is folded into a
short inverse FFT, giving one complex coefficient per band per hop.
The squared profiles tile the frequency axis exactly (adjacent bands
are raised-cosine crossfades in log-frequency, plus lowpass and
highpass guards at the edges), so the frame operator is the identity
up to rounding and the canonical dual windows equal the analysis
windows. Every band keeps at least as many coefficients as its profile
has bins, which is what makes the folding lossless and the whole
transform invertible.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .audio_io import AudioBuffer
from .errors import ConfigurationError, DimensionError, LengthError, RangeError

C1_HZ = 32.703195662574764
C2_HZ = 65.40639132514953

GAIN_FLOOR = 1e-6

# relative floor for normalized magnitudes of live frames: keeps every bin
# inside [MAG_FLOOR, 1] so ratio-based spectral divergences stay bounded
MAG_FLOOR = 2e-3


@dataclass(frozen=True)
class FilterbankSpec:
    fmin: float = C1_HZ
    bins_per_octave: int = 48
    n_octaves: int = 8
    sample_rate: int = 22050
    window: str = "hann"
    hop: int | None = None

    @property
    def n_bands(self):
        return self.bins_per_octave * self.n_octaves

    def to_dict(self):
        d = asdict(self)
        return d


# compact profile for interactive-scale runs: C2, five octaves, 240 bands
def desk_spec() -> FilterbankSpec:
    return FilterbankSpec(fmin=C2_HZ, n_octaves=5)


def full_spec() -> FilterbankSpec:
    return FilterbankSpec()


@dataclass
class SpectralFrames:
    """Per-hop magnitude vectors, each scaled so its peak is 1.

    Live frames are additionally floored at MAG_FLOOR, silent frames stay
    all-zero with their gain pinned to the gain floor.
    """

    magnitudes: np.ndarray  # (n_frames, n_bands) float32, [MAG_FLOOR, 1] when live
    gains: np.ndarray       # (n_frames,) float32, the removed peak value
    hop: int
    sample_rate: int

    @property
    def n_frames(self):
        return self.magnitudes.shape[0]

    def times(self):
        return np.arange(self.n_frames) * self.hop / self.sample_rate


def normalize_magnitudes(raw, gain_floor=GAIN_FLOOR):
    """Peak-normalize magnitude rows and floor the live ones.

    Returns float32 ``(magnitudes, gains)``. Rows whose peak exceeds the
    gain floor are scaled to a maximum of exactly 1 and clipped below at
    MAG_FLOOR; silent rows are returned as-is (effectively zero) so
    downstream silence detection still sees them.
    """
    raw = np.asarray(raw, dtype=np.float64)
    peaks = raw.max(axis=1)
    gains = np.maximum(peaks, gain_floor)
    mags = raw / gains[:, None]
    live = peaks > gain_floor
    if np.any(live):
        mags[live] = np.clip(mags[live], MAG_FLOOR, 1.0)
    return mags.astype(np.float32), gains.astype(np.float32)


@dataclass
class CqCoefficients:
    """Complex analysis output: constant-Q bands plus edge guards."""

    cq: np.ndarray       # (n_bands, n_frames) complex
    dc: np.ndarray       # (n_frames,) complex lowpass guard
    nyq: np.ndarray      # (m_nyq,) complex highpass guard
    n_samples: int
    padded: int


class _Realization:
    """Discrete windows for one padded signal length."""

    __slots__ = ("n", "n_bins", "supports", "windows", "duals", "dc", "nyq",
                 "frame_count", "op_diag")

    def __init__(self, n, spec: FilterbankSpec, hop):
        self.n = n
        self.n_bins = n // 2 + 1
        k_bands = spec.n_bands
        freqs = np.arange(self.n_bins) * (spec.sample_rate / n)
        with np.errstate(divide="ignore"):
            kappa = spec.bins_per_octave * np.log2(freqs / spec.fmin)
        self.frame_count = n // hop
        t_frames = self.frame_count

        op_diag = np.zeros(self.n_bins)
        self.supports = []
        self.windows = []
        for k in range(k_bands):
            lo = int(np.searchsorted(kappa, k - 1, side="right"))
            hi = int(np.searchsorted(kappa, k + 1, side="left"))
            if hi - lo > t_frames:
                raise LengthError(
                    f"band {k} profile has {hi - lo} bins but only {t_frames} "
                    f"coefficients per band; signal too short for hop {hop}")
            w = np.cos(0.5 * np.pi * (kappa[lo:hi] - k))
            self.supports.append((lo, hi))
            self.windows.append(w)
            op_diag[lo:hi] += w * w

        hi_dc = int(np.searchsorted(kappa, 0.0, side="left"))
        w_dc = np.ones(hi_dc)
        taper = (kappa[:hi_dc] > -1.0)
        w_dc[taper] = np.cos(0.5 * np.pi * (kappa[:hi_dc][taper] + 1.0))
        if hi_dc > t_frames:
            raise LengthError("lowpass guard wider than the frame count")
        self.dc = (0, hi_dc, w_dc)
        op_diag[:hi_dc] += w_dc * w_dc

        lo_nyq = int(np.searchsorted(kappa, k_bands - 1, side="right"))
        w_nyq = np.ones(self.n_bins - lo_nyq)
        kap = kappa[lo_nyq:]
        taper = kap < k_bands
        w_nyq[taper] = np.cos(0.5 * np.pi * (kap[taper] - k_bands))
        m_nyq = max(self.n_bins - lo_nyq, 1)
        self.nyq = (lo_nyq, self.n_bins, w_nyq, m_nyq)
        op_diag[lo_nyq:] += w_nyq * w_nyq

        self.op_diag = op_diag
        # canonical duals: divide by the (numerically realized) operator diagonal
        self.duals = [w / op_diag[lo:hi] for (lo, hi), w in zip(self.supports, self.windows)]


class Filterbank:
    """Designed analysis/synthesis pair for one spectral profile."""

    def __init__(self, spec: FilterbankSpec):
        if spec.fmin <= 0:
            raise ConfigurationError("fmin must be positive")
        if spec.bins_per_octave < 1 or spec.n_octaves < 1:
            raise ConfigurationError("bins_per_octave and n_octaves must be >= 1")
        if spec.window != "hann":
            raise ConfigurationError(f"unknown window {spec.window!r}")
        k_bands = spec.n_bands
        centers = spec.fmin * 2.0 ** (np.arange(k_bands) / spec.bins_per_octave)
        nyquist = spec.sample_rate / 2.0
        # profiles extend one bin index past the last center
        if centers[-1] * 2.0 ** (1.0 / spec.bins_per_octave) >= nyquist:
            raise ConfigurationError(
                f"top band {centers[-1]:.1f} Hz reaches past Nyquist {nyquist:.1f} Hz")
        ratio = 2.0 ** (1.0 / spec.bins_per_octave)
        width_hz = max(centers[-1] * (ratio - 1.0 / ratio), spec.fmin)
        hop_bound = spec.sample_rate / width_hz
        hop = spec.hop
        if hop is None:
            hop = 1 << int(np.floor(np.log2(hop_bound)))
        if hop < 1 or hop > hop_bound:
            raise ConfigurationError(
                f"hop {hop} violates the painless bound (must be <= {hop_bound:.1f})")
        self.spec = FilterbankSpec(spec.fmin, spec.bins_per_octave, spec.n_octaves,
                                   spec.sample_rate, spec.window, int(hop))
        self.centers = centers
        self.hop = int(hop)
        self.n_bands = k_bands
        self.gain_floor = GAIN_FLOOR
        self._cache = {}
        # verify the design numerically on a canonical one-second realization
        n0 = self._pad_length(spec.sample_rate)
        real = self._realize(n0)
        if np.any(real.op_diag <= 0):
            raise ConfigurationError("frame operator has zero entries; bands do not cover the axis")

    # -- geometry ---------------------------------------------------------

    def frequency_of_band(self, k):
        return float(self.centers[k])

    def band_of_frequency(self, freq):
        if freq <= 0:
            raise RangeError("frequency must be positive")
        k = int(round(self.spec.bins_per_octave * np.log2(freq / self.spec.fmin)))
        return min(max(k, 0), self.n_bands - 1)

    def frame_bounds(self, n=None):
        """Tightness of the analysis frame: (A, B) = extremes of the operator diagonal."""
        real = self._realize(self._pad_length(n or self.spec.sample_rate))
        return float(real.op_diag.min()), float(real.op_diag.max())

    def min_length(self):
        # shortest signal for which every band profile fits its coefficient row
        ratio = 2.0 ** (1.0 / self.spec.bins_per_octave)
        width = max(self.centers[-1] * (ratio - 1.0 / ratio), self.spec.fmin)
        slack = 1.0 / self.hop - width / self.spec.sample_rate
        n = int(np.ceil(2.0 / slack)) if slack > 0 else self.spec.sample_rate
        return self._pad_length(max(n, 4 * self.hop))

    def _pad_length(self, n):
        return int(np.ceil(max(n, 1) / self.hop)) * self.hop

    def _realize(self, n) -> _Realization:
        real = self._cache.get(n)
        if real is None:
            real = _Realization(n, self.spec, self.hop)
            if len(self._cache) > 8:
                self._cache.clear()
            self._cache[n] = real
        return real

    # -- transforms -------------------------------------------------------

    def forward(self, audio) -> CqCoefficients:
        """Analyze a signal into per-hop complex band coefficients."""
        samples = audio.samples if isinstance(audio, AudioBuffer) else np.asarray(audio)
        if isinstance(audio, AudioBuffer) and audio.sample_rate != self.spec.sample_rate:
            raise ConfigurationError(
                f"buffer rate {audio.sample_rate} != filterbank rate {self.spec.sample_rate}")
        samples = np.asarray(samples, dtype=np.float64).reshape(-1)
        n_samples = len(samples)
        if n_samples < self.hop:
            raise LengthError(f"need at least one analysis frame ({self.hop} samples), got {n_samples}")
        padded = self._pad_length(max(n_samples, self.min_length()))
        real = self._realize(padded)
        x = np.zeros(padded)
        x[:n_samples] = samples
        spectrum = np.fft.rfft(x)

        t_frames = real.frame_count
        folded = np.zeros((self.n_bands, t_frames), dtype=complex)
        for k, ((lo, hi), w) in enumerate(zip(real.supports, real.windows)):
            seg = spectrum[lo:hi] * w
            folded[k, np.arange(lo, hi) % t_frames] = seg
        cq = np.fft.ifft(folded, axis=1)

        lo, hi, w = real.dc
        buf = np.zeros(t_frames, dtype=complex)
        buf[np.arange(lo, hi) % t_frames] = spectrum[lo:hi] * w
        dc = np.fft.ifft(buf)

        lo, hi, w, m = real.nyq
        buf = np.zeros(m, dtype=complex)
        buf[np.arange(lo, hi) % m] = spectrum[lo:hi] * w
        nyq = np.fft.ifft(buf)

        return CqCoefficients(cq=cq, dc=dc, nyq=nyq, n_samples=n_samples, padded=padded)

    def inverse(self, coeffs: CqCoefficients) -> AudioBuffer:
        """Resynthesize audio from analysis coefficients."""
        if coeffs.cq.shape[0] != self.n_bands:
            raise DimensionError(
                f"coefficients carry {coeffs.cq.shape[0]} bands, filterbank has {self.n_bands}")
        padded = coeffs.padded
        real = self._realize(padded)
        t_frames = real.frame_count
        if coeffs.cq.shape[1] != t_frames:
            raise DimensionError(
                f"coefficients carry {coeffs.cq.shape[1]} frames, expected {t_frames}")
        spectrum = np.zeros(real.n_bins, dtype=complex)
        unfolded = np.fft.fft(coeffs.cq, axis=1)
        for k, ((lo, hi), wd) in enumerate(zip(real.supports, real.duals)):
            spectrum[lo:hi] += unfolded[k, np.arange(lo, hi) % t_frames] * wd

        lo, hi, w = real.dc
        if len(coeffs.dc) != t_frames:
            raise DimensionError("lowpass guard length mismatch")
        buf = np.fft.fft(coeffs.dc)
        spectrum[lo:hi] += buf[np.arange(lo, hi) % t_frames] * (w / real.op_diag[lo:hi])

        lo, hi, w, m = real.nyq
        if len(coeffs.nyq) != m:
            raise DimensionError("highpass guard length mismatch")
        buf = np.fft.fft(coeffs.nyq)
        spectrum[lo:hi] += buf[np.arange(lo, hi) % m] * (w / real.op_diag[lo:hi])

        x = np.fft.irfft(spectrum, n=padded)
        return AudioBuffer(x[:coeffs.n_samples].astype(np.float32), self.spec.sample_rate)

    def frames(self, coeffs: CqCoefficients) -> SpectralFrames:
        """Normalized magnitude frames with their removed per-frame gain."""
        mags, gains = normalize_magnitudes(np.abs(coeffs.cq).T, self.gain_floor)
        return SpectralFrames(magnitudes=mags, gains=gains,
                              hop=self.hop, sample_rate=self.spec.sample_rate)

    def analyze(self, audio):
        coeffs = self.forward(audio)
        return coeffs, self.frames(coeffs)

    def magnitude_to_signal(self, magnitudes, gains=1.0, n_samples=None) -> AudioBuffer:
        """Render magnitude frames to audio with a deterministic phase model.

        Each band advances linearly in phase at its center frequency, so a
        band that stays lit renders as a steady sinusoid. The mapping is
        linear in the magnitudes: no normalization happens here.
        """
        mags = np.asarray(magnitudes, dtype=np.float64)
        if mags.ndim == 1:
            mags = mags[None, :]
        if mags.ndim != 2 or mags.shape[1] != self.n_bands:
            raise DimensionError(f"magnitudes must be (frames, {self.n_bands})")
        if np.any(mags < 0):
            raise RangeError("magnitudes must be nonnegative")
        t_frames = mags.shape[0]
        gains = np.asarray(gains, dtype=np.float64).reshape(-1)
        if len(gains) == 1:
            gains = np.repeat(gains, t_frames)
        if len(gains) != t_frames:
            raise DimensionError("gains length does not match frame count")
        n_out = t_frames * self.hop if n_samples is None else int(n_samples)
        padded = self._pad_length(max(t_frames * self.hop, n_out, self.min_length()))
        real = self._realize(padded)
        full_t = real.frame_count
        if n_out < 1 or n_out > padded:
            raise RangeError(f"n_samples {n_out} outside (0, {padded}]")
        amp = np.zeros((full_t, self.n_bands))
        amp[:t_frames] = mags * gains[:, None]
        phases = 2.0 * np.pi * np.outer(np.arange(full_t) * self.hop / self.spec.sample_rate,
                                        self.centers)
        cq = (amp * np.exp(1j * phases)).T
        coeffs = CqCoefficients(cq=cq, dc=np.zeros(full_t, dtype=complex),
                                nyq=np.zeros(real.nyq[3], dtype=complex),
                                n_samples=n_out, padded=padded)
        return self.inverse(coeffs)


def design_filterbank(spec: FilterbankSpec) -> Filterbank:
    return Filterbank(spec)
