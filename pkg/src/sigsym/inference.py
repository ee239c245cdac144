"""Compositions of a trained model: transcription, synthesis, navigation.

Cross-domain inference goes through the shared latent space. Posterior
means are used everywhere by default so outputs are deterministic; a
seeded sample can be requested where exploration is wanted.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .audio_io import AudioBuffer
from .errors import ConfigurationError, ContractError, RangeError
from .filterbank import GAIN_FLOOR
from .models import TranslationModel
from .symbols import (LabelTriplet, decode_labels, encode_labels,
                      midi_to_labels, parse_midi)

log = logging.getLogger(__name__)

MIN_NOTE_RUN = 3   # frames a label must persist to count as a note


@dataclass
class TranscribedNote:
    onset: float
    duration: float
    triplets: list
    frames: tuple    # [start, end) frame indices


@dataclass
class Transcription:
    frame_triplets: list            # per frame: list of LabelTriplet, one per source
    frame_confidences: list         # per frame: 3*M winning probabilities
    times: np.ndarray               # frame onset seconds
    notes: list                     # TranscribedNote, majority-run aggregation
    silent: bool = False

    @property
    def n_frames(self):
        return len(self.frame_triplets)

    def to_dict(self):
        return {
            "silent": self.silent,
            "times": [float(t) for t in self.times],
            "frames": [[list(t) for t in item] for item in self.frame_triplets],
            "confidences": [[float(c) for c in item] for item in self.frame_confidences],
            "notes": [{"onset": n.onset, "duration": n.duration,
                       "triplets": [list(t) for t in n.triplets],
                       "frames": list(n.frames)} for n in self.notes],
        }


def _aggregate_notes(triplets_per_frame, times, hop_seconds, min_run=MIN_NOTE_RUN):
    """Contiguous runs of one label set, kept when at least ``min_run`` long."""
    notes = []
    start = 0
    n = len(triplets_per_frame)
    for i in range(1, n + 1):
        if i < n and triplets_per_frame[i] == triplets_per_frame[start]:
            continue
        if i - start >= min_run:
            onset = float(times[start])
            notes.append(TranscribedNote(
                onset=onset,
                duration=float((i - start) * hop_seconds),
                triplets=list(triplets_per_frame[start]),
                frames=(start, i)))
        start = i
    return notes


def transcribe(audio, model: TranslationModel, min_run=MIN_NOTE_RUN) -> Transcription:
    """Audio to per-frame labels plus note-level aggregation."""
    fb = model.filterbank()
    frames = fb.frames(fb.forward(audio))
    times = frames.times()
    if np.all(frames.gains <= GAIN_FLOOR):
        return Transcription([], [], np.zeros(0), [], silent=True)
    z = model.encode_signal(frames.magnitudes).mean_array()
    probs = model.decode_symbol_probs(z)
    frame_triplets = []
    frame_confs = []
    for i in range(frames.n_frames):
        trips, confs = decode_labels([p[i] for p in probs], model.vocab)
        frame_triplets.append(trips)
        frame_confs.append([c for source in confs for c in source])
    hop_seconds = fb.hop / fb.spec.sample_rate
    notes = _aggregate_notes(frame_triplets, times, hop_seconds, min_run)
    return Transcription(frame_triplets, frame_confs, times, notes)


def _peak_guard(buf: AudioBuffer) -> AudioBuffer:
    """Scale down (never up) so synthesized audio stays inside full scale."""
    peak = float(np.max(np.abs(buf.samples))) if len(buf.samples) else 0.0
    if peak > 0.98:
        return AudioBuffer(buf.samples * (0.98 / peak), buf.sample_rate)
    return buf


def label_latent(triplets, model: TranslationModel, sample_seed=None):
    """Latent code for one label set: posterior mean or a seeded draw."""
    code = encode_labels(triplets, model.vocab)
    q = model.encode_symbol(code)
    if sample_seed is None:
        return q.mean_array()
    rng = np.random.default_rng(sample_seed)
    return np.asarray(q.sample(rng).data)


def synthesize(triplets, duration, model: TranslationModel, sample_seed=None) -> AudioBuffer:
    """Label set to audio via the shared latent and the inverse transform."""
    if duration <= 0:
        raise RangeError("duration must be positive")
    fb = model.filterbank()
    z = label_latent(triplets, model, sample_seed)
    frame = model.decode_signal(z)
    sr = fb.spec.sample_rate
    n_samples = int(round(duration * sr))
    n_frames = max(1, -(-n_samples // fb.hop))
    tiled = np.tile(frame, (n_frames, 1))
    return _peak_guard(fb.magnitude_to_signal(tiled, gains=1.0, n_samples=n_samples))


@dataclass
class MorphResult:
    frames: np.ndarray    # (steps, n_bands) decoded magnitudes
    latents: np.ndarray   # (steps, latent_dim)
    audio: AudioBuffer


def morph(a, b, steps, model: TranslationModel, frames_per_step=8) -> MorphResult:
    """Decode a straight latent line between two label sets.

    The first and last decoded frames equal the decodes of the endpoint
    labels exactly.
    """
    if steps < 2:
        raise RangeError("morph needs at least 2 steps")
    z_a = label_latent(a, model)
    z_b = label_latent(b, model)
    alphas = np.linspace(0.0, 1.0, steps)
    latents = np.stack([(1.0 - al) * z_a + al * z_b for al in alphas]).astype(np.float32)
    frames = np.stack([model.decode_signal(z) for z in latents])
    fb = model.filterbank()
    audio = _peak_guard(fb.magnitude_to_signal(
        np.repeat(frames, frames_per_step, axis=0), gains=1.0))
    return MorphResult(frames=frames, latents=latents, audio=audio)


@dataclass
class LatentPath:
    points: np.ndarray
    mode: str = "linear"

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float32)
        if self.points.ndim != 2 or self.points.shape[0] < 1:
            raise ContractError("a path is a nonempty (k, latent_dim) array")
        if self.mode != "linear":
            raise ConfigurationError(f"unsupported interpolation mode {self.mode!r}")


def trajectory(path, model: TranslationModel, frames_per_point=8) -> tuple[AudioBuffer, np.ndarray]:
    """Decode a free path of latent points to audio."""
    points = path.points if isinstance(path, LatentPath) else np.asarray(path, dtype=np.float32)
    points = np.atleast_2d(points)
    if points.shape[1] != model.latent_dim:
        raise ConfigurationError(
            f"path dimension {points.shape[1]} != latent dimension {model.latent_dim}")
    frames = np.stack([model.decode_signal(z) for z in points])
    fb = model.filterbank()
    audio = _peak_guard(fb.magnitude_to_signal(
        np.repeat(frames, frames_per_point, axis=0), gains=1.0))
    return audio, frames


def render_midi(midi_bytes, model: TranslationModel, channel_map=None) -> AudioBuffer:
    """Standard MIDI File to audio, one synthesized note per event.

    Notes sum on a shared timeline; the result is scaled down if the sum
    exceeds full scale. Channels mapped to instruments the model does not
    know are skipped with a warning.
    """
    if model.vocab.n_sources != 1:
        raise ConfigurationError("MIDI rendering needs a single-source model")
    events, _ = parse_midi(midi_bytes)
    sr = model.fb_spec.sample_rate
    if not events:
        return AudioBuffer(np.zeros(0, dtype=np.float32), sr)
    channel_map = channel_map or {}
    default = model.vocab.instruments[0]
    usable = []
    for ev in events:
        name = channel_map.get(ev.channel, default)
        if name not in model.vocab.instruments:
            log.warning("channel %d maps to unknown instrument %r; note skipped",
                        ev.channel, name)
            continue
        usable.append(ev)
    if not usable:
        return AudioBuffer(np.zeros(0, dtype=np.float32), sr)
    labels = midi_to_labels(usable, model.vocab, channel_map)
    total = max(lab.onset + lab.duration for lab in labels)
    out = np.zeros(int(round(total * sr)) + 1, dtype=np.float64)
    for lab in labels:
        note = synthesize([lab.triplet], lab.duration, model)
        start = int(round(lab.onset * sr))
        end = min(start + len(note.samples), len(out))
        out[start:end] += note.samples[: end - start]
    peak = float(np.max(np.abs(out))) if len(out) else 0.0
    if peak > 0.98:
        out *= 0.98 / peak
    return AudioBuffer(out.astype(np.float32), sr)


@dataclass
class Projection2D:
    """Rank-2 view of the latent posterior means for navigation."""

    coords: np.ndarray       # (n, 2)
    basis: np.ndarray        # (2, latent_dim), orthonormal rows
    center: np.ndarray       # (latent_dim,)
    explained: np.ndarray    # (2,) variance shares
    labels: list = field(default_factory=list)   # one dict per item

    def lift(self, coords):
        """2-D coordinates back to the latent space."""
        return self.center + np.asarray(coords, dtype=np.float64) @ self.basis

    def to_dict(self):
        return {
            "coords": [[float(a), float(b)] for a, b in self.coords],
            "basis": [[float(v) for v in row] for row in self.basis],
            "center": [float(v) for v in self.center],
            "explained": [float(v) for v in self.explained],
            "labels": self.labels,
        }


def fit_projection(z, labels=None) -> Projection2D:
    """Least-squares rank-2 summary of a point cloud."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] < 3:
        raise ContractError(f"projection needs at least 3 items, got shape {z.shape}")
    center = z.mean(axis=0)
    _, s, vt = np.linalg.svd(z - center, full_matrices=False)
    basis = vt[:2]
    power = s ** 2
    explained = power[:2] / max(power.sum(), 1e-300)
    coords = (z - center) @ basis.T
    return Projection2D(coords=coords, basis=basis, center=center,
                        explained=explained, labels=labels or [])


def latent_projection(dataset, model: TranslationModel) -> Projection2D:
    """Top-2 principal directions of the latent means over the dataset."""
    parts = []
    for split, frames in (("train", dataset.training_frames(0)),
                          ("val", dataset.validation_frames())):
        if len(frames) == 0:
            continue
        z = model.encode_signal(frames.x).mean_array()
        for i in range(len(frames)):
            if not frames.has_x[i]:    # label-only rows carry no signal point
                continue
            meta = frames.meta[i] if i < len(frames.meta) else {}
            parts.append((z[i], {"split": split,
                                 "triplets": meta.get("triplets"),
                                 "instruments": meta.get("instruments")}))
    if len(parts) < 3:
        raise ContractError(f"projection needs at least 3 items, got {len(parts)}")
    return fit_projection(np.stack([p[0] for p in parts]),
                          labels=[p[1] for p in parts])
