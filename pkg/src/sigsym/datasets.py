"""Dataset assembly: rendering, framing, note-level splits, mixtures.

Items are (x, y) pairs where x is one normalized magnitude frame and y
the one-hot label code. Splits happen at the note level so frames of a
single note never straddle train and test. Mixture corpora keep the
per-note complex frames cached; because analysis is linear, summing
cached coefficients equals analyzing the summed audio, which makes
fresh random mixtures per epoch cheap.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .audio_io import load_audio
from .errors import ArityError, ConfigurationError, ParseError
from .filterbank import Filterbank, design_filterbank
from .instruments import InstrumentSpec, preset, synth_note
from .symbols import (DYNAMICS, LabelTriplet, VocabSpec, encode_labels,
                      read_sidecar)


@dataclass
class DatasetConfig:
    note_duration: float = 1.0
    frames_per_note: int = 16
    split_fraction: float = 0.8
    seed: int = 0
    octave_range: tuple | None = None   # clamp tessituras, e.g. filterbank coverage
    symbol_coverage: int = 2            # per-epoch weight of label-only vocabulary rows
    train_mixtures_per_epoch: int = 1024
    val_mixtures: int = 256
    gain_range: tuple = (0.35, 1.0)

    def __post_init__(self):
        if not 0.0 < self.split_fraction < 1.0:
            raise ConfigurationError("split fraction must lie in (0, 1)")
        if self.frames_per_note < 1:
            raise ConfigurationError("frames_per_note must be >= 1")


@dataclass
class FrameSet:
    """Vectorized items; missing modalities are masked, not absent."""

    x: np.ndarray          # (n, F) float32
    y: np.ndarray          # (n, L) float32
    has_x: np.ndarray      # (n,) bool
    has_y: np.ndarray      # (n,) bool
    meta: list             # one dict per item

    def __len__(self):
        return self.x.shape[0]

    def subset(self, idx):
        idx = np.asarray(idx)
        if idx.dtype != bool:
            idx = idx.astype(np.intp)
        else:
            idx = np.flatnonzero(idx)
        return FrameSet(self.x[idx], self.y[idx], self.has_x[idx], self.has_y[idx],
                        [self.meta[i] for i in idx])

    @staticmethod
    def concat(parts):
        return FrameSet(np.concatenate([p.x for p in parts]),
                        np.concatenate([p.y for p in parts]),
                        np.concatenate([p.has_x for p in parts]),
                        np.concatenate([p.has_y for p in parts]),
                        sum((p.meta for p in parts), []))


@dataclass
class NoteRecord:
    instrument: str
    triplet: LabelTriplet
    frames_complex: np.ndarray   # (n_bands, frames_per_note) complex64
    note_id: int


def _clamped_tessitura(spec: InstrumentSpec, vocab: VocabSpec, octave_range):
    lo, hi = spec.tessitura
    lo = max(lo, 0)
    hi = min(hi, vocab.octaves - 1)
    if octave_range is not None:
        lo = max(lo, octave_range[0])
        hi = min(hi, octave_range[1])
    if lo > hi:
        raise ConfigurationError(
            f"{spec.name}: tessitura empty after clamping to octaves [{lo}, {hi}]")
    return lo, hi


def render_note_frames(spec: InstrumentSpec, triplet, fb: Filterbank, config: DatasetConfig):
    """Synthesize one note and keep its centered complex frames."""
    audio = synth_note(spec, triplet, duration=config.note_duration,
                       sample_rate=fb.spec.sample_rate)
    coeffs = fb.forward(audio)
    total = coeffs.cq.shape[1]
    k = config.frames_per_note
    if total < k:
        raise ConfigurationError(f"note too short: {total} frames < {k}")
    start = (total - k) // 2
    return coeffs.cq[:, start:start + k].astype(np.complex64)


def _frames_to_items(fb: Filterbank, block, triplets, vocab, meta_base):
    from .filterbank import normalize_magnitudes
    mags, gains = normalize_magnitudes(np.abs(block.astype(np.complex128)).T)
    code = encode_labels(triplets, vocab)
    n = mags.shape[0]
    meta = [dict(meta_base, frame=i, gain=float(gains[i])) for i in range(n)]
    return mags, np.tile(code, (n, 1)), meta


def _symbol_only_rows(triplet_rows, vocab, n_bands) -> FrameSet:
    """Label rows without audio: x is a zero placeholder, has_x False."""
    rows = [[t] if isinstance(t, LabelTriplet) else list(t) for t in triplet_rows]
    y = np.stack([encode_labels(r, vocab) for r in rows])
    n = len(rows)
    x = np.zeros((n, n_bands), dtype=np.float32)
    meta = [{"symbol_only": True, "triplets": [tuple(t) for t in r]} for r in rows]
    return FrameSet(x, y, np.zeros(n, bool), np.ones(n, bool), meta)


class NoteDataset:
    """Single-source corpus: every (pitch, octave, dynamics) over a tessitura."""

    def __init__(self, instrument: InstrumentSpec, vocab: VocabSpec, fb: Filterbank,
                 config: DatasetConfig, extra: FrameSet | None = None):
        if vocab.n_sources != 1:
            raise ArityError("single-source dataset needs a one-instrument vocabulary")
        self.instrument = instrument
        self.vocab = vocab
        self.fb = fb
        self.config = config
        lo, hi = _clamped_tessitura(instrument, vocab, config.octave_range)
        self.records = []
        note_id = 0
        for octave in range(lo, hi + 1):
            for pc in range(12):
                for dyn in range(3):
                    triplet = LabelTriplet(pc, octave, dyn)
                    block = render_note_frames(instrument, triplet, fb, config)
                    self.records.append(NoteRecord(instrument.name, triplet, block, note_id))
                    note_id += 1
        self.n_notes = len(self.records)
        rng = np.random.default_rng(config.seed)
        order = rng.permutation(self.n_notes)
        n_train = int(np.floor(config.split_fraction * self.n_notes))
        self.train_note_ids = sorted(int(i) for i in order[:n_train])
        self.test_note_ids = sorted(int(i) for i in order[n_train:])
        self._train = self._collect(self.train_note_ids)
        if extra is not None:
            self._train = FrameSet.concat([self._train, extra])
        if config.symbol_coverage > 0:
            # semi-supervised vocabulary coverage: the label lattice is known
            # without audio, so every triplet joins training as a symbol-only
            # row; only the symbol auto-encoder sees gradients from these
            sym = _symbol_only_rows(
                [r.triplet for r in self.records] * config.symbol_coverage,
                vocab, fb.spec.n_bands)
            self._train = FrameSet.concat([self._train, sym])
        self._test = self._collect(self.test_note_ids)

    def _collect(self, note_ids):
        xs, ys, metas = [], [], []
        for i in note_ids:
            rec = self.records[i]
            mags, codes, meta = _frames_to_items(
                self.fb, rec.frames_complex, [rec.triplet], self.vocab,
                {"note_id": rec.note_id, "instruments": [rec.instrument],
                 "triplets": [tuple(rec.triplet)]})
            xs.append(mags)
            ys.append(codes)
            metas.extend(meta)
        x = np.concatenate(xs)
        y = np.concatenate(ys)
        n = x.shape[0]
        return FrameSet(x, y, np.ones(n, bool), np.ones(n, bool), metas)

    def training_frames(self, epoch=0) -> FrameSet:
        return self._train

    def validation_frames(self) -> FrameSet:
        return self._test

    def describe(self):
        return {"kind": "solo", "instrument": self.instrument.name,
                "notes": self.n_notes, "train_notes": len(self.train_note_ids),
                "test_notes": len(self.test_note_ids),
                "frames_per_note": self.config.frames_per_note}


class MixtureDataset:
    """Multi-source corpus: random simultaneous notes, one per instrument.

    Training mixtures are redrawn every epoch from train notes with a
    per-epoch seed; validation mixtures are fixed and drawn from test
    notes only.
    """

    def __init__(self, instruments, vocab: VocabSpec, fb: Filterbank, config: DatasetConfig):
        if len(instruments) != vocab.n_sources or len(instruments) < 2:
            raise ArityError("mixture dataset needs one instrument per source, at least two")
        if tuple(i.name for i in instruments) != vocab.instruments:
            raise ConfigurationError("instrument order must match the vocabulary")
        self.instruments = list(instruments)
        self.vocab = vocab
        self.fb = fb
        self.config = config
        self.per_instrument = []
        solo_vocab_cache = {}
        for k, inst in enumerate(self.instruments):
            lo, hi = _clamped_tessitura(inst, vocab, config.octave_range)
            records = []
            note_id = 0
            for octave in range(lo, hi + 1):
                for pc in range(12):
                    for dyn in range(3):
                        triplet = LabelTriplet(pc, octave, dyn)
                        block = render_note_frames(inst, triplet, fb, config)
                        records.append(NoteRecord(inst.name, triplet, block, note_id))
                        note_id += 1
            rng = np.random.default_rng(config.seed + 1000 * k)
            order = rng.permutation(len(records))
            n_train = int(np.floor(config.split_fraction * len(records)))
            self.per_instrument.append({
                "records": records,
                "train_ids": [int(i) for i in order[:n_train]],
                "test_ids": [int(i) for i in order[n_train:]],
            })
        self._val = self._draw(self.config.val_mixtures, "test",
                               np.random.default_rng(config.seed + 7))

    def _draw(self, n_mixtures, split, rng) -> FrameSet:
        key = "train_ids" if split == "train" else "test_ids"
        xs, ys, metas = [], [], []
        lo_gain, hi_gain = self.config.gain_range
        k_frames = self.config.frames_per_note
        for m in range(n_mixtures):
            chosen = []
            for entry in self.per_instrument:
                ids = entry[key]
                chosen.append(entry["records"][ids[int(rng.integers(len(ids)))]])
            gains = rng.uniform(lo_gain, hi_gain, size=len(chosen))
            block = sum(g * rec.frames_complex.astype(np.complex128)
                        for g, rec in zip(gains, chosen))
            triplets = [rec.triplet for rec in chosen]
            mags, codes, meta = _frames_to_items(
                self.fb, block, triplets, self.vocab,
                {"note_id": tuple(rec.note_id for rec in chosen),
                 "instruments": [rec.instrument for rec in chosen],
                 "triplets": [tuple(t) for t in triplets],
                 "gains": [float(g) for g in gains], "mixture": m})
            sel = slice(0, k_frames)
            xs.append(mags[sel])
            ys.append(codes[sel])
            metas.extend(meta[sel])
        n = sum(x.shape[0] for x in xs)
        return FrameSet(np.concatenate(xs), np.concatenate(ys),
                        np.ones(n, bool), np.ones(n, bool), metas)

    def training_frames(self, epoch=0) -> FrameSet:
        rng = np.random.default_rng(self.config.seed * 100003 + epoch)
        drawn = self._draw(self.config.train_mixtures_per_epoch, "train", rng)
        if self.config.symbol_coverage <= 0:
            return drawn
        # semi-supervised vocabulary coverage: random label tuples over the
        # full tessitura grids, attached as symbol-only rows
        n_sym = self.config.symbol_coverage * self.config.train_mixtures_per_epoch
        rows = []
        for _ in range(n_sym):
            rows.append([entry["records"][int(rng.integers(len(entry["records"])))].triplet
                         for entry in self.per_instrument])
        sym = _symbol_only_rows(rows, self.vocab, self.fb.spec.n_bands)
        return FrameSet.concat([drawn, sym])

    def validation_frames(self) -> FrameSet:
        return self._val

    def describe(self):
        return {"kind": "mixture", "instruments": [i.name for i in self.instruments],
                "notes_each": [len(e["records"]) for e in self.per_instrument],
                "train_mixtures_per_epoch": self.config.train_mixtures_per_epoch,
                "val_mixtures": self.config.val_mixtures}


def ingest_external(wav_dir, sidecar_path, vocab: VocabSpec, fb: Filterbank,
                    config: DatasetConfig | None = None) -> FrameSet:
    """Frame external WAV files; rows lacking labels become x-only items."""
    import os

    config = config or DatasetConfig()
    records = read_sidecar(sidecar_path)
    xs, ys, has_y, metas = [], [], [], []
    for rec in records:
        path = os.path.join(wav_dir, rec["file"])
        audio = load_audio(path, target_rate=fb.spec.sample_rate)
        coeffs = fb.forward(audio)
        frames = fb.frames(coeffs)
        total = frames.n_frames
        k = min(config.frames_per_note, total)
        start = (total - k) // 2
        mags = frames.magnitudes[start:start + k]
        labeled = all(key in rec for key in ("instrument", "pitch_class", "octave", "dynamics"))
        if labeled:
            dyn = rec["dynamics"]
            dyn = DYNAMICS.index(dyn) if isinstance(dyn, str) else int(dyn)
            triplet = LabelTriplet(int(rec["pitch_class"]), int(rec["octave"]), dyn)
            code = encode_labels([triplet], vocab)
            meta_triplets = [tuple(triplet)]
        else:
            code = np.zeros(vocab.code_length, dtype=np.float32)
            meta_triplets = None
        for i in range(k):
            xs.append(mags[i])
            ys.append(code)
            has_y.append(labeled)
            metas.append({"file": rec["file"], "frame": i, "triplets": meta_triplets,
                          "instruments": [rec.get("instrument")]})
    if not xs:
        raise ParseError("sidecar lists no usable files")
    return FrameSet(np.stack(xs), np.stack(ys), np.ones(len(xs), bool),
                    np.asarray(has_y, bool), metas)


def solo_dataset(instrument_name, fb: Filterbank | None = None,
                 config: DatasetConfig | None = None, octaves=8):
    inst = preset(instrument_name) if isinstance(instrument_name, str) else instrument_name
    vocab = VocabSpec(instruments=(inst.name,), octaves=octaves)
    from .filterbank import desk_spec
    fb = fb or design_filterbank(desk_spec())
    return NoteDataset(inst, vocab, fb, config or DatasetConfig())


def duo_dataset(name_a, name_b, fb: Filterbank | None = None,
                config: DatasetConfig | None = None, octaves=8):
    a = preset(name_a) if isinstance(name_a, str) else name_a
    b = preset(name_b) if isinstance(name_b, str) else name_b
    pair = sorted([a, b], key=lambda s: s.name)
    vocab = VocabSpec(instruments=tuple(s.name for s in pair), octaves=octaves)
    from .filterbank import desk_spec
    fb = fb or design_filterbank(desk_spec())
    return MixtureDataset(pair, vocab, fb, config or DatasetConfig())


def export_dataset(dataset, out_dir):
    """Write the rendered notes as WAV plus a sidecar and manifest."""
    import os

    from .audio_io import save_audio
    from .symbols import write_sidecar

    os.makedirs(out_dir, exist_ok=True)
    records = []
    if isinstance(dataset, NoteDataset):
        groups = [(dataset.instrument, dataset.records, dataset.train_note_ids)]
    else:
        groups = [(inst, entry["records"], entry["train_ids"])
                  for inst, entry in zip(dataset.instruments, dataset.per_instrument)]
    for inst, recs, _ in groups:
        for rec in recs:
            fname = f"{inst.name}_{rec.triplet.pitch_class:02d}_{rec.triplet.octave}_{DYNAMICS[rec.triplet.dynamics]}.wav"
            audio = synth_note(inst, rec.triplet, duration=dataset.config.note_duration,
                               sample_rate=dataset.fb.spec.sample_rate)
            save_audio(os.path.join(out_dir, fname), audio)
            records.append({"file": fname, "instrument": inst.name,
                            "pitch_class": rec.triplet.pitch_class,
                            "octave": rec.triplet.octave,
                            "dynamics": DYNAMICS[rec.triplet.dynamics]})
    write_sidecar(os.path.join(out_dir, "labels.jsonl"), records)
    manifest = {"description": dataset.describe(),
                "splits": _split_manifest(dataset),
                "seed": dataset.config.seed}
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return manifest


def _split_manifest(dataset):
    if isinstance(dataset, NoteDataset):
        return {"train_notes": dataset.train_note_ids, "test_notes": dataset.test_note_ids}
    return {inst.name: {"train_notes": entry["train_ids"], "test_notes": entry["test_ids"]}
            for inst, entry in zip(dataset.instruments, dataset.per_instrument)}
