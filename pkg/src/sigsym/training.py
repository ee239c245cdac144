"""Joint training loop with warm-up, plateau decay, and checkpoints.

The regularization weight ramps linearly from 0 to 1 over the warm-up
window. The learning rate halves whenever the validation loss stops
improving by at least 1% relative for ``patience`` epochs, down to a
floor. Batches may mix paired, signal-only, and label-only items; each
item contributes only the terms its modalities support, so the missing
side receives exactly zero gradient.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .errors import (ConfigurationError, FormatError, IntegrityError,
                     NumericError, RangeError, UnsupportedVersionError)
from .filterbank import FilterbankSpec
from .models import (LossBreakdown, TranslationModel, paired_loss,
                     signal_elbo_loss, symbol_elbo_loss)
from .symbols import VocabSpec

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"LTX1"
CHECKPOINT_VERSION = 1

# hidden sizes (signal net, symbol net) per mixture size
PRESETS = {
    "solo": (2000, 800),
    "duo": (5000, 800),
    "trio": (5000, 1500),
}


@dataclass
class TrainConfig:
    epochs: int = 400
    batch_size: int = 64
    lr0: float = 1e-3
    warmup_epochs: int = 100
    gamma: float = 10.0
    seed: int = 0
    latent_dim: int = 32
    signal_hidden: int = 2000
    symbol_hidden: int = 800
    depth: int = 2
    patience: int = 10
    min_rel_improvement: float = 0.01
    lr_floor: float = 1e-5
    checkpoint_every: int = 0     # epochs between periodic saves; 0 = final only
    log_every: int = 25

    def __post_init__(self):
        if self.lr0 <= 0:
            raise ConfigurationError("lr0 must be positive")
        if self.warmup_epochs < 1:
            raise ConfigurationError("warmup_epochs must be >= 1")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigurationError("epochs and batch_size must be >= 1")
        if self.gamma < 0:
            raise ConfigurationError("gamma must be nonnegative")

    @classmethod
    def preset(cls, name, desk=False, **overrides):
        """Named size presets; ``desk`` halves both hidden widths."""
        if name not in PRESETS:
            raise ConfigurationError(f"unknown preset {name!r}, expected one of {sorted(PRESETS)}")
        signal_hidden, symbol_hidden = PRESETS[name]
        if desk:
            signal_hidden //= 2
            symbol_hidden //= 2
        base = dict(signal_hidden=signal_hidden, symbol_hidden=symbol_hidden)
        base.update(overrides)
        return cls(**base)

    def config_hash(self):
        payload = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:12]


def desk_solo_config(**overrides):
    """Small configuration sized for the single-instrument bench run."""
    base = dict(epochs=400, latent_dim=16, signal_hidden=256, symbol_hidden=256)
    base.update(overrides)
    return TrainConfig(**base)


@dataclass
class TrainHistory:
    """Per-epoch averages plus the schedule traces."""

    train: list = field(default_factory=list)
    val: list = field(default_factory=list)
    lr_trace: list = field(default_factory=list)
    beta_trace: list = field(default_factory=list)

    def append(self, train_breakdown: LossBreakdown, val_breakdown: LossBreakdown,
               lr: float, beta: float):
        self.train.append(train_breakdown.to_dict())
        self.val.append(val_breakdown.to_dict())
        self.lr_trace.append(float(lr))
        self.beta_trace.append(float(beta))

    @property
    def n_epochs(self):
        return len(self.train)

    def val_totals(self):
        return [row["total"] for row in self.val]

    def write_jsonl(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for epoch in range(self.n_epochs):
                row = {"epoch": epoch, "lr": self.lr_trace[epoch],
                       "beta": self.beta_trace[epoch],
                       "train": self.train[epoch], "val": self.val[epoch]}
                fh.write(json.dumps(row, sort_keys=True) + "\n")

    @classmethod
    def read_jsonl(cls, path):
        hist = cls()
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                row = json.loads(line)
                hist.train.append(row["train"])
                hist.val.append(row["val"])
                hist.lr_trace.append(row["lr"])
                hist.beta_trace.append(row["beta"])
        return hist


def warmup_beta(epoch, warmup_epochs=100):
    """Linear ramp 0 -> 1 over the first ``warmup_epochs`` epochs."""
    if epoch < 0:
        raise RangeError("epoch must be nonnegative")
    return float(min(1.0, epoch / warmup_epochs))


class PlateauScheduler:
    """Halve the learning rate when validation stalls.

    Improvement is judged against the current reference loss: a new value
    counts only when it beats the reference by ``min_rel_improvement``
    relative (measured against |reference| so negative losses behave).
    """

    def __init__(self, lr0, patience=10, min_rel_improvement=0.01, floor=1e-5):
        self.lr = float(lr0)
        self.patience = int(patience)
        self.min_rel_improvement = float(min_rel_improvement)
        self.floor = float(floor)
        self.reference = None
        self.stalled = 0

    def update(self, val_loss) -> float:
        val_loss = float(val_loss)
        if self.reference is None:
            self.reference = val_loss
            return self.lr
        margin = self.min_rel_improvement * max(abs(self.reference), 1e-12)
        if self.reference - val_loss >= margin:
            self.reference = val_loss
            self.stalled = 0
        else:
            self.stalled += 1
            if self.stalled >= self.patience:
                self.lr = max(self.floor, self.lr / 2.0)
                self.stalled = 0
        return self.lr


def lr_update(val_losses, lr0, *, patience=10, min_rel_improvement=0.01, floor=1e-5):
    """Replay the plateau rule over a loss trace; returns the final rate."""
    sched = PlateauScheduler(lr0, patience, min_rel_improvement, floor)
    lr = sched.lr
    for v in val_losses:
        lr = sched.update(v)
    return lr


def _combine(parts, n_total, beta, gamma):
    """Merge sub-batch breakdowns into one batch-mean LossBreakdown.

    ``parts`` maps term name to a list of (count, value) pairs; absent
    terms contribute zero, so recombine() matches the optimized node.
    """
    def avg(key):
        return sum(c * v for c, v in parts.get(key, ())) / n_total

    bd = LossBreakdown(
        rec_signal=avg("rec_signal"), kl_signal=avg("kl_signal"),
        rec_symbol=avg("rec_symbol"), kl_symbol=avg("kl_symbol"),
        match_kl=avg("match_kl"), beta=float(beta), gamma=float(gamma),
        total=0.0)
    bd.total = bd.recombine()
    return bd


def _batch_loss(model: TranslationModel, batch, beta, gamma, rng, tape):
    """Batch-mean objective over paired and single-modality items."""
    n = len(batch)
    paired = batch.has_x & batch.has_y
    x_only = batch.has_x & ~batch.has_y
    y_only = ~batch.has_x & batch.has_y
    latent = model.latent_dim
    parts = {"rec_signal": [], "kl_signal": [], "rec_symbol": [],
             "kl_symbol": [], "match_kl": []}
    total = None

    def accumulate(node, count):
        nonlocal total
        scaled = T.scale(node, count / n, tape)
        total = scaled if total is None else T.add(total, scaled, tape)

    if paired.any():
        k = int(paired.sum())
        noise_x = rng.standard_normal((k, latent)).astype(np.float32)
        noise_y = rng.standard_normal((k, latent)).astype(np.float32)
        bd, node = paired_loss(model.signal_vae, model.symbol_vae,
                               batch.x[paired], batch.y[paired],
                               beta, gamma, noise_x, noise_y, tape)
        accumulate(node, k)
        parts["rec_signal"].append((k, bd.rec_signal))
        parts["kl_signal"].append((k, bd.kl_signal))
        parts["rec_symbol"].append((k, bd.rec_symbol))
        parts["kl_symbol"].append((k, bd.kl_symbol))
        parts["match_kl"].append((k, bd.match_kl))
    if x_only.any():
        k = int(x_only.sum())
        noise = rng.standard_normal((k, latent)).astype(np.float32)
        rec, kl, node = signal_elbo_loss(model.signal_vae, batch.x[x_only], beta, noise, tape)
        accumulate(node, k)
        parts["rec_signal"].append((k, rec))
        parts["kl_signal"].append((k, kl))
    if y_only.any():
        k = int(y_only.sum())
        noise = rng.standard_normal((k, latent)).astype(np.float32)
        rec, kl, node = symbol_elbo_loss(model.symbol_vae, batch.y[y_only], beta, noise, tape)
        accumulate(node, k)
        parts["rec_symbol"].append((k, rec))
        parts["kl_symbol"].append((k, kl))
    if total is None:
        raise ConfigurationError("batch has no usable items (all modalities masked)")
    return _combine(parts, n, beta, gamma), total


def train_step(model: TranslationModel, batch, beta, gamma, optimizer, rng):
    """One gradient step on the batch-mean loss; returns the breakdown."""
    tape = T.Tape()
    breakdown, node = _batch_loss(model, batch, beta, gamma, rng, tape)
    if not math.isfinite(breakdown.total):
        stats = {
            "terms": breakdown.to_dict(),
            "x": {"min": float(batch.x.min()), "max": float(batch.x.max())},
            "items": len(batch),
            "paired": int((batch.has_x & batch.has_y).sum()),
        }
        raise NumericError(f"non-finite training loss; batch dump: {json.dumps(stats)}")
    optimizer.zero_grad()
    tape.backward(node, params=model.parameters())
    optimizer.step()
    return breakdown


def validation_loss(model: TranslationModel, frames, beta, gamma, batch_size=256):
    """Deterministic full-pass loss with zero latent noise, no gradients."""
    if len(frames) == 0:
        raise ConfigurationError("validation set is empty")
    parts = {"rec_signal": [], "kl_signal": [], "rec_symbol": [],
             "kl_symbol": [], "match_kl": []}
    n = len(frames)
    for start in range(0, n, batch_size):
        sub = frames.subset(range(start, min(n, start + batch_size)))
        k = len(sub)
        noise = np.zeros((k, model.latent_dim), dtype=np.float32)
        paired = sub.has_x & sub.has_y
        if paired.all():
            bd, _ = paired_loss(model.signal_vae, model.symbol_vae, sub.x, sub.y,
                                beta, gamma, noise, noise)
            for key in parts:
                parts[key].append((k, getattr(bd, key)))
        else:
            rng = _ZeroNoise()
            bd, _ = _batch_loss(model, sub, beta, gamma, rng, None)
            for key in parts:
                parts[key].append((k, getattr(bd, key)))
    return _combine(parts, n, beta, gamma)


class _ZeroNoise:
    """Stands in for an RNG when evaluation must be noise-free."""

    def standard_normal(self, shape):
        return np.zeros(shape)


def train(dataset, cfg: TrainConfig, out_dir=None, progress=None):
    """Full training run; returns the model and its history.

    Deterministic for a fixed seed: model init, batch order, and latent
    noise all derive from per-epoch child generators of ``cfg.seed``.
    """
    first = dataset.training_frames(0)
    if len(first) == 0:
        raise ConfigurationError("training set is empty")
    if out_dir is not None:
        import os
        os.makedirs(out_dir, exist_ok=True)
    model = TranslationModel(dataset.vocab, dataset.fb.spec, cfg.latent_dim,
                             cfg.signal_hidden, cfg.symbol_hidden,
                             rng=np.random.default_rng(cfg.seed), depth=cfg.depth)
    optimizer = T.Adam(model.parameters(), lr=cfg.lr0)
    scheduler = PlateauScheduler(cfg.lr0, cfg.patience, cfg.min_rel_improvement, cfg.lr_floor)
    history = TrainHistory()
    val_frames = dataset.validation_frames()
    log.info("training: %d epochs, %d train frames, %d val frames, config %s",
             cfg.epochs, len(first), len(val_frames), cfg.config_hash())

    for epoch in range(cfg.epochs):
        beta = warmup_beta(epoch, cfg.warmup_epochs)
        optimizer.lr = scheduler.lr
        rng = np.random.default_rng([cfg.seed, epoch])
        frames = first if epoch == 0 else dataset.training_frames(epoch)
        order = rng.permutation(len(frames))
        parts = {"rec_signal": [], "kl_signal": [], "rec_symbol": [],
                 "kl_symbol": [], "match_kl": []}
        for start in range(0, len(order), cfg.batch_size):
            batch = frames.subset(order[start:start + cfg.batch_size])
            bd = train_step(model, batch, beta, cfg.gamma, optimizer, rng)
            for key in parts:
                parts[key].append((len(batch), getattr(bd, key)))
        train_bd = _combine(parts, len(order), beta, cfg.gamma)
        val_bd = validation_loss(model, val_frames, beta, cfg.gamma)
        # plateau detection only once beta stops moving: while the warm-up
        # reweights the objective every epoch, successive validation totals
        # are not comparable and would trigger spurious lr halvings
        if beta >= 1.0:
            scheduler.update(val_bd.total)
        history.append(train_bd, val_bd, optimizer.lr, beta)
        if progress is not None:
            progress(epoch, train_bd, val_bd)
        if cfg.log_every and epoch % cfg.log_every == 0:
            log.info("epoch %4d  train %.4f  val %.4f  lr %.2e  beta %.2f",
                     epoch, train_bd.total, val_bd.total, optimizer.lr, beta)
        if out_dir is not None and cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
            checkpoint_save(model, f"{out_dir}/epoch_{epoch + 1:04d}.ltx",
                            train_config=cfg)
    if out_dir is not None:
        checkpoint_save(model, f"{out_dir}/final.ltx", train_config=cfg)
        history.write_jsonl(f"{out_dir}/history.jsonl")
    return model, history


# -- checkpoint format -------------------------------------------------------
#
# magic "LTX1" | u32 version | u32 header length | JSON header
# | concatenated little-endian float32 parameter blobs | sha256 of all
# preceding bytes. The header carries the architecture, vocabulary, and
# filterbank settings needed to rebuild the model before loading blobs.


def checkpoint_save(model: TranslationModel, path, train_config: TrainConfig | None = None,
                    extra: dict | None = None):
    named = model.named_parameters()
    header = {
        "architecture": model.architecture(),
        "vocab": model.vocab.to_dict(),
        "filterbank": asdict(model.fb_spec),
        "params": [{"name": name, "shape": list(p.data.shape)} for name, p in named],
        "train_config": asdict(train_config) if train_config is not None else None,
        "extra": extra or {},
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    blob = bytearray()
    blob += CHECKPOINT_MAGIC
    blob += struct.pack("<II", CHECKPOINT_VERSION, len(header_bytes))
    blob += header_bytes
    for _, p in named:
        blob += np.ascontiguousarray(p.data, dtype="<f4").tobytes()
    digest = hashlib.sha256(bytes(blob)).digest()
    blob += digest
    with open(path, "wb") as fh:
        fh.write(bytes(blob))
    return path


def checkpoint_load(path) -> tuple[TranslationModel, dict]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4 + 8 + 32:
        raise IntegrityError(f"checkpoint too short ({len(raw)} bytes)")
    if raw[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"bad checkpoint magic {raw[:4]!r}")
    version, header_len = struct.unpack_from("<II", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise UnsupportedVersionError(f"checkpoint version {version}, support {CHECKPOINT_VERSION}")
    payload, stored = raw[:-32], raw[-32:]
    if hashlib.sha256(payload).digest() != stored:
        raise IntegrityError("checkpoint checksum mismatch")
    if len(payload) < 12 + header_len:
        raise IntegrityError("checkpoint header truncated")
    header = json.loads(payload[12:12 + header_len].decode("utf-8"))
    arch = header["architecture"]
    vocab = VocabSpec.from_dict(header["vocab"])
    fb_spec = FilterbankSpec(**header["filterbank"])
    model = TranslationModel(vocab, fb_spec, arch["latent_dim"],
                             arch["signal_hidden"], arch["symbol_hidden"],
                             rng=np.random.default_rng(0), depth=arch["depth"])
    named = model.named_parameters()
    if [n for n, _ in named] != [p["name"] for p in header["params"]]:
        raise IntegrityError("checkpoint parameter list does not match the architecture")
    offset = 12 + header_len
    for (_, tensor), meta in zip(named, header["params"]):
        shape = tuple(meta["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = offset + 4 * count
        if end > len(payload):
            raise IntegrityError("checkpoint blob section truncated")
        block = np.frombuffer(payload, dtype="<f4", count=count, offset=offset)
        tensor.data = block.reshape(shape).astype(np.float32).copy()
        offset = end
    if offset != len(payload):
        raise IntegrityError(f"{len(payload) - offset} unexpected trailing bytes")
    return model, header
