"""Paired auto-encoders over spectra and label codes with a shared latent.

Both nets are Gaussian-latent MLP auto-encoders. The signal side decodes
to a diagonal Gaussian over magnitude frames (sigmoid mean, softplus
variance). The symbol side decodes to one categorical distribution per
label family. The combined objective adds the two weighted ELBO losses
and a latent matching divergence KL(q(z|x) || q(z|y)); the signal
posterior comes first so the symbol posterior is the one stretched to
cover its mass, which is what makes symbol-conditioned decoding cover
the signal manifold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ContractError, DimensionError
from .filterbank import MAG_FLOOR, FilterbankSpec
from .symbols import VocabSpec, split_code

LATENT_VAR_FLOOR = 1e-6
SIGNAL_VAR_FLOOR = 1e-4
PROB_FLOOR = 1e-7

LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class DiagGaussian:
    """Diagonal Gaussian carried as (mean, log variance) tensors."""

    mean: T.Tensor
    log_var: T.Tensor

    def __post_init__(self):
        if self.mean.data.shape != self.log_var.data.shape:
            raise DimensionError(
                f"mean {self.mean.data.shape} and log_var {self.log_var.data.shape} differ")

    @property
    def dim(self):
        return self.mean.data.shape[-1]

    def sample(self, rng, tape=None):
        noise = rng.standard_normal(self.mean.data.shape).astype(self.mean.data.dtype)
        return reparameterize(self, noise, tape)

    def mean_array(self):
        return np.asarray(self.mean.data)


def reparameterize(g: DiagGaussian, noise, tape=None) -> T.Tensor:
    """z = mean + exp(log_var / 2) * noise, differentiable through both heads."""
    noise_t = T.as_tensor(np.asarray(noise, dtype=g.mean.data.dtype))
    if noise_t.data.shape != g.mean.data.shape:
        raise DimensionError("noise shape must match the distribution")
    std = T.exp(T.scale(g.log_var, 0.5, tape), tape)
    return T.add(g.mean, T.mul(std, noise_t, tape), tape)


def kl_diag_gaussian(q1: DiagGaussian, q2: DiagGaussian, tape=None) -> T.Tensor:
    """Closed-form KL(q1 || q2), summed over dimensions, batched.

    0.5 * sum(log_var2 - log_var1 + exp(log_var1 - log_var2)
              + (mean1 - mean2)^2 * exp(-log_var2) - 1)
    """
    dlv = T.sub(q2.log_var, q1.log_var, tape)
    var_ratio = T.exp(T.sub(q1.log_var, q2.log_var, tape), tape)
    dmean = T.sub(q1.mean, q2.mean, tape)
    mahal = T.mul(T.square(dmean, tape), T.exp(T.scale(q2.log_var, -1.0, tape), tape), tape)
    terms = T.shift(T.add(T.add(dlv, var_ratio, tape), mahal, tape), -1.0, tape)
    return T.scale(T.sum_last(terms, tape), 0.5, tape)


def kl_to_standard_normal(q: DiagGaussian, tape=None) -> T.Tensor:
    zero = T.Tensor(np.zeros_like(q.mean.data))
    return kl_diag_gaussian(q, DiagGaussian(zero, T.Tensor(np.zeros_like(q.mean.data))), tape)


def log_likelihood_gaussian(x, g: DiagGaussian, tape=None) -> T.Tensor:
    """log N(x; mean, var) summed over dimensions. ``x`` is a constant."""
    x_t = T.as_tensor(np.asarray(x, dtype=g.mean.data.dtype))
    diff = T.sub(x_t, g.mean, tape)
    mahal = T.mul(T.square(diff, tape), T.exp(T.scale(g.log_var, -1.0, tape), tape), tape)
    per_dim = T.shift(T.add(g.log_var, mahal, tape), LOG_2PI, tape)
    return T.scale(T.sum_last(per_dim, tape), -0.5, tape)


def log_likelihood_categorical(y_blocks, logit_blocks, tape=None) -> T.Tensor:
    """Sum of true-class log probabilities across families.

    ``y_blocks`` are constant one-hot arrays, ``logit_blocks`` the
    matching head outputs. Probabilities are floored at 1e-7.
    """
    if len(y_blocks) != len(logit_blocks):
        raise ContractError("family count mismatch between labels and logits")
    total = None
    floor = math.log(PROB_FLOOR)
    for y, logits in zip(y_blocks, logit_blocks):
        y_t = T.as_tensor(np.asarray(y, dtype=logits.data.dtype))
        if y_t.data.shape != logits.data.shape:
            raise DimensionError(f"labels {y_t.data.shape} vs logits {logits.data.shape}")
        picked = T.sum_last(T.mul(T.log_softmax(logits, tape), y_t, tape), tape)
        picked = T.clip_min(picked, floor, tape)
        total = picked if total is None else T.add(total, picked, tape)
    return total


class Mlp:
    """Rectifier trunk with named linear heads."""

    def __init__(self, in_dim, hidden, heads, rng, depth=2, dtype=T.DEFAULT_DTYPE):
        if in_dim < 1 or hidden < 1 or depth < 1:
            raise ContractError("in_dim, hidden, and depth must be positive")
        self.in_dim = in_dim
        self.hidden = hidden
        self.depth = depth
        self.trunk = []
        prev = in_dim
        for _ in range(depth):
            self.trunk.append((T.glorot_uniform(hidden, prev, rng, dtype),
                               T.zeros_param(hidden, dtype)))
            prev = hidden
        self.heads = {}
        for name, out_dim in heads.items():
            self.heads[name] = (T.glorot_uniform(out_dim, prev, rng, dtype),
                                T.zeros_param(out_dim, dtype))

    def forward(self, x, tape=None):
        h = T.as_tensor(x)
        if h.data.shape[-1] != self.in_dim:
            raise DimensionError(f"input dim {h.data.shape[-1]}, expected {self.in_dim}")
        for w, b in self.trunk:
            h = T.affine_forward(h, w, b, act="rectifier", tape=tape)
        return {name: T.affine_forward(h, w, b, act="linear", tape=tape)
                for name, (w, b) in self.heads.items()}

    def parameters(self):
        out = []
        for w, b in self.trunk:
            out.extend((w, b))
        for w, b in self.heads.values():
            out.extend((w, b))
        return out


def _variance_head(raw, floor, tape):
    # smooth positive variance with a hard lower bound
    return T.log(T.shift(T.softplus(raw, tape), floor, tape), tape)


class SignalVae:
    """Gaussian auto-encoder over magnitude frames.

    The decoded mean is squashed into [out_floor, 1]: frames from the
    analysis front end never carry live values below its magnitude
    floor, so the decoder should not claim any either — ratio-based
    spectral divergences against floored references stay bounded.
    """

    def __init__(self, input_dim, latent_dim, hidden, rng, depth=2, dtype=T.DEFAULT_DTYPE,
                 out_floor=MAG_FLOOR):
        self.input_dim = input_dim
        self.latent_dim = latent_dim
        self.hidden = hidden
        self.out_floor = float(out_floor)
        self.encoder = Mlp(input_dim, hidden, {"mean": latent_dim, "raw_var": latent_dim},
                           rng, depth, dtype)
        self.decoder = Mlp(latent_dim, hidden, {"raw_mean": input_dim, "raw_var": input_dim},
                           rng, depth, dtype)

    def encode(self, x, tape=None) -> DiagGaussian:
        heads = self.encoder.forward(x, tape)
        return DiagGaussian(heads["mean"], _variance_head(heads["raw_var"], LATENT_VAR_FLOOR, tape))

    def decode(self, z, tape=None) -> DiagGaussian:
        heads = self.decoder.forward(z, tape)
        squashed = T.sigmoid(heads["raw_mean"], tape)
        mean = T.shift(T.scale(squashed, 1.0 - self.out_floor, tape), self.out_floor, tape)
        return DiagGaussian(mean, _variance_head(heads["raw_var"], SIGNAL_VAR_FLOOR, tape))

    def parameters(self):
        return self.encoder.parameters() + self.decoder.parameters()


class SymbolVae:
    """Gaussian-latent auto-encoder over concatenated one-hot label codes."""

    def __init__(self, vocab: VocabSpec, latent_dim, hidden, rng, depth=2, dtype=T.DEFAULT_DTYPE):
        self.vocab = vocab
        self.latent_dim = latent_dim
        self.hidden = hidden
        self.input_dim = vocab.code_length
        self.family_sizes = list(vocab.family_sizes) * vocab.n_sources
        self.encoder = Mlp(self.input_dim, hidden, {"mean": latent_dim, "raw_var": latent_dim},
                           rng, depth, dtype)
        heads = {f"family_{i}": size for i, size in enumerate(self.family_sizes)}
        self.decoder = Mlp(latent_dim, hidden, heads, rng, depth, dtype)

    def encode(self, y, tape=None) -> DiagGaussian:
        heads = self.encoder.forward(y, tape)
        return DiagGaussian(heads["mean"], _variance_head(heads["raw_var"], LATENT_VAR_FLOOR, tape))

    def decode_logits(self, z, tape=None):
        heads = self.decoder.forward(z, tape)
        return [heads[f"family_{i}"] for i in range(len(self.family_sizes))]

    def decode_probs(self, z):
        return [np.asarray(T.softmax_stable(l).data) for l in self.decode_logits(z)]

    def parameters(self):
        return self.encoder.parameters() + self.decoder.parameters()


@dataclass
class LossBreakdown:
    """Batch-mean objective terms. ``total`` is their exact weighted sum."""

    rec_signal: float
    kl_signal: float
    rec_symbol: float
    kl_symbol: float
    match_kl: float
    beta: float
    gamma: float
    total: float

    def recombine(self):
        return (self.rec_signal + self.beta * self.kl_signal
                + self.rec_symbol + self.beta * self.kl_symbol
                + self.gamma * self.match_kl)

    def to_dict(self):
        return {k: float(getattr(self, k)) for k in
                ("rec_signal", "kl_signal", "rec_symbol", "kl_symbol",
                 "match_kl", "beta", "gamma", "total")}


def paired_loss(signal_vae: SignalVae, symbol_vae: SymbolVae, x, y, beta, gamma,
                noise_x, noise_y, tape=None):
    """Joint objective for a paired batch.

    total = [-loglik_x + beta * KL(q(z|x) || N(0,I))]
          + [-loglik_y + beta * KL(q(z|y) || N(0,I))]
          + gamma * KL(q(z|x) || q(z|y))

    Returns (LossBreakdown, total_node). The matching term takes the
    signal posterior as its first argument; swapping them changes the
    optimum and is covered by a regression test.
    """
    q_x = signal_vae.encode(x, tape)
    q_y = symbol_vae.encode(y, tape)
    z_x = reparameterize(q_x, noise_x, tape)
    z_y = reparameterize(q_y, noise_y, tape)

    rec_x = T.scale(T.mean_all(log_likelihood_gaussian(x, signal_vae.decode(z_x, tape), tape), tape),
                    -1.0, tape)
    y_blocks = split_code(np.asarray(y), symbol_vae.vocab)
    rec_y = T.scale(T.mean_all(log_likelihood_categorical(
        y_blocks, symbol_vae.decode_logits(z_y, tape), tape), tape), -1.0, tape)
    kl_x = T.mean_all(kl_to_standard_normal(q_x, tape), tape)
    kl_y = T.mean_all(kl_to_standard_normal(q_y, tape), tape)
    match = T.mean_all(kl_diag_gaussian(q_x, q_y, tape), tape)

    total = T.add(rec_x, T.scale(kl_x, beta, tape), tape)
    total = T.add(total, T.add(rec_y, T.scale(kl_y, beta, tape), tape), tape)
    total = T.add(total, T.scale(match, gamma, tape), tape)

    breakdown = LossBreakdown(
        rec_signal=float(rec_x.data), kl_signal=float(kl_x.data),
        rec_symbol=float(rec_y.data), kl_symbol=float(kl_y.data),
        match_kl=float(match.data), beta=float(beta), gamma=float(gamma),
        total=float(total.data))
    return breakdown, total


def signal_elbo_loss(signal_vae: SignalVae, x, beta, noise, tape=None):
    """-loglik + beta * KL for the signal side alone (x-only batches)."""
    q = signal_vae.encode(x, tape)
    z = reparameterize(q, noise, tape)
    rec = T.scale(T.mean_all(log_likelihood_gaussian(x, signal_vae.decode(z, tape), tape), tape),
                  -1.0, tape)
    kl = T.mean_all(kl_to_standard_normal(q, tape), tape)
    total = T.add(rec, T.scale(kl, beta, tape), tape)
    return float(rec.data), float(kl.data), total


def symbol_elbo_loss(symbol_vae: SymbolVae, y, beta, noise, tape=None):
    """-loglik + beta * KL for the symbol side alone (y-only batches)."""
    q = symbol_vae.encode(y, tape)
    z = reparameterize(q, noise, tape)
    y_blocks = split_code(np.asarray(y), symbol_vae.vocab)
    rec = T.scale(T.mean_all(log_likelihood_categorical(
        y_blocks, symbol_vae.decode_logits(z, tape), tape), tape), -1.0, tape)
    kl = T.mean_all(kl_to_standard_normal(q, tape), tape)
    total = T.add(rec, T.scale(kl, beta, tape), tape)
    return float(rec.data), float(kl.data), total


class TranslationModel:
    """The deployable pair: both VAEs plus the specs they were built for."""

    def __init__(self, vocab: VocabSpec, fb_spec: FilterbankSpec, latent_dim,
                 signal_hidden, symbol_hidden, rng=None, depth=2, dtype=T.DEFAULT_DTYPE):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.vocab = vocab
        self.fb_spec = fb_spec
        self.latent_dim = latent_dim
        self.depth = depth
        self.signal_vae = SignalVae(fb_spec.n_bands, latent_dim, signal_hidden, rng, depth, dtype)
        self.symbol_vae = SymbolVae(vocab, latent_dim, symbol_hidden, rng, depth, dtype)
        self._fb = None

    @property
    def input_dim(self):
        return self.signal_vae.input_dim

    def filterbank(self):
        if self._fb is None:
            from .filterbank import design_filterbank
            self._fb = design_filterbank(self.fb_spec)
        return self._fb

    def parameters(self):
        return self.signal_vae.parameters() + self.symbol_vae.parameters()

    def named_parameters(self):
        names = []
        for prefix, mlp in (("signal.enc", self.signal_vae.encoder),
                            ("signal.dec", self.signal_vae.decoder),
                            ("symbol.enc", self.symbol_vae.encoder),
                            ("symbol.dec", self.symbol_vae.decoder)):
            for i, (w, b) in enumerate(mlp.trunk):
                names.append((f"{prefix}.trunk{i}.w", w))
                names.append((f"{prefix}.trunk{i}.b", b))
            for head, (w, b) in sorted(mlp.heads.items()):
                names.append((f"{prefix}.{head}.w", w))
                names.append((f"{prefix}.{head}.b", b))
        return names

    # -- deterministic inference primitives --------------------------------

    def encode_signal(self, magnitudes) -> DiagGaussian:
        return self.signal_vae.encode(T.Tensor(np.asarray(magnitudes, dtype=np.float32)))

    def encode_symbol(self, code) -> DiagGaussian:
        return self.symbol_vae.encode(T.Tensor(np.asarray(code, dtype=np.float32)))

    def decode_signal(self, z) -> np.ndarray:
        return np.asarray(self.signal_vae.decode(T.Tensor(np.asarray(z, dtype=np.float32))).mean.data)

    def decode_symbol_probs(self, z):
        return self.symbol_vae.decode_probs(T.Tensor(np.asarray(z, dtype=np.float32)))

    def architecture(self):
        return {
            "latent_dim": self.latent_dim,
            "input_dim": self.input_dim,
            "signal_hidden": self.signal_vae.hidden,
            "symbol_hidden": self.symbol_vae.hidden,
            "depth": self.depth,
        }
