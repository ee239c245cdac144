"""Quantitative evaluation: spectral divergence, label accuracy, baseline.

Reconstruction metrics push each domain through its own encoder and
decoder; transfer metrics cross domains through the shared latent. Label
accuracy comes in a strict form (the value must sit in the right source
slot) and a loose form (slot-agnostic multiset overlap), and the loose
form dominates the strict one by construction. A PCA-plus-MLP classifier
serves as the reference point for the label metrics.
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ArityError, ConfigurationError, ContractError
from .models import Mlp, log_likelihood_categorical, log_likelihood_gaussian, DiagGaussian
from .symbols import VocabSpec, split_code, triplets_from_code
from .training import PlateauScheduler

log = logging.getLogger(__name__)

ISD_FLOOR = 1e-7
FAMILIES = ("pitch", "octave", "dynamics")


def itakura_saito(ref, est, floor=ISD_FLOOR) -> float:
    """Mean per-bin Itakura-Saito divergence between magnitude arrays.

    Both inputs are floored at ``floor`` first, which makes the metric
    total and keeps the identity-of-indiscernibles property over the
    floored values.
    """
    r = np.maximum(np.asarray(ref, dtype=np.float64), floor)
    e = np.maximum(np.asarray(est, dtype=np.float64), floor)
    if r.shape != e.shape:
        raise ContractError(f"shape mismatch {r.shape} vs {e.shape}")
    ratio = r / e
    return float(np.mean(ratio - np.log(ratio) - 1.0))


def _check_label_arity(pred, truth):
    if len(pred) != len(truth):
        raise ArityError(f"{len(pred)} predictions vs {len(truth)} truths")
    if len(pred) == 0:
        raise ArityError("empty evaluation batch")
    m = len(truth[0])
    for p, t in zip(pred, truth):
        if len(p) != m or len(t) != m:
            raise ArityError("inconsistent source count across items")
    return m


def success_ratio(pred, truth) -> dict:
    """Strict per-family accuracy: the value must match in its slot."""
    m = _check_label_arity(pred, truth)
    hits = dict.fromkeys(FAMILIES, 0)
    for p_item, t_item in zip(pred, truth):
        for p, t in zip(p_item, t_item):
            for fam, pv, tv in zip(FAMILIES, p, t):
                hits[fam] += int(pv == tv)
    total = len(pred) * m
    return {fam: 100.0 * hits[fam] / total for fam in FAMILIES}


def loose_ratio(pred, truth) -> dict:
    """Slot-agnostic accuracy: multiset overlap of values per family."""
    m = _check_label_arity(pred, truth)
    overlap = dict.fromkeys(FAMILIES, 0)
    for p_item, t_item in zip(pred, truth):
        for j, fam in enumerate(FAMILIES):
            c_pred = Counter(p[j] for p in p_item)
            c_truth = Counter(t[j] for t in t_item)
            overlap[fam] += sum((c_pred & c_truth).values())
    total = len(pred) * m
    return {fam: 100.0 * overlap[fam] / total for fam in FAMILIES}


# -- baseline classifier ------------------------------------------------------


@dataclass
class BaselineModel:
    """Linear projection onto principal directions plus an MLP classifier."""

    mean: np.ndarray          # (F,)
    components: np.ndarray    # (k, F) orthonormal rows
    mlp: Mlp
    vocab: VocabSpec

    def project(self, x):
        x = np.asarray(x, dtype=np.float64)
        return ((x - self.mean) @ self.components.T).astype(np.float32)

    def predict_probs(self, x):
        logits = self.mlp.forward(T.Tensor(self.project(x)))
        names = sorted(logits, key=lambda s: int(s.split("_")[1]))
        return [np.asarray(T.softmax_stable(logits[n]).data) for n in names]

    def predict_triplets(self, x):
        probs = self.predict_probs(x)
        flat = np.concatenate(probs, axis=-1)
        return [triplets_from_code(row, self.vocab) for row in np.atleast_2d(flat)]


def fit_pca(x, k):
    """Top-``k`` principal directions; shrinks ``k`` on degenerate data."""
    x = np.asarray(x, dtype=np.float64)
    mean = x.mean(axis=0)
    centered = x - mean
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    tol = s.max() * max(centered.shape) * np.finfo(np.float64).eps if s.size else 0.0
    rank = int(np.sum(s > tol))
    if rank < k:
        log.warning("covariance rank %d below requested %d components; shrinking", rank, k)
        k = max(rank, 1)
    return mean, vt[:k]


def train_baseline(dataset, latent_dim, hidden, epochs=150, batch_size=64,
                   lr0=1e-3, seed=0, depth=2) -> BaselineModel:
    """PCA front end plus a softmax MLP trained with cross-entropy."""
    frames = dataset.training_frames(0)
    usable = frames.has_x & frames.has_y
    if not usable.any():
        raise ConfigurationError("baseline needs labeled training frames")
    frames = frames.subset(np.flatnonzero(usable))
    vocab = dataset.vocab
    mean, components = fit_pca(frames.x, latent_dim)
    proj = ((frames.x.astype(np.float64) - mean) @ components.T).astype(np.float32)

    family_sizes = list(vocab.family_sizes) * vocab.n_sources
    heads = {f"family_{i}": size for i, size in enumerate(family_sizes)}
    rng = np.random.default_rng(seed)
    mlp = Mlp(components.shape[0], hidden, heads, rng, depth=depth)
    params = mlp.parameters()
    optimizer = T.Adam(params, lr=lr0)
    scheduler = PlateauScheduler(lr0)
    n = proj.shape[0]
    for epoch in range(epochs):
        optimizer.lr = scheduler.lr
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            tape = T.Tape()
            logits = mlp.forward(T.Tensor(proj[idx]), tape)
            ordered = [logits[f"family_{i}"] for i in range(len(family_sizes))]
            y_blocks = split_code(frames.y[idx], vocab)
            loglik = log_likelihood_categorical(y_blocks, ordered, tape)
            loss = T.scale(T.mean_all(loglik, tape), -1.0, tape)
            optimizer.zero_grad()
            tape.backward(loss, params=params)
            optimizer.step()
            epoch_loss += float(loss.data) * len(idx)
        scheduler.update(epoch_loss / n)
    return BaselineModel(mean=mean, components=components, mlp=mlp, vocab=vocab)


# -- model evaluation ---------------------------------------------------------


@dataclass
class EvalReport:
    """Named result rows mirroring the reconstruction/transfer table shape."""

    rows: list = field(default_factory=list)

    def add_row(self, row):
        for key in ("strict_recon", "loose_recon", "strict_transfer", "loose_transfer"):
            for fam, value in row.get(key, {}).items():
                if not 0.0 <= value <= 100.0 + 1e-9:
                    raise ContractError(f"{key}[{fam}] = {value} outside [0, 100]")
        for key in ("isd_recon", "isd_transfer"):
            if row.get(key) is not None and row[key] < 0:
                raise ContractError(f"{key} must be nonnegative")
        for strict_key, loose_key in (("strict_recon", "loose_recon"),
                                      ("strict_transfer", "loose_transfer")):
            strict, loose = row.get(strict_key), row.get(loose_key)
            if strict and loose:
                for fam in strict:
                    if loose[fam] < strict[fam] - 1e-9:
                        raise ContractError(f"loose < strict for {fam}")
        self.rows.append(row)

    def write_jsonl(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for row in self.rows:
                fh.write(json.dumps(row, sort_keys=True) + "\n")

    @classmethod
    def read_jsonl(cls, path):
        report = cls()
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    report.rows.append(json.loads(line))
        return report

    def format_table(self) -> str:
        lines = []
        header = (f"{'name':<18} {'-loglik rec':>12} {'ISD rec':>9} "
                  f"{'-loglik xfer':>13} {'ISD xfer':>9}")
        lines.append(header)
        lines.append("-" * len(header))
        for row in self.rows:
            lines.append(f"{row['name']:<18} {row['neg_loglik_recon']:>12.3f} "
                         f"{row['isd_recon']:>9.4f} {row['neg_loglik_transfer']:>13.3f} "
                         f"{row['isd_transfer']:>9.4f}")
        lines.append("")
        header2 = f"{'name':<18} {'family':<9} {'recon strict (loose)':>22} {'xfer strict (loose)':>22} {'baseline':>9}"
        lines.append(header2)
        lines.append("-" * len(header2))
        for row in self.rows:
            for fam in FAMILIES:
                base = row.get("baseline")
                base_txt = f"{base[fam]:>8.1f}%" if base else f"{'-':>9}"
                lines.append(
                    f"{row['name']:<18} {fam:<9} "
                    f"{row['strict_recon'][fam]:>12.1f}% ({row['loose_recon'][fam]:5.1f}%) "
                    f"{row['strict_transfer'][fam]:>12.1f}% ({row['loose_transfer'][fam]:5.1f}%) "
                    f"{base_txt}")
        return "\n".join(lines)


def _signal_metrics(x, dist: DiagGaussian):
    neg_loglik = -float(np.mean(np.asarray(log_likelihood_gaussian(x, dist).data)))
    isd = itakura_saito(x, np.asarray(dist.mean.data))
    return neg_loglik, isd


def _codes(truth, vocab):
    from .symbols import encode_labels
    return [encode_labels(item, vocab) for item in truth]


def mean_true_class_probability(probs, truth, vocab) -> float:
    """Average probability the classifier puts on the correct class."""
    codes = np.stack(_codes(truth, vocab))
    blocks = split_code(codes, vocab)
    total = 0.0
    for p, block in zip(probs, blocks):
        total += float(np.mean(np.sum(p * block, axis=-1)))
    return total / len(blocks)


def evaluate_model(model, dataset, baseline: BaselineModel | None = None,
                   name=None, sample_seed=None) -> EvalReport:
    """Fill one report row from the dataset's held-out frames.

    Latent codes are posterior means unless ``sample_seed`` is given, in
    which case one reparameterized draw per item is used instead.
    """
    if model.vocab.to_dict() != dataset.vocab.to_dict():
        raise ConfigurationError("model and dataset vocabularies differ")
    frames = dataset.validation_frames()
    x = frames.x
    y = frames.y
    truth = [triplets_from_code(code, dataset.vocab) for code in y]

    q_x = model.encode_signal(x)
    q_y = model.encode_symbol(y)
    if sample_seed is None:
        z_x = q_x.mean_array()
        z_y = q_y.mean_array()
    else:
        rng = np.random.default_rng(sample_seed)
        z_x = np.asarray(q_x.sample(rng).data)
        z_y = np.asarray(q_y.sample(rng).data)

    dist_recon = model.signal_vae.decode(T.Tensor(np.asarray(z_x, dtype=np.float32)))
    dist_transfer = model.signal_vae.decode(T.Tensor(np.asarray(z_y, dtype=np.float32)))
    neg_ll_recon, isd_recon = _signal_metrics(x, dist_recon)
    neg_ll_transfer, isd_transfer = _signal_metrics(x, dist_transfer)

    probs_recon = model.decode_symbol_probs(z_y)
    probs_transfer = model.decode_symbol_probs(z_x)
    pred_recon = [triplets_from_code(np.concatenate([p[i] for p in probs_recon]), dataset.vocab)
                  for i in range(len(x))]
    pred_transfer = [triplets_from_code(np.concatenate([p[i] for p in probs_transfer]), dataset.vocab)
                     for i in range(len(x))]

    row = {
        "name": name or dataset.describe().get("kind", "dataset"),
        "neg_loglik_recon": neg_ll_recon,
        "isd_recon": isd_recon,
        "neg_loglik_transfer": neg_ll_transfer,
        "isd_transfer": isd_transfer,
        "strict_recon": success_ratio(pred_recon, truth),
        "loose_recon": loose_ratio(pred_recon, truth),
        "strict_transfer": success_ratio(pred_transfer, truth),
        "loose_transfer": loose_ratio(pred_transfer, truth),
        "true_prob_recon": mean_true_class_probability(probs_recon, truth, dataset.vocab),
        "true_prob_transfer": mean_true_class_probability(probs_transfer, truth, dataset.vocab),
        "baseline": None,
    }
    if baseline is not None:
        pred_base = baseline.predict_triplets(x)
        row["baseline"] = success_ratio(pred_base, truth)
    report = EvalReport()
    report.add_row(row)
    return report
