"""SGD training of the trigram encoder under the triplet objective.

Each epoch samples triplet batches per mention (re-mining hard negatives at
epoch start for the resampling strategies), shuffles them, and applies plain
SGD updates: table_row -= lr * grad, with the gradient averaged over the
batch and computed against the table as it stood at the start of the batch.
Runs are bitwise reproducible from (config, data).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .corpus import Corpus
from .encoder import DEFAULT_BUCKETS, DEFAULT_DIM, NGramEncoder
from .errors import SkipRecord, TrainingError
from .evaluate import EvalConfig, evaluate_pipeline
from .index import build_index
from .metric import DistanceKind, TripletLossParams
from .sampler import (
    SamplingStrategy,
    mine_resampling,
    sample_random,
    sample_random_plus_parents,
    sample_resampling,
    sample_resampling_plus_siblings,
)
from .terminology import Terminology
from .util import derive_seed


@dataclass(frozen=True)
class TrainConfig:
    strategy: SamplingStrategy = field(default_factory=SamplingStrategy)
    epochs: int = 20
    batch_size: int = 48
    learning_rate: float = 1e-2
    loss: TripletLossParams = field(default_factory=TripletLossParams)
    seed: int = 0
    n_pos: int = 30
    n_neg: int = 5
    dim: int = DEFAULT_DIM
    buckets: int = DEFAULT_BUCKETS

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.n_pos < 1 or self.n_neg < 1:
            raise ValueError("n_pos and n_neg must be >= 1")
        if self.dim < 1 or self.buckets < 1:
            raise ValueError("dim and buckets must be >= 1")

    def to_dict(self) -> dict:
        return {
            "strategy": {
                "kind": self.strategy.kind,
                "k_par": self.strategy.k_par,
                "k_nn": self.strategy.k_nn,
                "k_sib": self.strategy.k_sib,
            },
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "margin": self.loss.margin,
            "distance": self.loss.distance.value,
            "seed": self.seed,
            "n_pos": self.n_pos,
            "n_neg": self.n_neg,
            "dim": self.dim,
            "buckets": self.buckets,
        }


@dataclass
class TrainReport:
    epoch_loss: list[float] = field(default_factory=list)
    active_fraction: list[float] = field(default_factory=list)
    wall_time: list[float] = field(default_factory=list)
    dev_acc1: list[float] | None = None
    used_records: int = 0
    skipped_records: int = 0

    def to_dict(self, config: dict | None = None) -> dict:
        epochs = []
        for i in range(len(self.epoch_loss)):
            entry = {
                "loss": self.epoch_loss[i],
                "active_frac": self.active_fraction[i],
                "wall_time": self.wall_time[i],
            }
            if self.dev_acc1 is not None:
                entry["dev_acc1"] = self.dev_acc1[i]
            epochs.append(entry)
        out = {
            "epochs": epochs,
            "used_records": self.used_records,
            "skipped_records": self.skipped_records,
        }
        if config is not None:
            out["config"] = config
        return out


@dataclass(frozen=True)
class EpochDirectives:
    mine: bool


def epoch_schedule(cfg: TrainConfig, epoch_index: int) -> EpochDirectives:
    """Resampling strategies re-mine at the start of every epoch."""
    if epoch_index < 0:
        raise ValueError("epoch_index must be >= 0")
    return EpochDirectives(mine=cfg.strategy.uses_mining)


def _sample_batch(t, rec, mined_entry, cfg: TrainConfig, seed: int):
    kind = cfg.strategy.kind
    if kind == "random":
        return sample_random(t, rec, cfg.n_pos, cfg.n_neg, seed=seed)
    if kind == "random+parents":
        return sample_random_plus_parents(
            t, rec, cfg.n_pos, cfg.n_neg, k_par=cfg.strategy.k_par, seed=seed
        )
    if kind == "resampling":
        return sample_resampling(t, rec, mined_entry, cfg.n_pos, cfg.n_neg, seed=seed)
    return sample_resampling_plus_siblings(
        t, rec, mined_entry, cfg.n_pos, cfg.n_neg, k_sib=cfg.strategy.k_sib, seed=seed
    )


def train(
    t: Terminology,
    train_corpus: Corpus,
    cfg: TrainConfig,
    dev: Corpus | None = None,
) -> tuple[NGramEncoder, TrainReport]:
    """Run cfg.epochs of triplet SGD; returns the trained encoder and a report.

    Records without any in-terminology gold CUI are skipped with a count;
    a corpus with no usable record at all is an error.
    """
    enc = NGramEncoder.create(dim=cfg.dim, buckets=cfg.buckets, seed=cfg.seed)

    usable = [
        rec
        for rec in train_corpus.records
        if rec.gold_cuis and any(t.has(c) for c in rec.gold_cuis)
    ]
    report = TrainReport(
        used_records=len(usable),
        skipped_records=len(train_corpus.records) - len(usable),
        dev_acc1=[] if dev is not None else None,
    )
    if not usable:
        raise TrainingError("no training record has a gold CUI present in the terminology")
    usable_corpus = Corpus(split="train", records=tuple(usable))

    for epoch in range(cfg.epochs):
        started = time.perf_counter()
        mined = None
        if epoch_schedule(cfg, epoch).mine:
            mined = mine_resampling(
                t, usable_corpus, enc, cfg.loss.distance, k_nn=cfg.strategy.k_nn
            )

        triples = []
        for i, rec in enumerate(usable):
            entry = mined[i] if mined is not None else None
            if cfg.strategy.uses_mining and entry is None:
                continue
            try:
                batch = _sample_batch(t, rec, entry, cfg, derive_seed(cfg.seed, epoch, i))
            except SkipRecord:
                continue
            triples.extend(batch.triples)

        random_state = np.random.default_rng(derive_seed(cfg.seed, "shuffle", epoch))
        order = random_state.permutation(len(triples))
        triples = [triples[j] for j in order]

        loss_sum = 0.0
        active = 0
        for start in range(0, len(triples), cfg.batch_size):
            chunk = triples[start : start + cfg.batch_size]
            loss_sum_b, active_b = _apply_batch(enc, chunk, cfg)
            loss_sum += loss_sum_b
            active += active_b

        mean_loss = loss_sum / len(triples) if triples else 0.0
        if not np.isfinite(mean_loss):
            raise TrainingError(f"non-finite mean loss {mean_loss} at epoch {epoch}")
        report.epoch_loss.append(mean_loss)
        report.active_fraction.append(active / len(triples) if triples else 0.0)
        report.wall_time.append(time.perf_counter() - started)

        if dev is not None:
            report.dev_acc1.append(_dev_accuracy(t, enc, dev, cfg))

    return enc, report


def _apply_batch(enc: NGramEncoder, chunk, cfg: TrainConfig) -> tuple[float, int]:
    """One SGD step over a triplet batch against the table at batch start.

    Distances and gradients for the whole batch are computed as vectorized
    array expressions and folded into one accumulator per unique text before
    chaining into the table; mathematically this equals summing triplet_grad
    through grad_wrt_table triple by triple.
    """
    euclid = cfg.loss.distance == DistanceKind.EUCLIDEAN
    margin = cfg.loss.margin

    text_ids: dict[str, int] = {}
    triple_ids = np.empty((len(chunk), 3), dtype=np.int64)
    for row, triple in enumerate(chunk):
        for col, text in enumerate(
            (triple.mention, triple.positive.surface, triple.negative.surface)
        ):
            tid = text_ids.get(text)
            if tid is None:
                tid = len(text_ids)
                text_ids[text] = tid
            triple_ids[row, col] = tid
    vectors = np.stack([enc.encode(text) for text in text_ids])

    y_m = vectors[triple_ids[:, 0]]
    y_g = vectors[triple_ids[:, 1]]
    y_n = vectors[triple_ids[:, 2]]
    if euclid:
        diff_g = y_m - y_g
        diff_n = y_m - y_n
        d_g = np.sqrt(np.einsum("ij,ij->i", diff_g, diff_g))
        d_n = np.sqrt(np.einsum("ij,ij->i", diff_n, diff_n))
        losses = d_g - d_n + margin
        active = losses > 0.0
        u_g = diff_g / np.maximum(d_g, 1e-12)[:, None]
        u_n = diff_n / np.maximum(d_n, 1e-12)[:, None]
        g_m = u_g - u_n
        g_g = -u_g
        g_n = u_n
    else:
        norm_m = np.sqrt(np.einsum("ij,ij->i", y_m, y_m))
        norm_g = np.sqrt(np.einsum("ij,ij->i", y_g, y_g))
        norm_n = np.sqrt(np.einsum("ij,ij->i", y_n, y_n))
        if not (norm_m > 0).all() or not (norm_g > 0).all() or not (norm_n > 0).all():
            raise ValueError("cosine distance is undefined for zero vectors")
        dot_g = np.einsum("ij,ij->i", y_m, y_g)
        dot_n = np.einsum("ij,ij->i", y_m, y_n)
        d_g = np.clip(1.0 - dot_g / (norm_m * norm_g), 0.0, 2.0)
        d_n = np.clip(1.0 - dot_n / (norm_m * norm_n), 0.0, 2.0)
        losses = d_g - d_n + margin
        active = losses > 0.0
        denom_g = np.maximum(norm_m * norm_g, 1e-12)[:, None]
        denom_n = np.maximum(norm_m * norm_n, 1e-12)[:, None]
        # d(1 - cos)/da = (a * (dot / |a|^2) - b) / (|a| |b|)
        dg_dm = (y_m * (dot_g / (norm_m * norm_m))[:, None] - y_g) / denom_g
        dg_dg = (y_g * (dot_g / (norm_g * norm_g))[:, None] - y_m) / denom_g
        dn_dm = (y_m * (dot_n / (norm_m * norm_m))[:, None] - y_n) / denom_n
        dn_dn = (y_n * (dot_n / (norm_n * norm_n))[:, None] - y_m) / denom_n
        g_m = dg_dm - dn_dm
        g_g = dg_dg
        g_n = -dn_dn

    loss_sum = float(losses[active].sum())
    n_active = int(active.sum())
    if n_active == 0 or cfg.learning_rate == 0.0:
        return loss_sum, n_active

    text_grads = np.zeros_like(vectors)
    np.add.at(text_grads, triple_ids[active, 0], g_m[active])
    np.add.at(text_grads, triple_ids[active, 1], g_g[active])
    np.add.at(text_grads, triple_ids[active, 2], g_n[active])

    idx_parts = []
    row_parts = []
    for text, tid in text_ids.items():
        grad = text_grads[tid]
        if not grad.any():
            continue
        uniq, weights, _ = enc._features(text)
        idx_parts.append(uniq)
        row_parts.append(np.outer(weights, grad))
    if idx_parts:
        indices = np.concatenate(idx_parts)
        rows = np.concatenate(row_parts, axis=0)
        enc.apply_sparse_grads(indices, rows, cfg.learning_rate / len(chunk))
    return loss_sum, n_active


def _dev_accuracy(t: Terminology, enc: NGramEncoder, dev: Corpus, cfg: TrainConfig) -> float:
    ix = build_index(t, enc, cfg.loss.distance)
    report = evaluate_pipeline(t, enc, ix, None, dev, EvalConfig(ks=(1,)))
    return report.accuracy[1]
