"""Confidence-thresholded self-training with per-class subset ratios.

Each iteration pseudo-labels the remaining unlabeled pool, keeps the
``ceil(mu[p] * n_p)`` most confident items predicted as class ``p``, adds
them to the label set and retrains. Only ``UnlabeledSet.features`` is read.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import ClientDataset, LabeledSet
from .errors import ContractError
from .nn_core import ModelParams, TrainConfig, predict_proba, train_local
from .seeding import derive_seed


@dataclass(frozen=True)
class SelfTrainConfig:
    tau: float = 0.90
    max_iters: int = 3
    consume_selected: bool = True
    # tests use tau > 1 to switch pseudo-labeling off entirely
    allow_unreachable_tau: bool = False

    def __post_init__(self):
        if not self.tau > 0:
            raise ContractError(f"tau must be > 0, got {self.tau}")
        if self.tau > 1 and not self.allow_unreachable_tau:
            raise ContractError(f"tau must be <= 1, got {self.tau}")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ContractError(f"max_iters must be a positive integer, got {self.max_iters}")


@dataclass(frozen=True, eq=False)
class PseudoLabeledSet:
    features: np.ndarray
    labels: np.ndarray
    confidence: np.ndarray
    source_index: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)

    def class_counts(self, num_classes: int) -> np.ndarray:
        return np.bincount(self.labels, minlength=num_classes)

    def take(self, idx) -> "PseudoLabeledSet":
        idx = np.asarray(idx, dtype=np.int64)
        return PseudoLabeledSet(self.features[idx], self.labels[idx],
                                self.confidence[idx], self.source_index[idx])


def pseudo_label(model: ModelParams, features, tau: float,
                 source_index=None) -> PseudoLabeledSet:
    """Items whose top softmax probability reaches ``tau``, labeled by argmax."""
    X = np.asarray(features, dtype=np.float64).reshape(-1, model.input_dim)
    src = np.arange(len(X)) if source_index is None else np.asarray(source_index, dtype=np.int64)
    if len(X) == 0:
        return PseudoLabeledSet(X, np.zeros(0, np.int64), np.zeros(0), src[:0])
    P = predict_proba(model, X)
    conf = P.max(axis=1)
    keep = np.flatnonzero(conf >= tau)
    return PseudoLabeledSet(X[keep], P[keep].argmax(axis=1), conf[keep], src[keep])


def select_subset(pseudo: PseudoLabeledSet, mu) -> PseudoLabeledSet:
    """Per class, keep the top ``ceil(mu[p] * n_p)`` items by confidence.

    Ties go to the smaller source index. The result is ordered by source
    index.
    """
    mu = np.asarray(mu, dtype=np.float64)
    if np.any(mu <= 0) or np.any(mu > 1 + 1e-9):
        raise ContractError(f"mu entries must lie in (0, 1], got {mu}")
    kept = []
    for p in range(len(mu)):
        idx = np.flatnonzero(pseudo.labels == p)
        if len(idx) == 0:
            continue
        n_keep = min(len(idx), math.ceil(mu[p] * len(idx) - 1e-9))
        order = np.lexsort((pseudo.source_index[idx], -pseudo.confidence[idx]))
        kept.append(idx[order[:n_keep]])
    if not kept:
        return pseudo.take([])
    sel = np.concatenate(kept)
    return pseudo.take(sel[np.argsort(pseudo.source_index[sel], kind="stable")])


def expand_label_set(labeled: LabeledSet, subset: PseudoLabeledSet) -> LabeledSet:
    if len(subset) == 0:
        return labeled
    if subset.features.shape[1] != labeled.dim:
        raise ContractError(
            f"feature dimension {subset.features.shape[1]} != labeled dimension {labeled.dim}")
    return LabeledSet(np.vstack([labeled.features, subset.features]),
                      np.concatenate([labeled.labels, subset.labels]),
                      labeled.num_classes)


@dataclass
class SelfTrainDiagnostics:
    pseudo_counts: list = field(default_factory=list)
    kept_counts: list = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.kept_counts)

    def to_json(self) -> dict:
        return {"pseudo": self.pseudo_counts, "kept": self.kept_counts}


def self_train(model: ModelParams, client: ClientDataset, mu, stc: SelfTrainConfig,
               tc: TrainConfig) -> tuple[ModelParams, SelfTrainDiagnostics]:
    """Train on labeled data, then grow the label set from the unlabeled pool.

    The first pass is exactly ``train_local(model, client.labeled, tc)``; when the
    client has no labeled data it is skipped and the incoming model does the
    first round of pseudo-labeling. Stops after ``stc.max_iters`` rounds of
    expansion, or earlier once nothing passes the threshold or the pool is
    used up.
    """
    L = model.num_classes
    mu = np.asarray(mu, dtype=np.float64)
    if mu.shape != (L,):
        raise ContractError(f"mu must have {L} entries, got {mu.shape}")
    diag = SelfTrainDiagnostics()
    labeled = client.labeled
    if len(labeled):
        model = train_local(model, labeled, tc)
    pool_X = client.unlabeled.features
    pool_src = np.arange(len(pool_X))
    current = labeled
    for it in range(stc.max_iters):
        if len(pool_src) == 0:
            break
        pseudo = pseudo_label(model, pool_X[pool_src], stc.tau, source_index=pool_src)
        if len(pseudo) == 0:
            break
        subset = select_subset(pseudo, mu)
        diag.pseudo_counts.append(pseudo.class_counts(L).tolist())
        diag.kept_counts.append(subset.class_counts(L).tolist())
        if stc.consume_selected:
            current = expand_label_set(current, subset)
            pool_src = np.setdiff1d(pool_src, subset.source_index, assume_unique=True)
        else:
            current = expand_label_set(labeled, subset)
        model = train_local(model, current, replace(tc, rng_seed=derive_seed(tc.rng_seed, "self-train", it)))
    return model, diag
