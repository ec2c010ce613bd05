"""Classification, domain-prototype, domain-invariance and class-specificity
losses, each with a paired backward pass.

Shapes: features are ``(N, d)`` row matrices, labels are one-hot ``(N, C)``,
domain ids are integer ``(N,)``.  Each ``*_backward`` function returns the
loss value together with the gradient(s) it is responsible for.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .tensor import (
    LOG_EPS,
    DegenerateFeatureError,
    cross_entropy,
    similarity_matrix,
    similarity_matrix_backward,
    softmax,
    softmax_backward,
)

SIM_FLOOR = 1e-8


class NoEligiblePairsWarning(UserWarning):
    pass


def one_hot(labels, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.shape[0], num_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


@dataclass
class LabeledBatch:
    features: np.ndarray
    domain_ids: np.ndarray
    labels: np.ndarray
    per_domain_count: int
    # raw inputs are carried along so the trainer can re-encode them
    inputs: np.ndarray | None = None

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=np.float64))
        self.domain_ids = np.asarray(self.domain_ids, dtype=np.int64)
        self.labels = np.atleast_2d(np.asarray(self.labels, dtype=np.float64))
        n = self.features.shape[0]
        if self.domain_ids.shape != (n,) or self.labels.shape[0] != n:
            raise ValueError("features, domain_ids and labels must have equal length")
        doms, counts = np.unique(self.domain_ids, return_counts=True)
        if np.any(counts != self.per_domain_count):
            raise ValueError(
                f"expected {self.per_domain_count} samples per domain, got {dict(zip(doms.tolist(), counts.tolist()))}"
            )
        if not (np.all((self.labels == 0) | (self.labels == 1)) and np.all(self.labels.sum(axis=1) == 1)):
            raise ValueError("labels must be one-hot")

    @property
    def num_domains(self) -> int:
        return int(np.unique(self.domain_ids).shape[0])

    def __len__(self) -> int:
        return self.features.shape[0]


@dataclass
class LossBreakdown:
    l_c: float
    l_di: float
    l_cs: float
    total: float
    alpha: float
    beta: float
    cs_skipped: bool = False
    di_empty: bool = False
    extra: dict = field(default_factory=dict)


def _proto_array(prototypes) -> np.ndarray:
    return np.atleast_2d(np.asarray(getattr(prototypes, "vectors", prototypes), dtype=np.float64))


# -- L_C ---------------------------------------------------------------------

def loss_classification(predictions, labels) -> float:
    p = np.atleast_2d(np.asarray(predictions, dtype=np.float64))
    y = np.atleast_2d(np.asarray(labels, dtype=np.float64))
    if p.shape[0] == 0:
        raise ValueError("empty batch")
    if p.shape != y.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {y.shape}")
    return float(np.mean([cross_entropy(y[i], p[i]) for i in range(p.shape[0])]))


def loss_classification_backward(predictions, labels):
    """Value and dL/dpredictions.  Clamped entries get zero gradient."""
    p = np.atleast_2d(np.asarray(predictions, dtype=np.float64))
    y = np.atleast_2d(np.asarray(labels, dtype=np.float64))
    n = p.shape[0]
    value = loss_classification(p, y)
    live = p >= LOG_EPS
    grad = np.where(live, -y / np.where(live, p, 1.0), 0.0) / n
    return value, grad


def loss_classification_from_logits(logits, labels):
    """L_C for ``softmax(logits)`` and its gradient w.r.t. the logits.

    Uses the fused form ``(p - y) / N``, which ignores the log clamp; the two
    only differ once a true-class probability drops below 1e-12.
    """
    p = softmax(logits, axis=1)
    y = np.atleast_2d(np.asarray(labels, dtype=np.float64))
    return loss_classification(p, y), (p - y) / p.shape[0]


# -- L_D ---------------------------------------------------------------------

def _domain_index(prototypes: np.ndarray, domain_ids: np.ndarray) -> None:
    if domain_ids.size and (domain_ids.min() < 0 or domain_ids.max() >= prototypes.shape[0]):
        missing = sorted(set(domain_ids.tolist()) - set(range(prototypes.shape[0])))
        raise KeyError(f"missing prototype for domain id(s) {missing}")


def loss_domain_backward(prototypes, batch: LabeledBatch, temperature: float):
    """Value of L_D and its gradient w.r.t. the prototype matrix."""
    P = _proto_array(prototypes)
    F = batch.features
    dom = batch.domain_ids
    _domain_index(P, dom)
    if P.shape[1] != F.shape[1]:
        raise ValueError(f"dimension mismatch: prototypes {P.shape[1]} vs features {F.shape[1]}")
    present = np.unique(dom)
    # only prototypes of domains in the batch are touched
    Pb = P[present]
    col = np.searchsorted(present, dom)
    S = similarity_matrix(F, Pb, temperature)
    rows = np.arange(F.shape[0])
    s = S[rows, col]
    counts = np.bincount(dom, minlength=P.shape[0]).astype(np.float64)
    w = 1.0 / (present.shape[0] * counts[dom])
    value = float(-np.sum(w * np.log(np.maximum(s, SIM_FLOOR))))
    gS = np.zeros_like(S)
    gS[rows, col] = np.where(s > SIM_FLOOR, -w / np.where(s > SIM_FLOOR, s, 1.0), 0.0)
    _, gPb = similarity_matrix_backward(F, Pb, temperature, gS)
    gP = np.zeros_like(P)
    gP[present] = gPb
    return value, gP


def loss_domain(prototypes, batch: LabeledBatch, temperature: float) -> float:
    return loss_domain_backward(prototypes, batch, temperature)[0]


def remove_domain_features(batch: LabeledBatch, prototypes) -> np.ndarray:
    P = _proto_array(prototypes)
    if P.shape[1] != batch.features.shape[1]:
        raise ValueError(f"dimension mismatch: prototypes {P.shape[1]} vs features {batch.features.shape[1]}")
    _domain_index(P, batch.domain_ids)
    return batch.features - P[batch.domain_ids]


# -- L_DI --------------------------------------------------------------------

def cross_domain_pair_weights(labels, domain_ids) -> tuple[np.ndarray, int]:
    """Upper-triangular weight matrix for same-class, cross-domain pairs.

    Entry (i, j), i < j, is ``1 / (C' * P_c)`` where ``P_c`` is the number of
    eligible pairs of class c and ``C'`` the number of classes with any.
    """
    y = np.atleast_2d(np.asarray(labels)).argmax(axis=1)
    dom = np.asarray(domain_ids)
    n = y.shape[0]
    eligible = (y[:, None] == y[None, :]) & (dom[:, None] != dom[None, :])
    eligible &= np.triu(np.ones((n, n), dtype=bool), k=1)
    W = np.zeros((n, n))
    classes = [c for c in np.unique(y) if eligible[y == c].any()]
    for c in classes:
        rows = (y == c)[:, None]
        mask = eligible & rows
        W[mask] = 1.0 / mask.sum()
    if classes:
        W /= len(classes)
    return W, len(classes)


def loss_domain_invariance_backward(class_features, labels, domain_ids, temperature: float):
    """Returns (value, dL/dclass_features, number of contributing classes)."""
    Z = np.atleast_2d(np.asarray(class_features, dtype=np.float64))
    if Z.shape[0] < 2:
        raise ValueError("need at least two samples")
    W, n_classes = cross_domain_pair_weights(labels, domain_ids)
    if n_classes == 0:
        return 0.0, np.zeros_like(Z), 0
    idx = np.nonzero(W)
    # only rows taking part in a pair need normalizing
    S = similarity_matrix(Z, Z, temperature)
    s = S[idx]
    w = W[idx]
    value = float(-np.sum(w * np.log(np.maximum(s, SIM_FLOOR))))
    gS = np.zeros_like(S)
    gS[idx] = np.where(s > SIM_FLOOR, -w / np.where(s > SIM_FLOOR, s, 1.0), 0.0)
    ga, gb = similarity_matrix_backward(Z, Z, temperature, gS)
    return value, ga + gb, n_classes


def loss_domain_invariance(class_features, labels, domain_ids, temperature: float) -> float:
    value, _, n_classes = loss_domain_invariance_backward(class_features, labels, domain_ids, temperature)
    if n_classes == 0:
        warnings.warn("no same-class cross-domain pair in batch", NoEligiblePairsWarning, stacklevel=2)
    return value


# -- L_CS --------------------------------------------------------------------

def soft_labels(class_features, queue_features, queue_labels, temperature: float) -> np.ndarray:
    S = similarity_matrix(class_features, queue_features, temperature)
    return _soft_labels(S, np.asarray(queue_labels, dtype=np.float64))


def _soft_labels(S, ql):
    # same value as softmax(S) @ ql; normalizing the class masses themselves
    # makes a queue holding one class give a label of exactly 1
    mass = np.exp(S - S.max(axis=1, keepdims=True)) @ ql
    return mass / mass.sum(axis=1, keepdims=True)


def _queue_arrays(queue):
    if isinstance(queue, tuple):
        qf, ql = queue
    else:
        qf, ql = queue.snapshot()
    qf = np.asarray(qf, dtype=np.float64)
    ql = np.asarray(ql, dtype=np.float64)
    if qf.shape[0] == 0:
        raise ValueError("queue not warmed up")
    return np.atleast_2d(qf), np.atleast_2d(ql)


def loss_class_specificity_backward(class_features, labels, queue, temperature: float):
    """Value of L_CS and its gradient w.r.t. the class features.

    ``queue`` is an :class:`InvariantMemoryQueue` or a ``(features, labels)``
    snapshot; its entries are constants.
    """
    Z = np.atleast_2d(np.asarray(class_features, dtype=np.float64))
    y = np.atleast_2d(np.asarray(labels, dtype=np.float64))
    qf, ql = _queue_arrays(queue)
    n = Z.shape[0]
    S = similarity_matrix(Z, qf, temperature)
    Wt = softmax(S, axis=1)
    yhat = _soft_labels(S, ql)
    value = float(-np.sum(y * np.log(np.clip(yhat, LOG_EPS, 1.0))) / n)
    live = yhat >= LOG_EPS
    g_yhat = np.where(live, -y / np.where(live, yhat, 1.0), 0.0) / n
    gS = softmax_backward(Wt, g_yhat @ ql.T, axis=1)
    gZ, _ = similarity_matrix_backward(Z, qf, temperature, gS)
    return value, gZ


def loss_class_specificity(class_features, labels, queue, temperature: float) -> float:
    return loss_class_specificity_backward(class_features, labels, queue, temperature)[0]


# -- total -------------------------------------------------------------------

def loss_total(l_c: float, l_di: float, l_cs: float, alpha: float, beta: float) -> LossBreakdown:
    if alpha < 0 or beta < 0:
        raise ValueError("alpha and beta must be non-negative")
    return LossBreakdown(l_c, l_di, l_cs, l_c + alpha * l_di + beta * l_cs, alpha, beta)


def check_nondegenerate(class_features) -> None:
    norms = np.linalg.norm(np.atleast_2d(class_features), axis=1)
    if np.any(norms < 1e-12):
        raise DegenerateFeatureError("degenerate feature: class-related feature collapsed to zero")
