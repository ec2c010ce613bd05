"""Finite-difference checks of every hand-written loss gradient.

Each check draws random instances (feature dim <= 16, batch <= 12, queue <= 32)
and compares the analytic gradient against 64-bit central differences.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .losses import (
    LabeledBatch,
    loss_class_specificity,
    loss_class_specificity_backward,
    loss_classification_from_logits,
    loss_domain,
    loss_domain_backward,
    loss_domain_invariance,
    loss_domain_invariance_backward,
    one_hot,
)
from .model import ClassifierParams, EncoderParams, init_classifier, init_encoder
from .tensor import check_gradient

TOLERANCE = 1e-4


@dataclass
class GradCheckResult:
    name: str
    instances: int
    max_error: float

    @property
    def passed(self) -> bool:
        return self.max_error < TOLERANCE


def _instance(rng, max_dim=16, max_n=12, max_queue=32):
    D = int(rng.integers(2, 4))
    n_d = int(rng.integers(1, max_n // D + 1))
    C = int(rng.integers(2, 4))
    d = int(rng.integers(2, max_dim + 1))
    N = D * n_d
    dom = np.repeat(np.arange(D), n_d)
    labels = rng.integers(0, C, size=N)
    # make sure at least one class spans two domains
    labels[0], labels[n_d] = 0, 0
    y = one_hot(labels, C)
    m = int(rng.integers(1, max_queue + 1))
    queue = (rng.normal(size=(m, d)), one_hot(rng.integers(0, C, size=m), C))
    return rng.normal(size=(N, d)), dom, y, n_d, D, C, queue


def check_classification(rng) -> float:
    Z, _, y, *_ = _instance(rng)
    W = rng.normal(size=(y.shape[1], Z.shape[1]))
    f = lambda z: loss_classification_from_logits(z @ W.T, y)[0]  # noqa: E731
    _, g_logits = loss_classification_from_logits(Z @ W.T, y)
    return check_gradient(f, Z, g_logits @ W)


def check_domain(rng) -> float:
    Z, dom, y, n_d, D, _, _ = _instance(rng)
    b = LabeledBatch(Z, dom, y, n_d)
    P = np.stack([Z[dom == k].mean(0) for k in range(D)]) + rng.normal(size=(D, Z.shape[1]))
    _, g = loss_domain_backward(P, b, 0.07)
    return check_gradient(lambda p: loss_domain(p, b, 0.07), P, g)


def check_domain_invariance(rng) -> float:
    Z, dom, y, *_ = _instance(rng)
    _, g, _ = loss_domain_invariance_backward(Z, y, dom, 0.07)
    return check_gradient(lambda z: loss_domain_invariance(z, y, dom, 0.07), Z, g)


def check_class_specificity(rng) -> float:
    Z, _, y, *_, queue = _instance(rng)
    _, g = loss_class_specificity_backward(Z, y, queue, 0.07)
    return check_gradient(lambda z: loss_class_specificity(z, y, queue, 0.07), Z, g)


def _flat(enc: EncoderParams, clf: ClassifierParams) -> np.ndarray:
    return np.concatenate([a.ravel() for a in (*enc.arrays(), clf.weight, clf.bias)])


def _unflat(enc: EncoderParams, clf: ClassifierParams, v: np.ndarray):
    out, k = [], 0
    for a in (*enc.arrays(), clf.weight, clf.bias):
        out.append(v[k:k + a.size].reshape(a.shape))
        k += a.size
    n = len(enc.weights)
    return EncoderParams(out[:n], out[n:2 * n], enc.activation), ClassifierParams(out[-2], out[-1])


def check_total(rng) -> float:
    """Full objective with respect to every encoder and classifier parameter."""
    from .train import objective_and_grads

    Z, dom, y, n_d, D, C, queue = _instance(rng)
    d = Z.shape[1]
    x = rng.normal(size=(Z.shape[0], 5))
    enc = init_encoder(rng, 5, [7], d, "tanh")
    clf = init_classifier(rng, d, C)
    P = 0.3 * rng.normal(size=(D, d))
    alpha, beta = rng.uniform(0.1, 1.5, size=2)

    def f(v):
        e, c = _unflat(enc, clf, v)
        return objective_and_grads(e, c, P, x, y, dom, queue, alpha, beta, 0.07)[0].total

    _, g_enc, g_clf = objective_and_grads(enc, clf, P, x, y, dom, queue, alpha, beta, 0.07)
    return check_gradient(f, _flat(enc, clf), _flat(g_enc, g_clf))


CHECKS = {
    "L_C": check_classification,
    "L_D": check_domain,
    "L_DI": check_domain_invariance,
    "L_CS": check_class_specificity,
    "L_DICS": check_total,
}


def run_suite(instances: int = 20, seed: int = 0, names=None) -> list[GradCheckResult]:
    out = []
    for name in names or CHECKS:
        rng = np.random.default_rng([seed, list(CHECKS).index(name)])
        errs = [CHECKS[name](rng) for _ in range(instances)]
        out.append(GradCheckResult(name, instances, float(max(errs))))
    return out
