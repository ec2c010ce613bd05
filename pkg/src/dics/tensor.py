"""Numeric substrate: normalization, the scaled-cosine similarity kernel,
softmax, cross-entropy and a central-difference gradient checker.

Everything here works on float64 numpy arrays.  Batched variants operate on
row-stacked matrices (one feature per row) and come with explicit backward
functions; there is no autodiff.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

NORM_EPS = 1e-12
LOG_EPS = 1e-12


class DegenerateFeatureError(ValueError):
    """Raised when a feature vector has (numerically) zero norm."""


def _as_float(v) -> np.ndarray:
    return np.asarray(v, dtype=np.float64)


def l2_normalize(v) -> np.ndarray:
    """Scale ``v`` (1-D, or 2-D row-wise) to unit Euclidean norm."""
    v = _as_float(v)
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite feature")
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(norms < NORM_EPS):
        raise DegenerateFeatureError("degenerate feature")
    return v / norms


def l2_normalize_backward(v, grad_out) -> np.ndarray:
    """Gradient of a scalar through ``l2_normalize`` (row-wise)."""
    v = _as_float(v)
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    u = v / norms
    g = _as_float(grad_out)
    return (g - u * np.sum(u * g, axis=-1, keepdims=True)) / norms


def _scale(dim: int, temperature: float) -> float:
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    return 1.0 / (temperature * np.sqrt(dim))


def similarity(a, b, temperature: float) -> float:
    a = _as_float(a)
    b = _as_float(b)
    if a.ndim != 1 or a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(l2_normalize(a) @ l2_normalize(b) * _scale(a.shape[0], temperature))


def similarity_matrix(A, B, temperature: float) -> np.ndarray:
    """Pairwise similarity between rows of ``A`` (n, d) and rows of ``B`` (m, d)."""
    A = np.atleast_2d(_as_float(A))
    B = np.atleast_2d(_as_float(B))
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    return (l2_normalize(A) @ l2_normalize(B).T) * _scale(A.shape[1], temperature)


def similarity_matrix_backward(A, B, temperature: float, grad_s):
    """Return (dL/dA, dL/dB) given dL/dS for ``S = similarity_matrix(A, B)``."""
    A = np.atleast_2d(_as_float(A))
    B = np.atleast_2d(_as_float(B))
    k = _scale(A.shape[1], temperature)
    grad_s = _as_float(grad_s) * k
    ua = l2_normalize(A)
    ub = l2_normalize(B)
    ga = l2_normalize_backward(A, grad_s @ ub)
    gb = l2_normalize_backward(B, grad_s.T @ ua)
    return ga, gb


def softmax(logits, axis: int = -1) -> np.ndarray:
    x = _as_float(logits)
    if x.size == 0 or x.shape[axis] == 0:
        raise ValueError("empty input")
    x = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(x)
    return e / np.sum(e, axis=axis, keepdims=True)


def softmax_backward(probs, grad_out, axis: int = -1) -> np.ndarray:
    p = _as_float(probs)
    g = _as_float(grad_out)
    return p * (g - np.sum(p * g, axis=axis, keepdims=True))


def cross_entropy(true_label, predicted) -> float:
    """-sum(y * log p), with ``p`` clamped to [1e-12, 1]."""
    y = _as_float(true_label)
    p = _as_float(predicted)
    if y.shape != p.shape:
        raise ValueError(f"length mismatch: {y.shape} vs {p.shape}")
    return float(-np.sum(y * np.log(np.clip(p, LOG_EPS, 1.0))))


def check_gradient(
    f: Callable[[np.ndarray], float],
    x,
    analytic_grad,
    h: float = 1e-5,
) -> float:
    """Max relative error between ``analytic_grad`` and central differences of ``f``.

    The per-coordinate error is ``|g_fd - g_an| / max(1, |g_fd|, |g_an|)``.
    """
    x = np.array(x, dtype=np.float64)
    g_an = np.asarray(analytic_grad, dtype=np.float64).reshape(x.shape)
    flat = x.reshape(-1)
    g_fd = np.empty(flat.shape[0])
    for i in range(flat.shape[0]):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f(x))
        flat[i] = orig - h
        fm = float(f(x))
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise ValueError(f"non-finite function value near coordinate {i}")
        g_fd[i] = (fp - fm) / (2.0 * h)
    g_an = g_an.reshape(-1)
    denom = np.maximum(1.0, np.maximum(np.abs(g_fd), np.abs(g_an)))
    return float(np.max(np.abs(g_fd - g_an) / denom)) if flat.size else 0.0
