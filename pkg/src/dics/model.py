"""Dense encoder, linear classifier head, domain prototypes and the EMA update."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .losses import LabeledBatch, loss_domain_backward
from .tensor import softmax, softmax_backward

ACTIVATIONS = {
    "tanh": (np.tanh, lambda out: 1.0 - out * out),
    "relu": (lambda x: np.maximum(x, 0.0), lambda out: (out > 0).astype(np.float64)),
    "identity": (lambda x: x, lambda out: np.ones_like(out)),
}


@dataclass
class EncoderParams:
    """Stack of dense layers; ``weights[k]`` has shape (out, in).

    The activation is applied after every layer, the last one included.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "tanh"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias per weight matrix and at least one layer")
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            if b.shape != (W.shape[0],):
                raise ValueError(f"layer {k}: bias shape {b.shape} does not match weight {W.shape}")
            if k and W.shape[1] != self.weights[k - 1].shape[0]:
                raise ValueError(f"layer {k}: input size does not match previous layer")

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def feature_dim(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def architecture(self) -> tuple:
        return (self.activation, tuple(W.shape for W in self.weights))

    def arrays(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    def copy(self) -> "EncoderParams":
        return EncoderParams([W.copy() for W in self.weights], [b.copy() for b in self.biases], self.activation)


@dataclass
class ClassifierParams:
    weight: np.ndarray  # (num_classes, d)
    bias: np.ndarray  # (num_classes,)

    @property
    def num_classes(self) -> int:
        return self.weight.shape[0]

    def copy(self) -> "ClassifierParams":
        return ClassifierParams(self.weight.copy(), self.bias.copy())


@dataclass
class DomainPrototypeSet:
    vectors: np.ndarray  # (num_domains, d)
    lr: float = 0.1
    initialized: bool = field(default=True)

    def copy(self) -> "DomainPrototypeSet":
        return DomainPrototypeSet(self.vectors.copy(), self.lr, self.initialized)


def init_encoder(rng: np.random.Generator, input_dim: int, hidden_dims, feature_dim: int,
                 activation: str = "tanh") -> EncoderParams:
    sizes = [input_dim, *hidden_dims, feature_dim]
    weights = [rng.normal(0.0, 1.0 / np.sqrt(n_in), size=(n_out, n_in)) for n_in, n_out in zip(sizes[:-1], sizes[1:])]
    biases = [np.zeros(n_out) for n_out in sizes[1:]]
    return EncoderParams(weights, biases, activation)


def init_classifier(rng: np.random.Generator, feature_dim: int, num_classes: int) -> ClassifierParams:
    return ClassifierParams(rng.normal(0.0, 1.0 / np.sqrt(feature_dim), size=(num_classes, feature_dim)),
                            np.zeros(num_classes))


def encode_forward(params: EncoderParams, inputs):
    """Batched forward pass.  Returns (features, cache) where cache holds each layer's input and output."""
    x = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    if x.shape[1] != params.input_dim:
        raise ValueError(f"dimension mismatch: input {x.shape[1]} vs encoder {params.input_dim}")
    act, _ = ACTIVATIONS[params.activation]
    cache = []
    h = x
    for W, b in zip(params.weights, params.biases):
        out = act(h @ W.T + b)
        cache.append((h, out))
        h = out
    return h, cache


def encode_backward(params: EncoderParams, cache, grad_out) -> EncoderParams:
    """Gradient of a scalar w.r.t. every encoder parameter, packed as EncoderParams."""
    _, dact = ACTIVATIONS[params.activation]
    g = np.asarray(grad_out, dtype=np.float64)
    gW = [None] * len(params.weights)
    gb = [None] * len(params.weights)
    for k in range(len(params.weights) - 1, -1, -1):
        h_in, out = cache[k]
        g = g * dact(out)
        gW[k] = g.T @ h_in
        gb[k] = g.sum(axis=0)
        if k:
            g = g @ params.weights[k]
    return EncoderParams(gW, gb, params.activation)


def encode_input_backward(params: EncoderParams, cache, grad_out) -> np.ndarray:
    _, dact = ACTIVATIONS[params.activation]
    g = np.asarray(grad_out, dtype=np.float64)
    for k in range(len(params.weights) - 1, -1, -1):
        g = (g * dact(cache[k][1])) @ params.weights[k]
    return g


def encode(params: EncoderParams, input) -> np.ndarray:
    x = np.asarray(input, dtype=np.float64)
    z, _ = encode_forward(params, x)
    return z[0] if x.ndim == 1 else z


def classifier_logits(params: ClassifierParams, z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != params.weight.shape[1]:
        raise ValueError(f"dimension mismatch: feature {z.shape[-1]} vs classifier {params.weight.shape[1]}")
    return z @ params.weight.T + params.bias


def classify(params: ClassifierParams, z) -> np.ndarray:
    return softmax(classifier_logits(params, z), axis=-1)


def classifier_backward(params: ClassifierParams, z, grad_logits):
    """Returns (ClassifierParams of gradients, dL/dz) for batched ``z``."""
    z = np.atleast_2d(z)
    g = np.atleast_2d(grad_logits)
    return ClassifierParams(g.T @ z, g.sum(axis=0)), g @ params.weight


def classify_backward(params: ClassifierParams, z, grad_probs):
    """Backward through ``classify`` given dL/dprobabilities."""
    p = classify(params, np.atleast_2d(z))
    return classifier_backward(params, z, softmax_backward(p, grad_probs, axis=-1))


def init_prototypes_from_batch(batch: LabeledBatch, num_domains: int, lr: float = 0.1) -> DomainPrototypeSet:
    """Per-domain mean of the batch features; domains absent from the batch start at zero."""
    vecs = np.zeros((num_domains, batch.features.shape[1]))
    for d in np.unique(batch.domain_ids):
        vecs[d] = batch.features[batch.domain_ids == d].mean(axis=0)
    return DomainPrototypeSet(vecs, lr)


def prototype_step(protos: DomainPrototypeSet, batch: LabeledBatch, temperature: float, steps: int = 1) -> DomainPrototypeSet:
    """``steps`` plain gradient-descent updates of the prototypes on L_D.

    Batch features are constants here; nothing else is touched.
    """
    if steps < 0:
        raise ValueError("steps must be non-negative")
    out = protos.copy()
    for _ in range(steps):
        _, g = loss_domain_backward(out.vectors, batch, temperature)
        out.vectors = out.vectors - out.lr * g
    return out


def ema_update(momentum_params: EncoderParams, online_params: EncoderParams, lam: float) -> EncoderParams:
    """theta_m <- lam * theta_m + (1 - lam) * theta_online, elementwise."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    if momentum_params.architecture != online_params.architecture:
        raise ValueError("architecture mismatch between momentum and online encoders")
    mix = lambda m, o: lam * m + (1.0 - lam) * o  # noqa: E731
    return EncoderParams(
        [mix(m, o) for m, o in zip(momentum_params.weights, online_params.weights)],
        [mix(m, o) for m, o in zip(momentum_params.biases, online_params.biases)],
        momentum_params.activation,
    )
