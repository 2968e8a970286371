"""Feature encoder: an MLP mapping raw features to node embeddings."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, ShapeError, add, as_tensor, matmul, relu


@dataclass
class Encoder:
    """Chain of linear layers with relu between them (none on the output)."""

    weights: list[Tensor]
    biases: list[Tensor]

    def __post_init__(self):
        for w, b in zip(self.weights, self.biases):
            if w.ndim != 2 or b.ndim != 1 or w.shape[1] != b.shape[0]:
                raise ShapeError(f"layer weight {w.shape} and bias {b.shape} disagree")
        for prev, nxt in zip(self.weights, self.weights[1:]):
            if prev.shape[1] != nxt.shape[0]:
                raise ShapeError(f"layer widths break the chain: {prev.shape} -> {nxt.shape}")

    @property
    def widths(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[1]

    def parameters(self) -> list[Tensor]:
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend([w, b])
        return params


def uniform_fan_in(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    """Zero-mean uniform weights with scale sqrt(6 / fan_in)."""
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_encoder(widths: list[int], seed: int) -> Encoder:
    """Fan-in scaled uniform weights, zero biases, deterministic under seed."""
    if len(widths) < 2 or any(w < 1 for w in widths):
        raise ValueError(f"widths must be >= 2 positive entries, got {widths}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(widths, widths[1:]):
        weights.append(Tensor(uniform_fan_in(rng, fan_in, fan_out), requires_grad=True))
        biases.append(Tensor(np.zeros(fan_out), requires_grad=True))
    return Encoder(weights=weights, biases=biases)


def encode(encoder: Encoder, features) -> Tensor:
    """Embed an (n, D) feature block into (n, C), differentiably."""
    x = as_tensor(features)
    if x.ndim != 2 or x.shape[1] != encoder.input_dim:
        raise ShapeError(
            f"features of shape {x.shape} do not match encoder input width "
            f"{encoder.input_dim}")
    last = len(encoder.weights) - 1
    for i, (w, b) in enumerate(zip(encoder.weights, encoder.biases)):
        x = add(matmul(x, w), b)
        if i != last:
            x = relu(x)
    return x
