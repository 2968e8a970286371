"""Relation measures between node embeddings, and the score heads over them.

Two interchangeable measures:

* ``absdiff`` — the pairwise elementwise absolute difference |V_i - V_j|,
  scored by a sigmoid over a learned weighted sum. Depends only on the two
  nodes involved.
* ``tasklevel`` — attention-scaled embeddings a_ij * V_j, where a is the row
  softmax of all pairwise scaled dot products in the graph, scored by a small
  MLP. Because each a_ij is normalized over every node in the task, the
  relation of a pair shifts when any other node in the task moves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embedding import uniform_fan_in
from .tensor import (Tensor, add, abs_, matmul, relu, reshape, scale_rows,
                     sigmoid, softmax_rows, sub, transpose)

ABS_DIFF = "absdiff"
TASK_LEVEL = "tasklevel"
RELATION_KINDS = (ABS_DIFF, TASK_LEVEL)


@dataclass
class RelationTensor:
    """(n, n, C) pairwise relation features of a stated kind."""

    values: Tensor
    kind: str


def abs_diff_relation(v: Tensor) -> RelationTensor:
    """values[i, j, :] = |V_i - V_j|; symmetric with a zero diagonal."""
    n, c = v.shape
    vi = reshape(v, (n, 1, c))
    vj = reshape(v, (1, n, c))
    return RelationTensor(values=abs_(sub(vi, vj)), kind=ABS_DIFF)


def matching_degree(v: Tensor) -> Tensor:
    """Scaled dot products e_ij = dot(V_i, V_j) / sqrt(C)."""
    c = v.shape[1]
    return matmul(v, transpose(v)) * (1.0 / np.sqrt(c))


def attention(v: Tensor) -> Tensor:
    """Row-stochastic attention: softmax over each node's matching degrees.

    The normalization runs over every node in the graph (self included), so
    each row is a distribution over the whole task.
    """
    return softmax_rows(matching_degree(v))


def task_level_relation(v: Tensor) -> RelationTensor:
    """values[i, j, :] = a_ij * V_j with a = attention(v)."""
    return RelationTensor(values=scale_rows(attention(v), v), kind=TASK_LEVEL)


@dataclass
class AbsDiffScoreHead:
    """sigmoid(sum_k w_k * r_k + b) applied to each pair's relation vector."""

    weight: Tensor  # (C, 1)
    bias: Tensor    # (1,)
    kind: str = ABS_DIFF

    def parameters(self) -> list[Tensor]:
        return [self.weight, self.bias]

    def apply(self, values: Tensor) -> Tensor:
        n = values.shape[0]
        c = values.shape[2]
        flat = reshape(values, (n * n, c))
        z = add(matmul(flat, self.weight), self.bias)
        return reshape(sigmoid(z), (n, n))


@dataclass
class MlpScoreHead:
    """Two-layer MLP (relu hidden, sigmoid output) over each pair's relation."""

    w1: Tensor  # (C, h)
    b1: Tensor  # (h,)
    w2: Tensor  # (h, 1)
    b2: Tensor  # (1,)
    kind: str = TASK_LEVEL

    def parameters(self) -> list[Tensor]:
        return [self.w1, self.b1, self.w2, self.b2]

    def apply(self, values: Tensor) -> Tensor:
        n = values.shape[0]
        c = values.shape[2]
        flat = reshape(values, (n * n, c))
        hidden = relu(add(matmul(flat, self.w1), self.b1))
        z = add(matmul(hidden, self.w2), self.b2)
        return reshape(sigmoid(z), (n, n))


def init_abs_diff_head(embedding_dim: int, seed: int) -> AbsDiffScoreHead:
    rng = np.random.default_rng(seed)
    return AbsDiffScoreHead(
        weight=Tensor(uniform_fan_in(rng, embedding_dim, 1), requires_grad=True),
        bias=Tensor(np.zeros(1), requires_grad=True),
    )


def init_mlp_head(embedding_dim: int, hidden: int, seed: int) -> MlpScoreHead:
    # Hidden bias starts slightly positive so units stay active for the
    # near-zero relation vectors attention typically produces early on.
    rng = np.random.default_rng(seed)
    return MlpScoreHead(
        w1=Tensor(uniform_fan_in(rng, embedding_dim, hidden), requires_grad=True),
        b1=Tensor(np.full(hidden, 0.1), requires_grad=True),
        w2=Tensor(uniform_fan_in(rng, hidden, 1), requires_grad=True),
        b2=Tensor(np.zeros(1), requires_grad=True),
    )


def score(relation: RelationTensor, head) -> Tensor:
    """Per-pair similarity scores in (0, 1); head and relation kinds must match."""
    if head.kind != relation.kind:
        raise ValueError(
            f"score head kind {head.kind!r} does not match relation kind {relation.kind!r}")
    return head.apply(relation.values)
