"""The layered graph classifier: edge init, node aggregation, per-layer scoring.

Each layer aggregates node features weighted by the previous layer's
similarity matrix, transforms them, builds a relation tensor (either measure,
chosen per layer), and scores every pair. Query class probabilities come from
the last layer's scores against the label-visible support nodes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embedding import Encoder, encode, init_encoder, uniform_fan_in
from .episode import Episode, GraphLayout, episode_graphs, sample_episode
from .relation import (ABS_DIFF, RELATION_KINDS, AbsDiffScoreHead,
                       MlpScoreHead, abs_diff_relation, init_abs_diff_head,
                       init_mlp_head, score, task_level_relation)
from .tensor import ShapeError, Tensor, add, div, matmul, relu, sum_

# Layer-0 similarity values derived from visible labels.
EDGE_SAME = 1.0
EDGE_DIFFERENT = 0.01   # strictly inside (0, 1) so scores stay in the open interval
EDGE_UNKNOWN = 0.5


@dataclass
class GnnLayer:
    """One graph layer: node transform, relation measure choice, score head."""

    transform_weight: Tensor  # (C, C)
    transform_bias: Tensor    # (C,)
    relation_kind: str
    score_head: AbsDiffScoreHead | MlpScoreHead

    def parameters(self) -> list[Tensor]:
        return [self.transform_weight, self.transform_bias] + self.score_head.parameters()


@dataclass
class Prediction:
    """Per-query class probabilities; rows sum to 1."""

    probabilities: np.ndarray  # (T, N)

    def classes(self) -> np.ndarray:
        """Argmax per row; ties resolve to the lowest class index."""
        return np.argmax(self.probabilities, axis=1)


@dataclass
class ForwardResult:
    """Everything a loss or a report needs from one episode evaluation."""

    episode: Episode
    layouts: list[GraphLayout]
    similarities: list[list[Tensor]]  # [layout][layer] -> (n, n) scores
    query_probs: list[Tensor]         # [layout] -> (queries_in_layout, N)

    def prediction(self) -> Prediction:
        n_query = self.episode.query_features.shape[0]
        n_way = self.layouts[0].n_way
        probs = np.zeros((n_query, n_way))
        for layout, p in zip(self.layouts, self.query_probs):
            probs[layout.query_ids] = p.data
        return Prediction(probabilities=probs)


@dataclass
class GnnModel:
    """Encoder plus a stack of graph layers sharing one embedding width."""

    encoder: Encoder
    layers: list[GnnLayer]

    def __post_init__(self):
        if not self.layers:
            raise ValueError("model needs at least one graph layer")
        c = self.encoder.output_dim
        for layer in self.layers:
            if layer.transform_weight.shape != (c, c):
                raise ShapeError(
                    f"layer transform {layer.transform_weight.shape} does not match "
                    f"embedding width {c}")

    @property
    def embedding_dim(self) -> int:
        return self.encoder.output_dim

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def relation_kinds(self) -> list[str]:
        return [layer.relation_kind for layer in self.layers]

    def parameters(self) -> list[Tensor]:
        params = self.encoder.parameters()
        for layer in self.layers:
            params.extend(layer.parameters())
        return params

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        named = []
        for i, (w, b) in enumerate(zip(self.encoder.weights, self.encoder.biases)):
            named.append((f"encoder.{i}.weight", w))
            named.append((f"encoder.{i}.bias", b))
        for i, layer in enumerate(self.layers):
            named.append((f"layer.{i}.transform.weight", layer.transform_weight))
            named.append((f"layer.{i}.transform.bias", layer.transform_bias))
            head = layer.score_head
            if isinstance(head, AbsDiffScoreHead):
                named.append((f"layer.{i}.head.weight", head.weight))
                named.append((f"layer.{i}.head.bias", head.bias))
            else:
                named.append((f"layer.{i}.head.w1", head.w1))
                named.append((f"layer.{i}.head.b1", head.b1))
                named.append((f"layer.{i}.head.w2", head.w2))
                named.append((f"layer.{i}.head.b2", head.b2))
        return named

    def forward(self, episode: Episode) -> ForwardResult:
        return forward(self, episode)


def init_model(feature_dim: int, embedding_dim: int, hidden_widths: list[int],
               relation_kinds: list[str], score_hidden: int, seed: int) -> GnnModel:
    """Build a model with fan-in uniform weights, deterministic under seed.

    ``relation_kinds`` fixes the measure per layer, which is how single-layer
    substitutions for ablation runs are expressed.
    """
    for kind in relation_kinds:
        if kind not in RELATION_KINDS:
            raise ValueError(f"unknown relation kind {kind!r}; choose from {RELATION_KINDS}")
    widths = [feature_dim] + list(hidden_widths) + [embedding_dim]
    encoder = init_encoder(widths, seed=seed)
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
    layers = []
    for i, kind in enumerate(relation_kinds):
        w = Tensor(uniform_fan_in(rng, embedding_dim, embedding_dim), requires_grad=True)
        b = Tensor(np.zeros(embedding_dim), requires_grad=True)
        head_seed = int(rng.integers(0, 2**31 - 1))
        if kind == ABS_DIFF:
            head = init_abs_diff_head(embedding_dim, seed=head_seed)
        else:
            head = init_mlp_head(embedding_dim, score_hidden, seed=head_seed)
        layers.append(GnnLayer(transform_weight=w, transform_bias=b,
                               relation_kind=kind, score_head=head))
    return GnnModel(encoder=encoder, layers=layers)


def init_edges(layout: GraphLayout) -> np.ndarray:
    """Layer-0 similarity from visible labels.

    1 for same-class pairs of label-visible support nodes, EDGE_DIFFERENT for
    visible pairs of different classes, 0.5 whenever either node's label is
    hidden (queries and masked support alike); the diagonal is 1.
    """
    visible = layout.label_visible
    labels = layout.labels
    n = layout.n_nodes
    s = np.full((n, n), EDGE_UNKNOWN)
    both = np.outer(visible, visible)
    same = labels[:, None] == labels[None, :]
    s[both & same] = EDGE_SAME
    s[both & ~same] = EDGE_DIFFERENT
    np.fill_diagonal(s, 1.0)
    return s


def node_update(v_prev: Tensor, s_prev: Tensor, layer: GnnLayer) -> Tensor:
    """Aggregate all nodes weighted by similarity, then transform.

    V_i = f_v(sum_j s_ij * V_j), the sum running over every node including i.
    """
    if s_prev.ndim != 2 or s_prev.shape[1] != v_prev.shape[0]:
        raise ShapeError(
            f"similarity {s_prev.shape} does not match features {v_prev.shape}")
    aggregated = matmul(s_prev, v_prev)
    return relu(add(matmul(aggregated, layer.transform_weight), layer.transform_bias))


def _class_mean_matrix(layout: GraphLayout) -> np.ndarray:
    """(n, N) matrix averaging rows over label-visible support of each class."""
    n, n_way = layout.n_nodes, layout.n_way
    m = np.zeros((n, n_way))
    usable = layout.label_visible & ~layout.is_query
    for c in range(n_way):
        members = np.flatnonzero(usable & (layout.labels == c))
        if members.size == 0:
            raise ValueError(f"class {c} has no label-visible support node")
        m[members, c] = 1.0 / members.size
    return m


def predict(s_last: Tensor, layout: GraphLayout) -> Tensor:
    """Class probabilities for the layout's queries from final-layer scores.

    Each query's score for a class is its mean similarity to that class's
    visible support nodes; rows are then normalized to sum to 1.
    """
    selector = np.zeros((len(layout.query_ids), layout.n_nodes))
    selector[np.arange(len(layout.query_ids)), np.flatnonzero(layout.is_query)] = 1.0
    class_scores = matmul(matmul(Tensor(selector), s_last), Tensor(_class_mean_matrix(layout)))
    totals = sum_(class_scores, axis=1, keepdims=True)
    return div(class_scores, totals)


def forward(model: GnnModel, episode: Episode) -> ForwardResult:
    """Run the full pipeline on every graph layout of the episode."""
    layouts = episode_graphs(episode)
    similarities, query_probs = [], []
    for layout in layouts:
        v = encode(model.encoder, layout.features)
        s = Tensor(init_edges(layout))
        layer_scores = []
        for layer in model.layers:
            v = node_update(v, s, layer)
            if layer.relation_kind == ABS_DIFF:
                rel = abs_diff_relation(v)
            else:
                rel = task_level_relation(v)
            s = score(rel, layer.score_head)
            layer_scores.append(s)
        similarities.append(layer_scores)
        query_probs.append(predict(s, layout))
    return ForwardResult(episode=episode, layouts=layouts,
                         similarities=similarities, query_probs=query_probs)


def calibrate_embedding_scale(model: GnnModel, dataset, spec, target: float = 3.0,
                              seed: int = 0, episodes: int = 4) -> list[float]:
    """Rescale each layer's transform so embeddings have std ``target`` at init.

    The sum-style aggregation makes embedding magnitude depend on graph size
    and input scale; both relation measures only discriminate inside a band
    of magnitudes (dot products must spread the attention softmax without
    pinning it, pairwise differences must keep the score sigmoid off its
    tails). Freshly initialized transforms have zero biases, so relu is
    positively homogeneous and one multiplicative correction per layer,
    measured over a few calibration episodes, is exact. Returns the factor
    applied per layer. Call before training; deterministic under ``seed``.
    """
    if target <= 0:
        raise ValueError(f"target must be positive, got {target}")
    rng = np.random.default_rng(seed)
    cal_episodes = [sample_episode(dataset, spec, rng) for _ in range(episodes)]
    factors = []
    for depth in range(len(model.layers)):
        spread = []
        for episode in cal_episodes:
            for layout in episode_graphs(episode):
                v = encode(model.encoder, layout.features)
                s = Tensor(init_edges(layout))
                for layer in model.layers[:depth + 1]:
                    v = node_update(v, s, layer)
                    if layer is model.layers[depth]:
                        break
                    rel = abs_diff_relation(v) if layer.relation_kind == ABS_DIFF \
                        else task_level_relation(v)
                    s = score(rel, layer.score_head)
                spread.append(v.data.std())
        measured = float(np.mean(spread))
        factor = target / measured if measured > 1e-12 else 1.0
        model.layers[depth].transform_weight.data *= factor
        factors.append(factor)
    return factors


@dataclass
class OracleSimilarityModel:
    """Verification stand-in that reads true labels instead of features.

    Its single similarity layer is the ground-truth same-class indicator
    mapped to {EDGE_DIFFERENT, 1}; predictions then flow through the ordinary
    scoring path. Useful as a known-perfect upper bound in tests and reports.
    """

    same_value: float = EDGE_SAME
    different_value: float = EDGE_DIFFERENT

    def forward(self, episode: Episode) -> ForwardResult:
        layouts = episode_graphs(episode)
        similarities, query_probs = [], []
        for layout in layouts:
            same = layout.labels[:, None] == layout.labels[None, :]
            s = Tensor(np.where(same, self.same_value, self.different_value))
            similarities.append([s])
            query_probs.append(predict(s, layout))
        return ForwardResult(episode=episode, layouts=layouts,
                             similarities=similarities, query_probs=query_probs)
