"""Episodic task construction: datasets, N-way K-shot sampling, graph layouts.

A dataset is a bag of per-class feature matrices. Episodes are sampled from it
class-major (class 0's shots first, then class 1's, ...; queries likewise), so
node ordering inside a graph is deterministic and similarity heatmaps line up
across episodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class CapacityError(ValueError):
    """The dataset cannot supply the classes or samples an episode needs."""


class DatasetFormatError(ValueError):
    """A dataset file is malformed; carries the offending file and line."""

    def __init__(self, path, line: int | None, message: str):
        self.path = str(path)
        self.line = line
        where = f"{self.path}:{line}" if line is not None else self.path
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class EpisodeSpec:
    """Shape of one N-way K-shot task."""

    n_way: int = 5
    k_shot: int = 1
    queries_per_class: int = 1
    labeled_fraction: float = 1.0
    transductive: bool = True

    def __post_init__(self):
        if self.n_way < 1:
            raise ValueError(f"n_way must be >= 1, got {self.n_way}")
        if self.k_shot < 1:
            raise ValueError(f"k_shot must be >= 1, got {self.k_shot}")
        if self.queries_per_class < 1:
            raise ValueError(f"queries_per_class must be >= 1, got {self.queries_per_class}")
        if not 0.0 < self.labeled_fraction <= 1.0:
            raise ValueError(f"labeled_fraction must be in (0, 1], got {self.labeled_fraction}")

    @property
    def n_support(self) -> int:
        return self.n_way * self.k_shot

    @property
    def n_query(self) -> int:
        return self.n_way * self.queries_per_class

    @property
    def labeled_per_class(self) -> int:
        """Visible support labels per class: ceil(fraction * K), at least 1."""
        return math.ceil(self.labeled_fraction * self.k_shot)


@dataclass
class Dataset:
    """Per-class feature matrices with a uniform feature dimension."""

    names: list[str]
    features: list[np.ndarray]

    def __post_init__(self):
        if len(self.names) != len(self.features):
            raise ValueError("names and features lists differ in length")
        if not self.features:
            raise ValueError("dataset has no classes")
        dims = {m.shape[1] for m in self.features}
        if len(dims) != 1:
            raise ValueError(f"classes disagree on feature dimension: {sorted(dims)}")

    @property
    def feature_dim(self) -> int:
        return self.features[0].shape[1]

    @property
    def num_classes(self) -> int:
        return len(self.names)

    def class_sizes(self) -> list[int]:
        return [m.shape[0] for m in self.features]


@dataclass
class Episode:
    """One sampled task; support and query blocks are class-major."""

    support_features: np.ndarray
    support_labels: np.ndarray
    label_mask: np.ndarray
    query_features: np.ndarray
    query_labels: np.ndarray
    transductive: bool
    spec: EpisodeSpec = field(repr=False)


@dataclass
class GraphLayout:
    """Node set of one graph: support block first, then its query node(s).

    ``labels`` holds ground truth for every node (training supervision);
    ``label_visible`` marks the nodes whose label the model may consult.
    Masked support nodes keep ``is_query`` False but are invisible, so edge
    initialization treats them like queries.
    """

    features: np.ndarray
    labels: np.ndarray
    label_visible: np.ndarray
    is_query: np.ndarray
    query_ids: np.ndarray  # positions of this layout's queries in the episode order
    n_way: int

    @property
    def n_nodes(self) -> int:
        return self.features.shape[0]


def make_synthetic_dataset(num_classes: int, samples_per_class: int, dim: int,
                           class_separation: float, noise_sigma: float,
                           seed: int) -> Dataset:
    """Gaussian clusters around uniformly drawn prototypes.

    Prototypes live in [-class_separation, class_separation]^dim; samples add
    isotropic noise of std ``noise_sigma``. The separation/noise ratio is the
    single difficulty knob: large ratios give cleanly separable classes, small
    ones give heavy overlap.
    """
    if num_classes < 2:
        raise ValueError(f"num_classes must be >= 2, got {num_classes}")
    if samples_per_class < 2:
        raise ValueError(f"samples_per_class must be >= 2, got {samples_per_class}")
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    if noise_sigma < 0:
        raise ValueError(f"noise_sigma must be >= 0, got {noise_sigma}")
    rng = np.random.default_rng(seed)
    prototypes = rng.uniform(-class_separation, class_separation, size=(num_classes, dim))
    width = max(3, len(str(num_classes - 1)))
    names, features = [], []
    for c in range(num_classes):
        noise = rng.normal(0.0, noise_sigma, size=(samples_per_class, dim)) if noise_sigma > 0 \
            else np.zeros((samples_per_class, dim))
        names.append(f"class_{c:0{width}d}")
        features.append(prototypes[c] + noise)
    return Dataset(names=names, features=features)


def standardize_dataset(dataset: Dataset) -> Dataset:
    """Shift/scale every feature dimension to zero mean, unit std.

    Statistics come from the pooled samples of all classes. Constant
    dimensions are left unscaled. Standard preprocessing before episodic
    training; apply the same transform at evaluation time by rebuilding the
    dataset the same way.
    """
    pooled = np.concatenate(dataset.features, axis=0)
    mu = pooled.mean(axis=0)
    sd = pooled.std(axis=0)
    sd = np.where(sd < 1e-12, 1.0, sd)
    return Dataset(names=list(dataset.names),
                   features=[(m - mu) / sd for m in dataset.features])


def save_csv_dataset(dataset: Dataset, path) -> None:
    """Write one ``<class_name>.csv`` per class, 17 significant digits."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    for name, matrix in zip(dataset.names, dataset.features):
        lines = [",".join(f"{v:.17g}" for v in row) for row in matrix]
        (root / f"{name}.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_csv_dataset(path) -> Dataset:
    """Load a directory of ``<class_name>.csv`` files, one row per sample.

    Class ids follow lexicographic filename order. Ragged or non-numeric rows
    raise :class:`DatasetFormatError` naming the file and line.
    """
    root = Path(path)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset directory not found: {root}")
    files = sorted(root.glob("*.csv"))
    if not files:
        raise FileNotFoundError(f"no .csv class files in {root}")
    names, features = [], []
    dim = None
    for f in files:
        rows = []
        text = f.read_text(encoding="utf-8")
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            tokens = line.split(",")
            try:
                row = [float(tok) for tok in tokens]
            except ValueError:
                raise DatasetFormatError(f, lineno, f"non-numeric token in row: {line!r}") from None
            if dim is None:
                dim = len(row)
            if len(row) != dim:
                raise DatasetFormatError(f, lineno, f"row has {len(row)} values, expected {dim}")
            rows.append(row)
        if not rows:
            raise DatasetFormatError(f, None, "class file is empty")
        names.append(f.stem)
        features.append(np.asarray(rows, dtype=np.float64))
    return Dataset(names=names, features=features)


def sample_episode(dataset: Dataset, spec: EpisodeSpec, rng: np.random.Generator) -> Episode:
    """Draw one episode: N classes, then K support + q query samples per class.

    All draws are without replacement; labels are remapped to 0..N-1 in draw
    order; exactly ``spec.labeled_per_class`` support labels per class are
    visible. Deterministic given the generator state.
    """
    n, k, q = spec.n_way, spec.k_shot, spec.queries_per_class
    if dataset.num_classes < n:
        raise CapacityError(
            f"dataset has {dataset.num_classes} classes, episode needs {n}")
    chosen = rng.choice(dataset.num_classes, size=n, replace=False)
    support_rows, query_rows, mask_rows = [], [], []
    for class_idx in chosen:
        matrix = dataset.features[class_idx]
        need = k + q
        if matrix.shape[0] < need:
            raise CapacityError(
                f"class {dataset.names[class_idx]!r} has {matrix.shape[0]} samples, "
                f"episode needs {need}")
        picks = rng.choice(matrix.shape[0], size=need, replace=False)
        support_rows.append(matrix[picks[:k]])
        query_rows.append(matrix[picks[k:]])
        visible = np.zeros(k, dtype=bool)
        visible[rng.choice(k, size=spec.labeled_per_class, replace=False)] = True
        mask_rows.append(visible)
    support_labels = np.repeat(np.arange(n), k)
    query_labels = np.repeat(np.arange(n), q)
    return Episode(
        support_features=np.concatenate(support_rows, axis=0),
        support_labels=support_labels,
        label_mask=np.concatenate(mask_rows),
        query_features=np.concatenate(query_rows, axis=0),
        query_labels=query_labels,
        transductive=spec.transductive,
        spec=spec,
    )


def episode_graphs(episode: Episode) -> list[GraphLayout]:
    """Node layouts for an episode.

    Transductive episodes yield a single graph containing every support and
    query node; otherwise each query gets its own graph of support + that one
    query. Both agree when there is a single query.
    """
    n_support = episode.support_features.shape[0]
    n_query = episode.query_features.shape[0]
    n_way = episode.spec.n_way
    support_visible = episode.label_mask.astype(bool)
    if episode.transductive:
        return [GraphLayout(
            features=np.concatenate([episode.support_features, episode.query_features]),
            labels=np.concatenate([episode.support_labels, episode.query_labels]),
            label_visible=np.concatenate([support_visible, np.zeros(n_query, dtype=bool)]),
            is_query=np.concatenate([np.zeros(n_support, dtype=bool),
                                     np.ones(n_query, dtype=bool)]),
            query_ids=np.arange(n_query),
            n_way=n_way,
        )]
    layouts = []
    for t in range(n_query):
        layouts.append(GraphLayout(
            features=np.concatenate([episode.support_features,
                                     episode.query_features[t:t + 1]]),
            labels=np.concatenate([episode.support_labels, episode.query_labels[t:t + 1]]),
            label_visible=np.concatenate([support_visible, np.zeros(1, dtype=bool)]),
            is_query=np.concatenate([np.zeros(n_support, dtype=bool), np.ones(1, dtype=bool)]),
            query_ids=np.array([t]),
            n_way=n_way,
        ))
    return layouts
