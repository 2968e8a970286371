"""Run-directory artifacts: versioned parameter files, heatmaps, PGM images.

The parameter file is plain text: a version tag, the architecture header
needed to rebuild the model, then one ``param`` record per tensor with its
values at 17 significant digits (lossless for float64).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .config import ModelSpec
from .episode import Dataset, EpisodeSpec, sample_episode
from .gnn import GnnModel, init_model

PARAMS_FORMAT = "taskrel-params"
PARAMS_VERSION = 1


def save_model(path, model: GnnModel, feature_dim: int, model_spec: ModelSpec) -> None:
    lines = [
        f"format={PARAMS_FORMAT}",
        f"version={PARAMS_VERSION}",
        f"feature_dim={feature_dim}",
        f"embedding_dim={model_spec.embedding_dim}",
        f"hidden_widths={','.join(str(w) for w in model_spec.hidden_widths)}",
        f"relations={','.join(model_spec.relation_kinds)}",
        f"score_hidden={model_spec.score_hidden}",
    ]
    for name, tensor in model.named_parameters():
        dims = " ".join(str(d) for d in tensor.shape)
        lines.append(f"param {name} {dims}")
        lines.append(" ".join(f"{v:.17g}" for v in tensor.data.reshape(-1)))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_model(path) -> tuple[GnnModel, int, ModelSpec]:
    """Rebuild a model from a parameter file; rejects unknown versions."""
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"parameter file not found: {p}")
    lines = p.read_text(encoding="utf-8").splitlines()
    header: dict[str, str] = {}
    i = 0
    while i < len(lines) and not lines[i].startswith("param "):
        key, _, value = lines[i].partition("=")
        header[key.strip()] = value.strip()
        i += 1
    if header.get("format") != PARAMS_FORMAT:
        raise ValueError(f"{p}: not a {PARAMS_FORMAT} file")
    if int(header.get("version", "-1")) != PARAMS_VERSION:
        raise ValueError(f"{p}: unsupported parameter file version {header.get('version')}")
    feature_dim = int(header["feature_dim"])
    hidden_raw = header.get("hidden_widths", "")
    spec = ModelSpec(
        embedding_dim=int(header["embedding_dim"]),
        hidden_widths=tuple(int(t) for t in hidden_raw.split(",") if t),
        relation_kinds=tuple(header["relations"].split(",")),
        score_hidden=int(header["score_hidden"]),
    )
    model = init_model(feature_dim, spec.embedding_dim, list(spec.hidden_widths),
                       list(spec.relation_kinds), spec.score_hidden, seed=0)
    stored: dict[str, np.ndarray] = {}
    while i < len(lines):
        head = lines[i].split()
        if head[0] != "param":
            raise ValueError(f"{p}: malformed parameter record at line {i + 1}")
        name, dims = head[1], tuple(int(d) for d in head[2:])
        values = np.array([float(t) for t in lines[i + 1].split()])
        stored[name] = values.reshape(dims)
        i += 2
    for name, tensor in model.named_parameters():
        if name not in stored:
            raise ValueError(f"{p}: missing parameter {name!r}")
        if stored[name].shape != tensor.data.shape:
            raise ValueError(f"{p}: parameter {name!r} has shape {stored[name].shape}, "
                             f"expected {tensor.data.shape}")
        tensor.data = stored[name]
    return model, feature_dim, spec


def write_pgm(path, matrix: np.ndarray) -> None:
    """8-bit binary PGM (P5); values in [0, 1] map to round(255 * v)."""
    clipped = np.clip(matrix, 0.0, 1.0)
    pixels = np.round(255.0 * clipped).astype(np.uint8)
    height, width = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def read_pgm(path) -> np.ndarray:
    """Parse a binary P5 file back into a uint8 matrix (for verification)."""
    raw = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos])
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise ValueError(f"{path}: expected maxval 255, got {maxval}")
    pos += 1  # single whitespace byte after the header
    data = np.frombuffer(raw[pos:pos + width * height], dtype=np.uint8)
    return data.reshape((height, width))


def write_matrix_csv(path, matrix: np.ndarray) -> None:
    lines = [",".join(f"{v:.17g}" for v in row) for row in matrix]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def average_similarity_heatmap(model, dataset: Dataset, spec: EpisodeSpec,
                               episodes: int, seed: int) -> np.ndarray:
    """Mean last-layer similarity of the support x query block.

    Rows are the N*K support nodes in class-major order, columns the T query
    nodes in class-major order, averaged over freshly sampled episodes.
    """
    if episodes <= 0:
        raise ValueError(f"episodes must be >= 1, got {episodes}")
    rng = np.random.default_rng(seed)
    n_support = spec.n_support
    total = np.zeros((n_support, spec.n_query))
    for _ in range(episodes):
        episode = sample_episode(dataset, spec, rng)
        result = model.forward(episode)
        for layout, layer_scores in zip(result.layouts, result.similarities):
            block = layer_scores[-1].data[:n_support, n_support:]
            total[:, layout.query_ids] += block
    return total / episodes
