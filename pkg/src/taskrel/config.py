"""Flat key=value run configuration: parsing, validation, canonical dump.

The format is deliberately plain: one ``section.key=value`` per line, ``#``
comments, no quoting. Every run directory gets the fully resolved config
written back, so any run is reproducible from its own artifacts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .episode import (Dataset, EpisodeSpec, load_csv_dataset,
                      make_synthetic_dataset, standardize_dataset)
from .relation import RELATION_KINDS
from .trainer import TrainConfig


class ConfigError(ValueError):
    """A configuration file is missing a field or holds an invalid value."""


@dataclass(frozen=True)
class SyntheticSpec:
    num_classes: int = 20
    samples_per_class: int = 40
    dim: int = 16
    class_separation: float = 5.0
    noise_sigma: float = 0.5
    seed: int = 1


@dataclass(frozen=True)
class ModelSpec:
    embedding_dim: int = 16
    hidden_widths: tuple[int, ...] = (64,)
    relation_kinds: tuple[str, ...] = ("absdiff", "absdiff", "absdiff")
    score_hidden: int = 16
    embed_scale: float = 3.0  # target embedding std at init; 0 disables calibration

    @property
    def num_layers(self) -> int:
        return len(self.relation_kinds)


@dataclass(frozen=True)
class RunConfig:
    dataset_kind: str
    out_dir: str
    seed: int = 0
    eval_episodes: int = 10000
    eval_seed: int | None = None  # defaults to seed + 1 at resolution time
    standardize: bool = True
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    csv_path: str | None = None
    episode: EpisodeSpec = field(default_factory=EpisodeSpec)
    model: ModelSpec = field(default_factory=ModelSpec)
    train: TrainConfig = field(default_factory=TrainConfig)

    @property
    def resolved_eval_seed(self) -> int:
        return self.seed + 1 if self.eval_seed is None else self.eval_seed

    @property
    def calibration_seed(self) -> int:
        return self.seed + 2

    def build_dataset(self) -> Dataset:
        if self.dataset_kind == "synthetic":
            s = self.synthetic
            ds = make_synthetic_dataset(s.num_classes, s.samples_per_class, s.dim,
                                        s.class_separation, s.noise_sigma, s.seed)
        else:
            ds = load_csv_dataset(self.csv_path)
        return standardize_dataset(ds) if self.standardize else ds


def _parse_bool(raw: str, key: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ConfigError(f"field {key!r}: expected a boolean, got {raw!r}")


def _parse_int(raw: str, key: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"field {key!r}: expected an integer, got {raw!r}") from None


def _parse_float(raw: str, key: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"field {key!r}: expected a number, got {raw!r}") from None


def _parse_int_list(raw: str, key: str) -> tuple[int, ...]:
    raw = raw.strip()
    if not raw:
        return ()
    return tuple(_parse_int(tok, key) for tok in raw.split(","))


def parse_key_values(text: str, source: str = "<config>") -> dict[str, str]:
    mapping: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {stripped!r}")
        key, value = stripped.split("=", 1)
        mapping[key.strip()] = value.strip()
    return mapping


_KNOWN_KEYS = {
    "dataset.kind", "dataset.path", "dataset.num_classes", "dataset.samples_per_class",
    "dataset.dim", "dataset.class_separation", "dataset.noise_sigma", "dataset.seed",
    "dataset.standardize",
    "episode.n_way", "episode.k_shot", "episode.queries_per_class",
    "episode.labeled_fraction", "episode.transductive",
    "model.embedding_dim", "model.hidden_widths", "model.relations", "model.score_hidden",
    "model.embed_scale",
    "train.total_episodes", "train.initial_lr", "train.lr_decay_factor",
    "train.lr_decay_every", "train.weight_decay", "train.adam_beta1", "train.adam_beta2",
    "train.adam_eps", "train.edge_loss_weight", "train.seed",
    "eval.episodes", "eval.seed",
    "run.out_dir", "run.seed",
}


def build_run_config(mapping: dict[str, str]) -> RunConfig:
    """Validate a key=value mapping and fill in defaults."""
    for key in mapping:
        if key not in _KNOWN_KEYS:
            raise ConfigError(f"unknown field {key!r}")

    def get(key):
        return mapping.get(key)

    kind = get("dataset.kind")
    if kind is None:
        raise ConfigError("missing required field 'dataset.kind'")
    if kind not in ("synthetic", "csv"):
        raise ConfigError(f"field 'dataset.kind': expected synthetic or csv, got {kind!r}")
    out_dir = get("run.out_dir")
    if out_dir is None:
        raise ConfigError("missing required field 'run.out_dir'")
    csv_path = get("dataset.path")
    if kind == "csv" and csv_path is None:
        raise ConfigError("missing required field 'dataset.path' (dataset.kind=csv)")

    seed = _parse_int(get("run.seed") or "0", "run.seed")

    sdef = SyntheticSpec()
    synthetic = SyntheticSpec(
        num_classes=_parse_int(get("dataset.num_classes") or str(sdef.num_classes),
                               "dataset.num_classes"),
        samples_per_class=_parse_int(
            get("dataset.samples_per_class") or str(sdef.samples_per_class),
            "dataset.samples_per_class"),
        dim=_parse_int(get("dataset.dim") or str(sdef.dim), "dataset.dim"),
        class_separation=_parse_float(
            get("dataset.class_separation") or repr(sdef.class_separation),
            "dataset.class_separation"),
        noise_sigma=_parse_float(get("dataset.noise_sigma") or repr(sdef.noise_sigma),
                                 "dataset.noise_sigma"),
        seed=_parse_int(get("dataset.seed") or str(sdef.seed), "dataset.seed"),
    )

    edef = EpisodeSpec()
    try:
        episode = EpisodeSpec(
            n_way=_parse_int(get("episode.n_way") or str(edef.n_way), "episode.n_way"),
            k_shot=_parse_int(get("episode.k_shot") or str(edef.k_shot), "episode.k_shot"),
            queries_per_class=_parse_int(
                get("episode.queries_per_class") or str(edef.queries_per_class),
                "episode.queries_per_class"),
            labeled_fraction=_parse_float(
                get("episode.labeled_fraction") or repr(edef.labeled_fraction),
                "episode.labeled_fraction"),
            transductive=_parse_bool(get("episode.transductive") or "true",
                                     "episode.transductive"),
        )
    except ValueError as exc:
        raise ConfigError(f"episode settings invalid: {exc}") from None

    mdef = ModelSpec()
    embedding_dim = _parse_int(get("model.embedding_dim") or str(mdef.embedding_dim),
                               "model.embedding_dim")
    hidden_raw = get("model.hidden_widths")
    hidden = mdef.hidden_widths if hidden_raw is None \
        else _parse_int_list(hidden_raw, "model.hidden_widths")
    relations_raw = (get("model.relations") or ",".join(mdef.relation_kinds)).strip()
    kinds = tuple(tok.strip() for tok in relations_raw.split(","))
    for tok in kinds:
        if tok not in RELATION_KINDS:
            raise ConfigError(
                f"field 'model.relations': unknown kind {tok!r}; "
                f"choose from {RELATION_KINDS}")
    model = ModelSpec(
        embedding_dim=embedding_dim,
        hidden_widths=hidden,
        relation_kinds=kinds,
        score_hidden=_parse_int(get("model.score_hidden") or str(mdef.score_hidden),
                                "model.score_hidden"),
        embed_scale=_parse_float(get("model.embed_scale") or repr(mdef.embed_scale),
                                 "model.embed_scale"),
    )
    if model.embed_scale < 0:
        raise ConfigError("field 'model.embed_scale': must be >= 0 (0 disables calibration)")

    tdef = TrainConfig()
    try:
        train = TrainConfig(
            initial_lr=_parse_float(get("train.initial_lr") or repr(tdef.initial_lr),
                                    "train.initial_lr"),
            lr_decay_factor=_parse_float(
                get("train.lr_decay_factor") or repr(tdef.lr_decay_factor),
                "train.lr_decay_factor"),
            lr_decay_every=_parse_int(get("train.lr_decay_every") or str(tdef.lr_decay_every),
                                      "train.lr_decay_every"),
            weight_decay=_parse_float(get("train.weight_decay") or repr(tdef.weight_decay),
                                      "train.weight_decay"),
            adam_beta1=_parse_float(get("train.adam_beta1") or repr(tdef.adam_beta1),
                                    "train.adam_beta1"),
            adam_beta2=_parse_float(get("train.adam_beta2") or repr(tdef.adam_beta2),
                                    "train.adam_beta2"),
            adam_eps=_parse_float(get("train.adam_eps") or repr(tdef.adam_eps),
                                  "train.adam_eps"),
            total_episodes=_parse_int(get("train.total_episodes") or str(tdef.total_episodes),
                                      "train.total_episodes"),
            eval_episodes=_parse_int(get("eval.episodes") or str(tdef.eval_episodes),
                                     "eval.episodes"),
            edge_loss_weight=_parse_float(
                get("train.edge_loss_weight") or repr(tdef.edge_loss_weight),
                "train.edge_loss_weight"),
            seed=_parse_int(get("train.seed") or str(seed), "train.seed"),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"train settings invalid: {exc}") from None

    eval_seed = get("eval.seed")
    return RunConfig(
        dataset_kind=kind,
        out_dir=out_dir,
        seed=seed,
        eval_episodes=train.eval_episodes,
        eval_seed=None if eval_seed is None else _parse_int(eval_seed, "eval.seed"),
        standardize=_parse_bool(get("dataset.standardize") or "true", "dataset.standardize"),
        synthetic=synthetic,
        csv_path=csv_path,
        episode=episode,
        model=model,
        train=train,
    )


def load_run_config(path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"config file not found: {p}")
    return build_run_config(parse_key_values(p.read_text(encoding="utf-8"), source=str(p)))


def dump_run_config(cfg: RunConfig) -> str:
    """Canonical, fully resolved key=value text for a run directory."""
    lines = [
        f"dataset.kind={cfg.dataset_kind}",
    ]
    if cfg.dataset_kind == "csv":
        lines.append(f"dataset.path={cfg.csv_path}")
    else:
        s = cfg.synthetic
        lines.extend([
            f"dataset.num_classes={s.num_classes}",
            f"dataset.samples_per_class={s.samples_per_class}",
            f"dataset.dim={s.dim}",
            f"dataset.class_separation={s.class_separation!r}",
            f"dataset.noise_sigma={s.noise_sigma!r}",
            f"dataset.seed={s.seed}",
        ])
    lines.append(f"dataset.standardize={str(cfg.standardize).lower()}")
    e = cfg.episode
    lines.extend([
        f"episode.n_way={e.n_way}",
        f"episode.k_shot={e.k_shot}",
        f"episode.queries_per_class={e.queries_per_class}",
        f"episode.labeled_fraction={e.labeled_fraction!r}",
        f"episode.transductive={str(e.transductive).lower()}",
    ])
    m = cfg.model
    lines.extend([
        f"model.embedding_dim={m.embedding_dim}",
        f"model.hidden_widths={','.join(str(w) for w in m.hidden_widths)}",
        f"model.relations={','.join(m.relation_kinds)}",
        f"model.score_hidden={m.score_hidden}",
        f"model.embed_scale={m.embed_scale!r}",
    ])
    t = cfg.train
    lines.extend([
        f"train.total_episodes={t.total_episodes}",
        f"train.initial_lr={t.initial_lr!r}",
        f"train.lr_decay_factor={t.lr_decay_factor!r}",
        f"train.lr_decay_every={t.lr_decay_every}",
        f"train.weight_decay={t.weight_decay!r}",
        f"train.adam_beta1={t.adam_beta1!r}",
        f"train.adam_beta2={t.adam_beta2!r}",
        f"train.adam_eps={t.adam_eps!r}",
        f"train.edge_loss_weight={t.edge_loss_weight!r}",
        f"train.seed={t.seed}",
        f"eval.episodes={cfg.eval_episodes}",
        f"eval.seed={cfg.resolved_eval_seed}",
        f"run.out_dir={cfg.out_dir}",
        f"run.seed={cfg.seed}",
    ])
    return "\n".join(lines) + "\n"
