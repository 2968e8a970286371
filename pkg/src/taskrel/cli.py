"""Command-line entry point: train, eval, ablate, heatmap, compare.

Every command reads or writes a run directory; the resolved configuration is
persisted next to the artifacts so each run is reproducible from its own
files. Commands exit 0 on success and print a single-line error otherwise.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .artifacts import (average_similarity_heatmap, load_model, save_model,
                        write_matrix_csv, write_pgm)
from .config import ConfigError, RunConfig, dump_run_config, load_run_config
from .gnn import calibrate_embedding_scale, init_model
from .relation import ABS_DIFF, TASK_LEVEL
from .trainer import EvalReport, evaluate, train, write_eval_csv, write_loss_curve_csv

LOSS_CURVE_FILE = "loss_curve.csv"
PARAMS_FILE = "params.txt"
CONFIG_FILE = "config.txt"


def _train_one(cfg: RunConfig, relation_kinds: tuple[str, ...] | None = None):
    """Build dataset + model from a config and train; returns (model, curve)."""
    dataset = cfg.build_dataset()
    model_spec = cfg.model if relation_kinds is None \
        else replace(cfg.model, relation_kinds=relation_kinds)
    model = init_model(dataset.feature_dim, model_spec.embedding_dim,
                       list(model_spec.hidden_widths), list(model_spec.relation_kinds),
                       model_spec.score_hidden, seed=cfg.seed)
    if model_spec.embed_scale > 0:
        calibrate_embedding_scale(model, dataset, cfg.episode,
                                  target=model_spec.embed_scale,
                                  seed=cfg.calibration_seed)
    result = train(model, dataset, cfg.episode, cfg.train)
    return dataset, model, model_spec, result


def cmd_train(config_path) -> Path:
    """Train per the config; write loss curve, parameters, resolved config."""
    cfg = load_run_config(config_path)
    run_dir = Path(cfg.out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    dataset, model, model_spec, result = _train_one(cfg)
    write_loss_curve_csv(run_dir / LOSS_CURVE_FILE, result.curve)
    save_model(run_dir / PARAMS_FILE, model, dataset.feature_dim, model_spec)
    (run_dir / CONFIG_FILE).write_text(dump_run_config(cfg), encoding="utf-8")
    return run_dir


def _load_run(run_dir):
    run_dir = Path(run_dir)
    cfg = load_run_config(run_dir / CONFIG_FILE)
    model, _, _ = load_model(run_dir / PARAMS_FILE)
    return run_dir, cfg, model


def cmd_eval(run_dir, episodes: int | None = None,
             labeled_fraction: float | None = None) -> tuple[Path, EvalReport]:
    """Evaluate a trained run; optionally override the labeled fraction."""
    run_dir, cfg, model = _load_run(run_dir)
    spec = cfg.episode
    if labeled_fraction is not None:
        spec = replace(spec, labeled_fraction=labeled_fraction)
    count = cfg.eval_episodes if episodes is None else episodes
    report = evaluate(model, cfg.build_dataset(), spec, episodes=count,
                      seed=cfg.resolved_eval_seed)
    out = run_dir / f"eval_lf{spec.labeled_fraction:g}_ep{count}.csv"
    write_eval_csv(out, report)
    print(f"mean={report.mean_accuracy:.4f} ci95={report.ci95:.4f} "
          f"episodes={report.episode_count} labeled_fraction={spec.labeled_fraction:g}")
    return out, report


def ablation_variants(num_layers: int) -> list[tuple[str, tuple[str, ...]]]:
    """Baseline plus task-level relations at each single layer, then at all."""
    variants = [("absdiff", tuple([ABS_DIFF] * num_layers))]
    for i in range(num_layers):
        kinds = [ABS_DIFF] * num_layers
        kinds[i] = TASK_LEVEL
        variants.append((f"tasklevel_l{i + 1}", tuple(kinds)))
    variants.append(("tasklevel_all", tuple([TASK_LEVEL] * num_layers)))
    return variants


def cmd_ablate(config_path) -> Path:
    """Train/evaluate per-layer relation variants on a shared episode stream."""
    cfg = load_run_config(config_path)
    if cfg.model.num_layers != 3:
        raise ConfigError(
            f"ablate needs model.relations to define 3 layers, got {cfg.model.num_layers}")
    run_dir = Path(cfg.out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for name, kinds in ablation_variants(cfg.model.num_layers):
        dataset, model, _, _ = _train_one(cfg, relation_kinds=kinds)
        report = evaluate(model, dataset, cfg.episode, episodes=cfg.eval_episodes,
                          seed=cfg.resolved_eval_seed)
        rows.append((name, report))
        print(f"{name}: mean={report.mean_accuracy:.4f} ci95={report.ci95:.4f}")
    out = run_dir / "ablation.csv"
    _write_comparison_csv(out, rows)
    (run_dir / CONFIG_FILE).write_text(dump_run_config(cfg), encoding="utf-8")
    return out


def cmd_compare(config_path) -> Path:
    """Train both relation measures with identical seeds; report the delta."""
    cfg = load_run_config(config_path)
    run_dir = Path(cfg.out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    reports = {}
    for name, kind in (("absdiff", ABS_DIFF), ("tasklevel", TASK_LEVEL)):
        kinds = tuple([kind] * cfg.model.num_layers)
        dataset, model, _, _ = _train_one(cfg, relation_kinds=kinds)
        report = evaluate(model, dataset, cfg.episode, episodes=cfg.eval_episodes,
                          seed=cfg.resolved_eval_seed, keep_per_episode=True)
        reports[name] = report
        rows.append((name, report))
        print(f"{name}: mean={report.mean_accuracy:.4f} ci95={report.ci95:.4f}")
    base, task = reports["absdiff"], reports["tasklevel"]
    if base.stream_checksum != task.stream_checksum:
        raise RuntimeError("evaluation streams diverged between the two runs")
    diffs = np.asarray(task.per_episode) - np.asarray(base.per_episode)
    delta = EvalReport(
        mean_accuracy=float(diffs.mean()),
        ci95=1.96 * float(diffs.std(ddof=1)) / np.sqrt(len(diffs)) if len(diffs) > 1 else 0.0,
        episode_count=base.episode_count,
        stream_checksum=base.stream_checksum,
    )
    rows.append(("delta", delta))
    print(f"delta: mean={delta.mean_accuracy:+.4f} ci95={delta.ci95:.4f}")
    out = run_dir / "compare.csv"
    _write_comparison_csv(out, rows)
    (run_dir / CONFIG_FILE).write_text(dump_run_config(cfg), encoding="utf-8")
    return out


def cmd_heatmap(run_dir, episodes: int = 10000) -> tuple[Path, Path]:
    """Average the final similarity block over episodes; write CSV and PGM."""
    run_dir, cfg, model = _load_run(run_dir)
    heat = average_similarity_heatmap(model, cfg.build_dataset(), cfg.episode,
                                      episodes=episodes, seed=cfg.resolved_eval_seed)
    csv_path = run_dir / "heatmap.csv"
    pgm_path = run_dir / "heatmap.pgm"
    write_matrix_csv(csv_path, heat)
    write_pgm(pgm_path, heat)
    print(f"heatmap: {heat.shape[0]}x{heat.shape[1]} support-by-query block "
          f"averaged over {episodes} episodes")
    return csv_path, pgm_path


def _write_comparison_csv(path, rows: list[tuple[str, EvalReport]]) -> None:
    lines = ["variant,mean,ci95,episodes,stream_checksum"]
    for name, r in rows:
        lines.append(f"{name},{r.mean_accuracy!r},{r.ci95!r},{r.episode_count},"
                     f"{r.stream_checksum}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="taskrel",
        description="Episodic few-shot graph classifier with swappable relation measures.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model from a config file")
    p_train.add_argument("config")

    p_eval = sub.add_parser("eval", help="evaluate a trained run directory")
    p_eval.add_argument("run_dir")
    p_eval.add_argument("--episodes", type=int, default=None)
    p_eval.add_argument("--labeled-fraction", type=float, default=None)

    p_ablate = sub.add_parser("ablate", help="per-layer relation ablation study")
    p_ablate.add_argument("config")

    p_heat = sub.add_parser("heatmap", help="export averaged similarity heatmap")
    p_heat.add_argument("run_dir")
    p_heat.add_argument("--episodes", type=int, default=10000)

    p_cmp = sub.add_parser("compare", help="both relation measures, shared seeds")
    p_cmp.add_argument("config")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "train":
            run_dir = cmd_train(args.config)
            print(f"run written to {run_dir}")
        elif args.command == "eval":
            cmd_eval(args.run_dir, episodes=args.episodes,
                     labeled_fraction=args.labeled_fraction)
        elif args.command == "ablate":
            out = cmd_ablate(args.config)
            print(f"ablation report written to {out}")
        elif args.command == "heatmap":
            cmd_heatmap(args.run_dir, episodes=args.episodes)
        elif args.command == "compare":
            out = cmd_compare(args.config)
            print(f"comparison written to {out}")
    except Exception as exc:  # single-line failure contract
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
