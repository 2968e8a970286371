"""Episodic few-shot graph classification with swappable relation measures.

The package is organized bottom-up:

* :mod:`taskrel.tensor` — reverse-mode autodiff over float64 numpy arrays,
  with a finite-difference gradient checker.
* :mod:`taskrel.episode` — datasets, N-way K-shot sampling, label masking,
  transductive vs. per-query graph layouts.
* :mod:`taskrel.embedding` — the MLP feature encoder.
* :mod:`taskrel.relation` — the pairwise absolute-difference relation and the
  task-level attention relation, with their score heads.
* :mod:`taskrel.gnn` — the layered graph classifier and query prediction.
* :mod:`taskrel.trainer` — loss, Adam with step decay, the episodic loop,
  and confidence-interval evaluation.
* :mod:`taskrel.config` / :mod:`taskrel.artifacts` / :mod:`taskrel.cli` —
  run configuration, on-disk artifacts, and the command-line front end.
"""

from .embedding import Encoder, encode, init_encoder
from .episode import (CapacityError, Dataset, DatasetFormatError, Episode,
                      EpisodeSpec, GraphLayout, episode_graphs,
                      load_csv_dataset, make_synthetic_dataset, sample_episode,
                      save_csv_dataset, standardize_dataset)
from .gnn import (ForwardResult, GnnLayer, GnnModel, OracleSimilarityModel,
                  Prediction, calibrate_embedding_scale, forward, init_edges,
                  init_model, node_update, predict)
from .relation import (ABS_DIFF, TASK_LEVEL, AbsDiffScoreHead, MlpScoreHead,
                       RelationTensor, abs_diff_relation, attention,
                       init_abs_diff_head, init_mlp_head, matching_degree,
                       score, task_level_relation)
from .tensor import (ContractError, Gradients, NumericError, ShapeError, Tape,
                     Tensor, backward, check_gradients)
from .trainer import (Adam, EvalReport, TrainConfig, TrainResult, episode_loss,
                      evaluate, lr_at, train)

__all__ = [
    "ABS_DIFF", "TASK_LEVEL",
    "Adam", "AbsDiffScoreHead", "CapacityError", "ContractError", "Dataset",
    "DatasetFormatError", "Encoder", "Episode", "EpisodeSpec", "EvalReport",
    "ForwardResult", "GnnLayer", "GnnModel", "Gradients", "GraphLayout",
    "MlpScoreHead", "NumericError", "OracleSimilarityModel", "Prediction",
    "RelationTensor", "ShapeError", "Tape", "Tensor", "TrainConfig",
    "TrainResult",
    "abs_diff_relation", "attention", "backward", "calibrate_embedding_scale",
    "check_gradients", "encode", "episode_graphs", "episode_loss", "evaluate",
    "forward", "init_abs_diff_head", "init_edges", "init_encoder",
    "init_mlp_head", "init_model", "load_csv_dataset", "lr_at",
    "make_synthetic_dataset", "matching_degree", "node_update", "predict",
    "sample_episode", "save_csv_dataset", "score", "standardize_dataset",
    "task_level_relation", "train",
]

__version__ = "0.1.0"
