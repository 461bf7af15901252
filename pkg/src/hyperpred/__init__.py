"""Hyperedge prediction with positive-guided adversarial negative generation.

Everything runs on a small reverse-mode autodiff engine over float64 numpy
arrays; see :mod:`hyperpred.autodiff`.
"""

__version__ = "0.1.0"

from .config import TrainConfig
from .evaluation import EvalReport, auroc, average_precision, evaluate
from .hypergraph import Hypergraph, clique_expand, parse_hypergraph, split_dataset
from .synthetic import SyntheticSpec, generate_synthetic
from .training import train

__all__ = [
    "EvalReport",
    "Hypergraph",
    "SyntheticSpec",
    "TrainConfig",
    "auroc",
    "average_precision",
    "clique_expand",
    "evaluate",
    "generate_synthetic",
    "parse_hypergraph",
    "split_dataset",
    "train",
    "__version__",
]
