"""Reception-aware online distillation for sparse graphs."""

from .data import Dataset, EdgeSplit, generate_sbm, load_dataset, save_dataset, split_edges
from .graph import SparseGraph, build_csr, precompute_propagation
from .model import RodConfig
from .trainer import default_config, evaluate, run_baseline, sweep, train

__version__ = "0.1.0"

__all__ = [
    "Dataset", "EdgeSplit", "RodConfig", "SparseGraph", "build_csr", "default_config",
    "evaluate", "generate_sbm", "load_dataset", "precompute_propagation", "run_baseline",
    "save_dataset", "split_edges", "sweep", "train",
]
