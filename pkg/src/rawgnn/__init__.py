"""Random-walk aggregation graph neural network for node classification
on homophilous and heterophilous graphs."""
from .estimator import RAWGNNClassifier
from .graph import Graph, LabelSet, Split, SplitSet, load_dataset, load_dataset_dir, make_splits
from .metrics import accuracy, aggregate_runs, edge_homophily
from .model import RAWGNN, ModelConfig
from .walker import Path, RngStream, WalkStrategy, sample_neighborhood, sample_walk

__version__ = "0.1.0"

__all__ = [
    "Graph",
    "LabelSet",
    "ModelConfig",
    "Path",
    "RAWGNN",
    "RAWGNNClassifier",
    "RngStream",
    "Split",
    "SplitSet",
    "WalkStrategy",
    "accuracy",
    "aggregate_runs",
    "edge_homophily",
    "load_dataset",
    "load_dataset_dir",
    "make_splits",
    "sample_neighborhood",
    "sample_walk",
]
