"""Rule-based Representation Learner: hierarchical rule models trained by Gradient Grafting."""
__version__ = "0.1.0"

from .data import DatasetSchema, EncodedDataset, load_dataset, macro_f1, stratified_kfold
from .model import RRLConfig, RRLModel, build, discrete_logits, predict
from .rules import RuleSet, eliminate_redundant, explain, extract, prune_dead_nodes
from .train import TrainConfig, fit

__all__ = [
    "DatasetSchema", "EncodedDataset", "load_dataset", "macro_f1", "stratified_kfold",
    "RRLConfig", "RRLModel", "build", "discrete_logits", "predict",
    "RuleSet", "eliminate_redundant", "explain", "extract", "prune_dead_nodes",
    "TrainConfig", "fit",
]
