"""Fair graph neural networks via partition structural-entropy maximization.

The package trains a two-layer GCN jointly with a per-edge structure
learner whose weights are optimized to raise the structural entropy of the
graph under its sensitive-attribute partition, with a cross-view
contrastive term tying the learned structure to the original graph and a
slow-moving bootstrap refreshing the anchor view.  Fairness gaps and the
false positive rate come with checkable entropy-gap bound calculators.
"""

from .graph import WeightedGraph, SensitivePartition, build_graph, partition_by_sensitive, reweight
from .entropy import (
    EdgeGradient,
    EntropyReport,
    entropy_ascent,
    se_gradient,
    se_gradient_fd,
    two_dim_se,
)
from .fairness import (
    FairnessReport,
    PredictionSet,
    equal_opportunity,
    false_positive_rate,
    fpr_bound,
    sp_eo_bound,
    statistical_parity,
    utility_metrics,
)
from .training import MetricsReport, TrainConfig, fit, split_nodes
from .data import DatasetManifest, SynthSpec, generate_synthetic, load_dataset

__version__ = "0.1.0"

__all__ = [
    "WeightedGraph",
    "SensitivePartition",
    "build_graph",
    "partition_by_sensitive",
    "reweight",
    "EntropyReport",
    "EdgeGradient",
    "two_dim_se",
    "se_gradient",
    "se_gradient_fd",
    "entropy_ascent",
    "PredictionSet",
    "FairnessReport",
    "statistical_parity",
    "equal_opportunity",
    "false_positive_rate",
    "utility_metrics",
    "sp_eo_bound",
    "fpr_bound",
    "TrainConfig",
    "MetricsReport",
    "fit",
    "split_nodes",
    "DatasetManifest",
    "SynthSpec",
    "generate_synthetic",
    "load_dataset",
    "__version__",
]
