"""Link prediction with propagated neighborhood sketches."""

from .config import RunConfig, load_config
from .errors import (
    ArtifactError,
    ConfigError,
    DimensionError,
    IncompatibleError,
    InconsistencyError,
    ParseError,
    SamplingError,
    SubsketchError,
    TrainingDivergedError,
)
from .graph import Graph, bfs_truncated, load_edge_list
from .heuristics import adamic_adar, common_neighbors, resource_allocation, score_pairs
from .metrics import MetricReport, TimingReport, hits_at_k, mrr
from .predictor import Predictor, PredictorConfig, train
from .propagation import SketchTable, propagate_features, propagate_sketches
from .sketch import (
    HllSketch,
    MinhashSketch,
    SketchConfig,
    SketchPair,
    cardinality,
    jaccard,
    merge,
    sketch_from_set,
)
from .splits import EdgeSplit, make_splits
from .structure import (
    StructureFeatureVector,
    drnl_label,
    estimate_counts,
    estimate_counts_batch,
    estimate_intersection,
    exact_counts,
)

__version__ = "0.1.0"

__all__ = [
    "ArtifactError",
    "ConfigError",
    "DimensionError",
    "EdgeSplit",
    "Graph",
    "HllSketch",
    "IncompatibleError",
    "InconsistencyError",
    "MetricReport",
    "MinhashSketch",
    "ParseError",
    "Predictor",
    "PredictorConfig",
    "RunConfig",
    "SamplingError",
    "SketchConfig",
    "SketchPair",
    "SketchTable",
    "StructureFeatureVector",
    "SubsketchError",
    "TimingReport",
    "TrainingDivergedError",
    "adamic_adar",
    "bfs_truncated",
    "cardinality",
    "common_neighbors",
    "drnl_label",
    "estimate_counts",
    "estimate_counts_batch",
    "estimate_intersection",
    "exact_counts",
    "hits_at_k",
    "jaccard",
    "load_config",
    "load_edge_list",
    "make_splits",
    "merge",
    "mrr",
    "propagate_features",
    "propagate_sketches",
    "resource_allocation",
    "score_pairs",
    "sketch_from_set",
    "train",
]
