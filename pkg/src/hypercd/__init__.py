"""Object-level semi-supervised change detection on bi-temporal image pairs.

The pipeline stacks a co-registered pair, segments it at a fine and a coarse
scale by bottom-up region merging, pools pixel features into per-object node
features, links the objects through a dual-neighborhood hypergraph, trains a
small hypergraph-convolution classifier on a few labeled objects, and paints
the node decisions back to a pixel change map scored by FAR/MAR/OA/Kappa.
"""

from .errors import (
    DegenerateGraphError,
    DimensionError,
    FormatError,
    HypercdError,
    ParameterError,
    TrainingError,
)
from .features import NodeFeatures, baseline_features, pool, zscore
from .hypergraph import (
    Hypergraph,
    PropagationOperator,
    build_hyperedges,
    build_hypergraph,
    degrees,
    hyperedge_weights,
    propagation_operator,
    spatial_neighborhood,
    structural_neighborhood,
)
from .metrics import ConfusionCounts, Metrics, confusion, metrics, paint
from .model import (
    LabelMask,
    Model,
    TrainConfig,
    backward,
    conv_layer,
    focal_loss,
    forward,
    init_model,
    predict,
    sample_labels,
    train,
)
from .pipeline import PipelineConfig, run_pipeline, run_synth, sweep
from .raster import Raster, read_raster, stack, write_raster
from .segmentation import (
    Hierarchy,
    SegParams,
    Segmentation,
    coarsen,
    region_adjacency,
    segment,
)
from .synth import synth_scene

__all__ = [
    "ConfusionCounts",
    "DegenerateGraphError",
    "DimensionError",
    "FormatError",
    "Hierarchy",
    "Hypergraph",
    "HypercdError",
    "LabelMask",
    "Metrics",
    "Model",
    "NodeFeatures",
    "ParameterError",
    "PipelineConfig",
    "PropagationOperator",
    "Raster",
    "SegParams",
    "Segmentation",
    "TrainConfig",
    "TrainingError",
    "backward",
    "baseline_features",
    "build_hyperedges",
    "build_hypergraph",
    "coarsen",
    "confusion",
    "conv_layer",
    "degrees",
    "focal_loss",
    "forward",
    "hyperedge_weights",
    "init_model",
    "metrics",
    "paint",
    "pool",
    "predict",
    "propagation_operator",
    "read_raster",
    "region_adjacency",
    "run_pipeline",
    "run_synth",
    "sample_labels",
    "segment",
    "spatial_neighborhood",
    "stack",
    "structural_neighborhood",
    "sweep",
    "synth_scene",
    "train",
    "write_raster",
    "zscore",
]

__version__ = "0.1.0"
