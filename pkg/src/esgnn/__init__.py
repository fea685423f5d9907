"""esgnn: equivariant scene graphs from segmented 3D point clouds.

A small numpy pipeline that turns synthetic indoor scenes into semantic
scene graphs: a point-cloud encoder, feature-wise attention layers,
E(n)-equivariant layers operating on box-corner coordinate channels, joint
node/edge classification, and verification tooling for gradients and
rigid-motion invariance.
"""

from .autodiff import Tape, Tensor, backward
from .dataset import load_manifest, load_split, write_dataset
from .equivcheck import check_prediction_invariance, layer_equivariance_suite, random_transform
from .generator import GeneratorConfig, generate_scene
from .geometry import Transform
from .gnn import PRESETS, StackConfig
from .metrics import MetricsAccumulator, MetricsReport
from .model import Model, ModelConfig
from .nn import Adam, Mlp
from .scene import (
    LabelSpace,
    Scene,
    Segment,
    apply_transform,
    compute_segment_properties,
    derive_gt_predicates,
    load_scene,
    save_scene,
)
from .trainer import (
    TrainConfig,
    evaluate,
    gradcheck,
    load_checkpoint,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "GeneratorConfig",
    "LabelSpace",
    "MetricsAccumulator",
    "MetricsReport",
    "Mlp",
    "Model",
    "ModelConfig",
    "PRESETS",
    "Scene",
    "Segment",
    "StackConfig",
    "Tape",
    "Tensor",
    "TrainConfig",
    "Transform",
    "apply_transform",
    "backward",
    "check_prediction_invariance",
    "compute_segment_properties",
    "derive_gt_predicates",
    "evaluate",
    "generate_scene",
    "gradcheck",
    "layer_equivariance_suite",
    "load_checkpoint",
    "load_manifest",
    "load_scene",
    "load_split",
    "random_transform",
    "save_checkpoint",
    "save_scene",
    "train",
    "write_dataset",
    "__version__",
]
