"""Manual-gradient neural kernel: tensors, layers, losses, optimization,
the cosine-domain temporal module and the desk-scale networks."""

from .core import (
    Conv1d,
    Dense,
    Dropout,
    Flatten,
    GradientReversal,
    Layer,
    LayerSpec,
    LeakyReLU,
    ReLU,
    Sequential,
    ShapeError,
    Tensor,
    build_layer,
    grl_apply,
    sigmoid,
    softmax,
    softmax_xent,
)
from .dct import ChunkSizeError, DctTemporal, dct2, dct_temporal_forward, idct2
from .networks import (
    CheckpointError,
    Discriminator,
    FrameClassifier,
    Generator,
    load_checkpoint,
    save_checkpoint,
)
from .optim import AdamState, DivergenceError, EarlyStopPolicy, adam_init, adam_step
from .training import (
    CurveRow,
    TrainConfig,
    flatten_segments,
    train_classifier,
    train_classifier_segments,
    write_curve_csv,
)

__all__ = [
    "Tensor", "LayerSpec", "Layer", "Dense", "Conv1d", "ReLU", "LeakyReLU", "Dropout",
    "Flatten", "GradientReversal", "Sequential", "build_layer", "ShapeError",
    "softmax", "sigmoid", "softmax_xent", "grl_apply",
    "ChunkSizeError", "DctTemporal", "dct2", "idct2", "dct_temporal_forward",
    "AdamState", "DivergenceError", "EarlyStopPolicy", "adam_init", "adam_step",
    "FrameClassifier", "Generator", "Discriminator",
    "CheckpointError", "save_checkpoint", "load_checkpoint",
    "TrainConfig", "CurveRow", "train_classifier", "train_classifier_segments",
    "write_curve_csv", "flatten_segments",
]
