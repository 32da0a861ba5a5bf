"""ffnerv: flow-guided frame-wise neural video codec."""

from .tensor import Tensor, backward
from .model import FFNeRVConfig, FFNeRVModel, FrameBuffer
from .training import TrainConfig, LossWeights, train
from .compression import (QuantizedModel, quantize_model, model_from_quantized,
                          serialize, deserialize, prune, bpp)

__version__ = "0.1.0"

__all__ = [
    "Tensor", "backward",
    "FFNeRVConfig", "FFNeRVModel", "FrameBuffer",
    "TrainConfig", "LossWeights", "train",
    "QuantizedModel", "quantize_model", "model_from_quantized",
    "serialize", "deserialize", "prune", "bpp",
    "__version__",
]
