from .engine import (Tensor, bce_loss, concat, conv1d, conv2d, l1_loss,
                     l2norm_region, mul_mask, stack0, tile_spatial,
                     upsample_nearest2)
from .nn import (Activation, BatchNorm2d, Conv1d, Conv2d, Linear, Module,
                 Sequential, Upsample2)
from .optim import Adam

__all__ = [
    "Tensor", "bce_loss", "concat", "conv1d", "conv2d", "l1_loss",
    "l2norm_region", "mul_mask", "stack0", "tile_spatial", "upsample_nearest2",
    "Activation", "BatchNorm2d", "Conv1d", "Conv2d", "Linear", "Module",
    "Sequential", "Upsample2", "Adam",
]
