from .layers import (conv_forward, conv_backward, maxpool_forward,
                     maxpool_backward, relu_forward, relu_backward,
                     fc_forward, fc_backward, softmax, softmax_cross_entropy,
                     ShapeError)
from .model import (CnnModel, forward, loss_and_grads, backward_and_step,
                    predict, save_model, load_model,
                    INPUT_SHAPE, NUM_CLASSES, CONV1_KERNEL, CONV1_STRIDE)
from .train import augment, train, write_log, EpochLog

__all__ = [
    "conv_forward", "conv_backward", "maxpool_forward", "maxpool_backward",
    "relu_forward", "relu_backward", "fc_forward", "fc_backward",
    "softmax", "softmax_cross_entropy", "ShapeError",
    "CnnModel", "forward", "loss_and_grads", "backward_and_step", "predict",
    "save_model", "load_model", "INPUT_SHAPE", "NUM_CLASSES",
    "CONV1_KERNEL", "CONV1_STRIDE",
    "augment", "train", "write_log", "EpochLog",
]
