"""The 8-class dish-color classifier and its binary model format.

Architecture on a 50x100x3 patch:
    conv 4x8x3x20 stride (2,4) -> relu -> pool   : 24x24x20 -> 12x12x20
    conv 5x5x20x50 stride 1    -> relu -> pool   : 8x8x50   -> 4x4x50
    conv 4x4x50x500 stride 1   -> relu           : 1x1x500
    fc 500 -> 8                -> softmax
The first kernel is deliberately non-square so the rectangular input
becomes a square feature map.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import layers

MAGIC = b"SDCNN1"

INPUT_SHAPE = (50, 100, 3)
CONV1_KERNEL = (4, 8)
CONV1_STRIDE = (2, 4)
NUM_CLASSES = 8

# parameter tensors in serialization order; data_mean always last
_TENSOR_ORDER = ("conv1_w", "conv1_b", "conv2_w", "conv2_b",
                 "conv3_w", "conv3_b", "fc_w", "fc_b", "data_mean")


@dataclass
class CnnModel:
    conv1_w: np.ndarray
    conv1_b: np.ndarray
    conv2_w: np.ndarray
    conv2_b: np.ndarray
    conv3_w: np.ndarray
    conv3_b: np.ndarray
    fc_w: np.ndarray
    fc_b: np.ndarray
    data_mean: np.ndarray = field(
        default_factory=lambda: np.zeros(INPUT_SHAPE))

    @staticmethod
    def initialize(seed: int = 0) -> "CnnModel":
        """He-style init: zero-mean Gaussian, std sqrt(2 / fan_in)."""
        rng = np.random.default_rng(seed)

        def he(shape, fan_in):
            return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)

        kh, kw = CONV1_KERNEL
        return CnnModel(
            conv1_w=he((kh, kw, 3, 20), kh * kw * 3),
            conv1_b=np.zeros(20),
            conv2_w=he((5, 5, 20, 50), 5 * 5 * 20),
            conv2_b=np.zeros(50),
            conv3_w=he((4, 4, 50, 500), 4 * 4 * 50),
            conv3_b=np.zeros(500),
            fc_w=he((500, NUM_CLASSES), 500),
            fc_b=np.zeros(NUM_CLASSES),
        )

    def param_names(self):
        return _TENSOR_ORDER[:-1]


def forward(model: CnnModel, x: np.ndarray, return_shapes: bool = False):
    """Class probabilities for a batch (N,50,100,3) or single (50,100,3) patch."""
    single = x.ndim == 3
    if single:
        x = x[None]
    if x.shape[1:] != INPUT_SHAPE:
        raise layers.ShapeError(f"expected input {INPUT_SHAPE}, got {x.shape[1:]}")
    acts, _ = _forward_pass(model, x)
    probs = layers.softmax(acts["logits"])
    if return_shapes:
        shapes = [acts[k].shape[1:] for k in
                  ("c1", "p1", "c2", "p2", "c3", "logits")]
        return (probs[0] if single else probs), shapes
    return probs[0] if single else probs


def _forward_pass(model: CnnModel, x: np.ndarray):
    acts, caches = {}, {}
    x = x - model.data_mean
    acts["c1"], caches["c1"] = layers.conv_forward(
        x, model.conv1_w, model.conv1_b, CONV1_STRIDE)
    r1, caches["r1"] = layers.relu_forward(acts["c1"])
    acts["p1"], caches["p1"] = layers.maxpool_forward(r1)
    acts["c2"], caches["c2"] = layers.conv_forward(
        acts["p1"], model.conv2_w, model.conv2_b)
    r2, caches["r2"] = layers.relu_forward(acts["c2"])
    acts["p2"], caches["p2"] = layers.maxpool_forward(r2)
    acts["c3"], caches["c3"] = layers.conv_forward(
        acts["p2"], model.conv3_w, model.conv3_b)
    r3, caches["r3"] = layers.relu_forward(acts["c3"])
    feat = r3.reshape(len(x), -1)
    acts["logits"], caches["fc"] = layers.fc_forward(feat, model.fc_w, model.fc_b)
    caches["feat_shape"] = r3.shape
    return acts, caches


def loss_and_grads(model: CnnModel, x: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy loss and gradients for every parameter tensor."""
    acts, caches = _forward_pass(model, x)
    loss, dlogits = layers.softmax_cross_entropy(acts["logits"], labels)
    grads = {}
    dfeat, grads["fc_w"], grads["fc_b"] = layers.fc_backward(
        dlogits, model.fc_w, caches["fc"])
    dr3 = layers.relu_backward(dfeat.reshape(caches["feat_shape"]), caches["r3"])
    dp2, grads["conv3_w"], grads["conv3_b"] = layers.conv_backward(
        dr3, model.conv3_w, caches["c3"])
    dr2 = layers.maxpool_backward(dp2, caches["p2"])
    dc2 = layers.relu_backward(dr2, caches["r2"])
    dp1, grads["conv2_w"], grads["conv2_b"] = layers.conv_backward(
        dc2, model.conv2_w, caches["c2"])
    dr1 = layers.maxpool_backward(dp1, caches["p1"])
    dc1 = layers.relu_backward(dr1, caches["r1"])
    _, grads["conv1_w"], grads["conv1_b"] = layers.conv_backward(
        dc1, model.conv1_w, caches["c1"])
    return loss, grads


def backward_and_step(model: CnnModel, batch_x: np.ndarray,
                      batch_y: np.ndarray, lr: float) -> float:
    """One SGD update in place; returns the pre-update loss."""
    if len(batch_x) == 0:
        raise ValueError("empty batch")
    loss, grads = loss_and_grads(model, batch_x, batch_y)
    for name in model.param_names():
        getattr(model, name)[...] -= lr * grads[name]
    return loss


def predict(model: CnnModel, x: np.ndarray) -> np.ndarray | int:
    """Argmax class index (per patch for a batch input)."""
    probs = forward(model, x)
    if probs.ndim == 1:
        return int(np.argmax(probs))
    return np.argmax(probs, axis=1)


def save_model(model: CnnModel, path: str | Path) -> None:
    """Versioned little-endian binary: magic, then (rank, dims, float64 data)
    per tensor in fixed order, data_mean last."""
    chunks = [MAGIC]
    for name in _TENSOR_ORDER:
        t = np.ascontiguousarray(getattr(model, name), dtype="<f8")
        chunks.append(struct.pack("<I", t.ndim))
        chunks.append(struct.pack(f"<{t.ndim}I", *t.shape))
        chunks.append(t.tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_model(path: str | Path) -> CnnModel:
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise ValueError("not a recognized model file")
    offset = len(MAGIC)
    tensors = {}
    for name in _TENSOR_ORDER:
        (rank,) = struct.unpack_from("<I", data, offset)
        offset += 4
        dims = struct.unpack_from(f"<{rank}I", data, offset)
        offset += 4 * rank
        count = int(np.prod(dims))
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=offset)
        offset += 8 * count
        tensors[name] = arr.reshape(dims).copy()
    if offset != len(data):
        raise ValueError("trailing bytes in model file")
    return CnnModel(**tensors)
