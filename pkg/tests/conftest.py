"""Shared fixtures; the trained classifier is expensive and built once."""

import time

import pytest

from dishstack.cnn.train import train
from dishstack.config import CnnConfig
from dishstack.synth import make_patch_dataset


@pytest.fixture(scope="session")
def cnn_bundle():
    """Classifier trained on 800 synthetic patches + a disjoint 200-patch
    test set (scene seeds 0.. vs 5000.. never overlap)."""
    train_set = make_patch_dataset(800, seed=0)
    test_set = make_patch_dataset(200, seed=5000)
    cfg = CnnConfig(epochs=6, seed=0)
    start = time.monotonic()
    model, logs = train(train_set, cfg)
    elapsed = time.monotonic() - start
    return {"model": model, "logs": logs, "train_set": train_set,
            "test_set": test_set, "train_seconds": elapsed, "config": cfg}
