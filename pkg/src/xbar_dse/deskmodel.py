"""Bundled desk-scale classification workload.

A procedurally generated, seed-fixed 10-class dataset (64 non-negative
features per sample) and a small two-layer MLP trained on it with plain
softmax/cross-entropy gradient descent.  Everything is deterministic, so
the artifacts can be regenerated bit-identically from this module alone
(scripts/make_desk_model.py writes them to disk).
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import ConvergenceError
from .inference import LayerSpec, MlpModel

N_FEATURES = 64
N_CLASSES = 10
N_SAMPLES = 2000
DATASET_SEED = 2024
MODEL_SEED = 7
TRAIN_FRACTION = 0.8


def make_desk_dataset(n_samples: int = N_SAMPLES, seed: int = DATASET_SEED):
    """Class-prototype clusters with additive noise, mapped into [0.5, 1].

    The affine map into the upper half of the range mimics the dense
    mid-scale statistics of natural-image inputs: most streamed bit planes
    carry many active rows, so analog evaluation exercises heavily loaded
    columns rather than near-empty ones.  Features are strictly positive,
    which keeps the streamed sign bit plane empty for the first layer."""
    rng = np.random.default_rng(seed)
    prototypes = rng.uniform(0.0, 1.0, (N_CLASSES, N_FEATURES))
    labels = rng.integers(0, N_CLASSES, n_samples)
    noise = rng.normal(0.0, 0.5, (n_samples, N_FEATURES))
    features = 0.5 + 0.5 * np.clip(prototypes[labels] + noise, 0.0, 1.0)
    return features, labels


def _split(features, labels):
    n_train = round(TRAIN_FRACTION * len(labels))
    return ((features[:n_train], labels[:n_train]),
            (features[n_train:], labels[n_train:]))


def train_desk_model(features, labels, hidden: int = 64, epochs: int = 300,
                     learning_rate: float = 0.1, momentum: float = 0.9,
                     seed: int = MODEL_SEED) -> MlpModel:
    """Full-batch momentum gradient descent on softmax cross-entropy."""
    rng = np.random.default_rng(seed)
    n, d = features.shape
    w1 = rng.normal(0.0, np.sqrt(2.0 / d), (d, hidden))
    b1 = np.zeros(hidden)
    w2 = rng.normal(0.0, np.sqrt(2.0 / hidden), (hidden, N_CLASSES))
    b2 = np.zeros(N_CLASSES)
    onehot = np.eye(N_CLASSES)[labels]
    vel = [np.zeros_like(p) for p in (w1, b1, w2, b2)]
    for _ in range(epochs):
        h = np.maximum(features @ w1 + b1, 0.0)
        z = h @ w2 + b2
        z -= z.max(axis=1, keepdims=True)
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        dz = (p - onehot) / n
        dw2 = h.T @ dz
        db2 = dz.sum(axis=0)
        dh = dz @ w2.T
        dh[h <= 0] = 0.0
        dw1 = features.T @ dh
        db1 = dh.sum(axis=0)
        for v, p_, g in zip(vel, (w1, b1, w2, b2), (dw1, db1, dw2, db2)):
            v *= momentum
            v -= learning_rate * g
            p_ += v
        if not np.isfinite(w1).all():
            raise ConvergenceError("desk-model training diverged")
    return MlpModel([LayerSpec(w1, b1, "relu"), LayerSpec(w2, b2, "none")])


@lru_cache(maxsize=1)
def desk_workload():
    """(model, train split, test split) for the bundled workload."""
    features, labels = make_desk_dataset()
    train, test = _split(features, labels)
    model = train_desk_model(*train)
    return model, train, test


def desk_model() -> MlpModel:
    return desk_workload()[0]


def desk_test_set():
    return desk_workload()[2]


def write_desk_artifacts(directory) -> dict:
    """Emit the bundled model and the held-out test split as files."""
    from pathlib import Path

    from .inference import save_dataset, save_model

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    model, _, (feat, lab) = desk_workload()
    model_path = directory / "desk_model.json"
    data_path = directory / "desk_dataset.json"
    save_model(model_path, model)
    save_dataset(data_path, feat, lab)
    return {"model": str(model_path), "dataset": str(data_path)}
