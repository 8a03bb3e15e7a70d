"""Shared builders for the test suite."""

import struct

import numpy as np
import pytest

from fedsim.data import ClassDistribution
from fedsim.model import ClassicalParams, ClientUpdate, HybridParams, QuantumParams


def write_idx_pair(directory, images, labels):
    """Write a (n, rows, cols) uint8 image stack and labels as an IDX pair."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, rows, cols = images.shape
    images_path = directory / "images.idx"
    labels_path = directory / "labels.idx"
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", 0x00000803, n, rows, cols))
        fh.write(images.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", 0x00000801, n))
        fh.write(labels.tobytes())
    return images_path, labels_path


def make_update(client_id, angles, count, classical=None, n_classes=2, layers=None):
    """Minimal ClientUpdate with the given quantum angles and sample count."""
    angles = np.asarray(angles, dtype=np.float64)
    if classical is None:
        classical = ClassicalParams(
            np.zeros((1, 2)), np.zeros(1), np.zeros((1, 1)), np.zeros(1)
        )
    qubits = 1
    layers = len(angles) if layers is None else layers
    proportions = np.full(n_classes, 1.0 / n_classes)
    return ClientUpdate(
        client_id,
        HybridParams(classical, QuantumParams(angles, qubits, layers)),
        ClassDistribution(proportions, count),
        0.0,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
