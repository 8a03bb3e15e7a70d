"""Dataset generation, IDX loading, Dirichlet partitioning, and class statistics.

Everything here is a pure function of its arguments (seeds included); there
is no module-level random state.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError, ParameterError, PartitionError

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801

MAX_PARTITION_ATTEMPTS = 100


@dataclass
class Dataset:
    """A labelled sample universe: features of shape (n, F), labels in [0, C)."""

    features: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[1] < 1:
            raise ParameterError("features must be a (n, F) array with F >= 1")
        if len(self.features) != len(self.labels):
            raise ParameterError("features and labels must have equal length")
        if self.n_classes < 1:
            raise ParameterError("n_classes must be >= 1")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise ParameterError(f"labels must lie in [0, {self.n_classes})")

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return len(self.labels)


@dataclass
class ClientDataset:
    """One client's view of the shared dataset, as index positions."""

    client_id: int
    indices: np.ndarray
    test_indices: np.ndarray | None = None  # unused when a global test split is in play

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        if len(self.indices) < 1:
            raise ParameterError(f"client {self.client_id} has no samples")

    def __len__(self) -> int:
        return len(self.indices)


@dataclass
class ClassDistribution:
    """Per-class sample proportions plus the sample count they were taken over."""

    proportions: np.ndarray
    count: int

    def __post_init__(self):
        self.proportions = np.asarray(self.proportions, dtype=np.float64)
        if self.proportions.ndim != 1:
            raise ParameterError("proportions must be a vector")
        if self.count < 1:
            raise ParameterError("count must be >= 1")
        if np.any(self.proportions < 0):
            raise ParameterError("proportions must be non-negative")
        if abs(float(self.proportions.sum()) - 1.0) > 1e-9:
            raise ParameterError("proportions must sum to 1")


def generate_synthetic(classes: int, features: int, per_class: int, spread: float, seed: int) -> Dataset:
    """Sample class-conditional Gaussian blobs around fixed one-hot corners.

    The class means depend only on (classes, features): class c sits at the
    unit vector along axis c mod features, scaled up by one for every full
    cycle through the axes. The seed drives only the noise, whose
    per-dimension standard deviation is `spread` (zero is allowed and yields
    every sample exactly at its class mean).

    Samples are emitted class-major: all of class 0, then class 1, etc.
    """
    if classes < 2 or features < 2:
        raise ParameterError("need classes >= 2 and features >= 2")
    if per_class < 1:
        raise ParameterError("per_class must be >= 1")
    if spread < 0:
        raise ParameterError("spread must be >= 0")
    means = np.zeros((classes, features))
    for c in range(classes):
        means[c, c % features] = 1.0 + (c // features)
    labels = np.repeat(np.arange(classes, dtype=np.int64), per_class)
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((classes * per_class, features))
    return Dataset(means[labels] + spread * noise, labels, classes)


def _read_idx(path) -> tuple[tuple[int, ...], int, np.ndarray]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise DataFormatError(f"{path}: truncated header")
    magic = struct.unpack(">I", raw[:4])[0]
    if magic not in (IDX_IMAGE_MAGIC, IDX_LABEL_MAGIC):
        raise DataFormatError(f"{path}: bad magic 0x{magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise DataFormatError(f"{path}: truncated dimension header")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    count = int(np.prod(dims)) if dims else 0
    body = np.frombuffer(raw, dtype=np.uint8, offset=header)
    if len(body) != count:
        raise DataFormatError(f"{path}: expected {count} data bytes, found {len(body)}")
    return dims, magic, body


def load_idx(images_path, labels_path, keep_classes) -> Dataset:
    """Load a big-endian IDX image/label pair, keeping only the listed classes.

    Kept labels are remapped to 0..C-1 in `keep_classes` order and pixel
    values are scaled from bytes to [0, 1]. Images are flattened row-major,
    so F = rows * cols.
    """
    keep = [int(c) for c in keep_classes]
    if len(keep) < 1 or len(set(keep)) != len(keep):
        raise ParameterError("keep_classes must be non-empty and free of duplicates")
    img_dims, img_magic, img_bytes = _read_idx(images_path)
    lab_dims, lab_magic, lab_bytes = _read_idx(labels_path)
    if img_magic != IDX_IMAGE_MAGIC:
        raise DataFormatError(f"{images_path}: not an image file (magic 0x{img_magic:08x})")
    if lab_magic != IDX_LABEL_MAGIC:
        raise DataFormatError(f"{labels_path}: not a label file (magic 0x{lab_magic:08x})")
    if img_dims[0] != lab_dims[0]:
        raise DataFormatError(f"image count {img_dims[0]} != label count {lab_dims[0]}")
    images = img_bytes.reshape(img_dims[0], -1).astype(np.float64) / 255.0
    labels = lab_bytes.astype(np.int64)
    mask = np.isin(labels, keep)
    if not mask.any():
        raise DataFormatError("no samples carry any of the requested classes")
    remap = {orig: new for new, orig in enumerate(keep)}
    new_labels = np.array([remap[v] for v in labels[mask]], dtype=np.int64)
    return Dataset(images[mask], new_labels, len(keep))


def stratified_split(dataset: Dataset, test_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seed-determined train/test index split, stratified per class."""
    if not 0.0 < test_fraction < 1.0:
        raise ParameterError("test_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    train_parts, test_parts = [], []
    for c in range(dataset.n_classes):
        idx = np.flatnonzero(dataset.labels == c)
        perm = rng.permutation(idx)
        n_test = int(round(test_fraction * len(idx)))
        test_parts.append(perm[:n_test])
        train_parts.append(perm[n_test:])
    train = np.sort(np.concatenate(train_parts))
    test = np.sort(np.concatenate(test_parts))
    return train, test


def dirichlet_partition(
    dataset: Dataset,
    n_clients: int,
    alpha: float,
    seed: int,
    indices: np.ndarray | None = None,
) -> list[ClientDataset]:
    """Allocate samples to clients using one Dirichlet(alpha) draw per class.

    For every class, a simplex point drawn via normalized gamma variates
    decides how that class's (shuffled) samples are sliced across clients.
    Smaller alpha gives more skewed slices. If any client ends up empty the
    entire partition is redrawn from seed + attempt, up to
    MAX_PARTITION_ATTEMPTS times, preserving the Dirichlet marginals.

    `indices` restricts the partition to a sample pool (normally the train
    split); by default the whole dataset is partitioned.
    """
    if n_clients < 1:
        raise ParameterError("n_clients must be >= 1")
    if alpha <= 0:
        raise ParameterError("alpha must be > 0")
    pool = np.arange(len(dataset), dtype=np.int64) if indices is None else np.asarray(indices, dtype=np.int64)
    pool_labels = dataset.labels[pool]
    for attempt in range(MAX_PARTITION_ATTEMPTS):
        rng = np.random.default_rng(seed + attempt)
        assigned: list[list[np.ndarray]] = [[] for _ in range(n_clients)]
        ok = True
        for c in range(dataset.n_classes):
            class_pool = rng.permutation(pool[pool_labels == c])
            if len(class_pool) == 0:
                continue
            gammas = rng.gamma(alpha, 1.0, n_clients)
            total = gammas.sum()
            if not np.isfinite(total) or total <= 0.0:
                ok = False  # pathological underflow for tiny alpha; redraw
                break
            shares = gammas / total
            cuts = np.floor(np.cumsum(shares)[:-1] * len(class_pool)).astype(int)
            for client_id, piece in enumerate(np.split(class_pool, cuts)):
                if len(piece):
                    assigned[client_id].append(piece)
        if not ok:
            continue
        sizes = [sum(len(p) for p in parts) for parts in assigned]
        if min(sizes) >= 1:
            return [
                ClientDataset(client_id, np.sort(np.concatenate(parts)))
                for client_id, parts in enumerate(assigned)
            ]
    raise PartitionError(
        f"could not give every one of {n_clients} clients a sample after "
        f"{MAX_PARTITION_ATTEMPTS} attempts (alpha={alpha})"
    )


def class_distribution(client: ClientDataset, dataset: Dataset) -> ClassDistribution:
    """Per-class proportions of one client's samples."""
    if len(client.indices) == 0:
        raise ParameterError("client has no samples")
    labels = dataset.labels[client.indices]
    counts = np.bincount(labels, minlength=dataset.n_classes).astype(np.float64)
    return ClassDistribution(counts / len(labels), int(len(labels)))
