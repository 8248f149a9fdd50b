"""
Synthetic and CSV datasets for desk-scale training runs.
"""

import csv
import logging
from dataclasses import dataclass, asdict
from typing import Iterator, Optional, Tuple

import numpy as np
from sklearn.datasets import make_blobs, make_moons

from .errors import ConfigError, ParseError
from .numerics import Rng

logger = logging.getLogger('lmht.datasets')

DATASET_KINDS = ('gaussian-blobs', 'two-moons', 'csv')

# Blob centres sit on a circle of this radius; clusters have unit-free std 0.5.
BLOB_RADIUS = 2.5
BLOB_STD = 0.5
MOONS_NOISE = 0.1


@dataclass(frozen=True)
class SyntheticDataset:
    """
    Dataset recipe; the same recipe always yields the same samples

    Args:
        kind: 'gaussian-blobs', 'two-moons' or 'csv'
        n_samples: Number of points to generate (ignored for csv)
        n_classes: Number of classes (two-moons needs 2; inferred for csv)
        seed: Generator seed
        csv_path: File to read when kind is 'csv'
    """
    kind: str = 'gaussian-blobs'
    n_samples: int = 600
    n_classes: int = 3
    seed: int = 7
    csv_path: Optional[str] = None

    def __post_init__(self):
        if self.kind not in DATASET_KINDS:
            raise ConfigError(f"Unsupported dataset kind: {self.kind}")
        if self.kind == 'csv' and not self.csv_path:
            raise ConfigError("a csv dataset needs csv_path")
        if self.kind != 'csv' and self.n_samples < self.n_classes:
            raise ConfigError(f"need at least one sample per class, got {self.n_samples} for {self.n_classes}")
        if self.kind == 'two-moons' and self.n_classes != 2:
            raise ConfigError("two-moons has exactly 2 classes")

    def to_dict(self):
        return asdict(self)


def read_csv(path: str) -> Tuple[np.ndarray, np.ndarray]:
    """
    Parse comma-separated float features with an integer label in the last column

    Raises:
        ParseError: On a malformed row, with its 1-based line number
    """
    features = []
    labels = []
    with open(path, 'r', newline='') as f:
        reader = csv.reader(f)
        for row in reader:
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < 2:
                raise ParseError(f"row needs at least one feature and a label: {row}", reader.line_num)
            try:
                values = [float(cell) for cell in row[:-1]]
                label = int(row[-1])
            except ValueError:
                raise ParseError(f"malformed row {row}", reader.line_num)
            if features and len(values) != len(features[0]):
                raise ParseError(f"expected {len(features[0])} features, got {len(values)}", reader.line_num)
            if label < 0:
                raise ParseError(f"negative label {label}", reader.line_num)
            features.append(values)
            labels.append(label)
    if not features:
        raise ParseError(f"{path} holds no samples", 0)
    return np.array(features, dtype=np.float64), np.array(labels, dtype=np.int64)


def make_dataset(spec: SyntheticDataset) -> Tuple[np.ndarray, np.ndarray]:
    """
    Materialize a dataset recipe

    Returns:
        tuple: (features [n x d] float64, labels [n] int64)
    """
    random_state = spec.seed % (2 ** 32)
    if spec.kind == 'gaussian-blobs':
        angles = 2.0 * np.pi * np.arange(spec.n_classes) / spec.n_classes
        centers = BLOB_RADIUS * np.stack([np.cos(angles), np.sin(angles)], axis=1)
        features, labels = make_blobs(n_samples=spec.n_samples, centers=centers,
                                      cluster_std=BLOB_STD, random_state=random_state)
    elif spec.kind == 'two-moons':
        features, labels = make_moons(n_samples=spec.n_samples, noise=MOONS_NOISE,
                                      random_state=random_state)
    else:
        features, labels = read_csv(spec.csv_path)
    logger.debug(f"Dataset {spec.kind}: {features.shape[0]} samples, {features.shape[1]} features")
    return np.asarray(features, dtype=np.float64), np.asarray(labels, dtype=np.int64)


def minibatches(n: int, batch_size: int, rng: Rng) -> Iterator[np.ndarray]:
    """Shuffled index batches covering range(n) once"""
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]
