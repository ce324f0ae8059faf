"""Synthetic dataset generators, CSV ingestion, and mini-batch partitioning.

Generators produce balanced labels (within one sample per class) and are pure
functions of their spec, seed included. The optional OOD set is drawn from the
test distribution with translated class means and inflated noise, standing in
for corruption-style distribution shift.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ValidationError
from ..linalg import Rng
from ..model import Batch, one_hot

GENERATORS = ("gaussian_blobs", "two_arcs", "spirals", "csv_file")


@dataclass(frozen=True)
class DatasetSpec:
    generator: str = "gaussian_blobs"
    n: int = 1024
    d: int = 2
    c: int = 2
    noise: float = 0.5
    seed: int = 0
    train_frac: float = 0.8
    ood_translation: float = 0.0
    ood_noise_mult: float = 1.0
    path: str | None = None  # csv_file generator

    def __post_init__(self):
        if self.generator not in GENERATORS:
            raise ValidationError(f"unsupported generator {self.generator!r}")
        if self.generator != "csv_file":
            if self.n < self.c:
                raise ValidationError("need at least one sample per class")
            if not 0.0 < self.train_frac <= 1.0:
                raise ValidationError("train_frac must be in (0, 1]")
            if self.noise < 0:
                raise ValidationError("noise must be >= 0")

    @property
    def has_ood(self) -> bool:
        return self.ood_translation != 0.0 or self.ood_noise_mult != 1.0


@dataclass
class Dataset:
    """Train/test split (plus optional OOD set) with one-hot targets."""

    train_inputs: np.ndarray
    train_labels: np.ndarray
    test_inputs: np.ndarray
    test_labels: np.ndarray
    n_classes: int
    ood_inputs: np.ndarray | None = None
    ood_labels: np.ndarray | None = None
    spec: DatasetSpec | None = None

    @property
    def dim(self) -> int:
        return self.train_inputs.shape[1]

    @property
    def n_train(self) -> int:
        return self.train_inputs.shape[0]

    def train_batch(self) -> Batch:
        return Batch(
            self.train_inputs,
            one_hot(self.train_labels, self.n_classes),
            np.arange(self.n_train),
        )

    def test_batch(self) -> Batch:
        return Batch(
            self.test_inputs,
            one_hot(self.test_labels, self.n_classes),
            np.arange(self.test_inputs.shape[0]),
        )

    def minibatches(self, batch_size: int, seed, drop_last: bool = False) -> list:
        """Seeded shuffle, then disjoint sequential slices of the train set.

        seed may be an integer or an Rng instance.
        """
        if batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {batch_size}")
        rng = seed if isinstance(seed, Rng) else Rng(seed)
        perm = rng.permutation(self.n_train)
        targets = one_hot(self.train_labels, self.n_classes)
        out = []
        for start in range(0, self.n_train, batch_size):
            idx = perm[start : start + batch_size]
            if drop_last and idx.size < batch_size:
                break
            out.append(Batch(self.train_inputs[idx], targets[idx], idx))
        return out


def _balanced_labels(n: int, c: int) -> np.ndarray:
    counts = [n // c + (1 if k < n % c else 0) for k in range(c)]
    return np.repeat(np.arange(c), counts)


def _blob_means(rng: Rng, d: int, c: int, radius: float = 4.0) -> np.ndarray:
    """Well-separated class means: random directions pushed apart."""
    means = rng.normal(c * d).reshape(c, d)
    means /= np.maximum(np.linalg.norm(means, axis=1, keepdims=True), 1e-12)
    return radius * means


def _shift_vector(spec: DatasetSpec, translation: float) -> np.ndarray:
    """Distribution-shift direction; a fixed function of the dataset seed so
    every split sees the same geometry."""
    if not translation:
        return np.zeros(spec.d)
    direction = Rng(spec.seed).split(9001).normal(spec.d)
    return translation * direction / np.linalg.norm(direction)


def _gaussian_blobs(spec: DatasetSpec, rng: Rng, n: int, translation: float = 0.0,
                    noise_mult: float = 1.0):
    labels = _balanced_labels(n, spec.c)
    # class means depend on the dataset seed only, never on the split
    means = _blob_means(Rng(spec.seed).split(9000), spec.d, spec.c)
    noise = rng.split(2).normal(n * spec.d).reshape(n, spec.d)
    x = means[labels] + _shift_vector(spec, translation) + spec.noise * noise_mult * noise
    return x, labels


def _two_arcs(spec: DatasetSpec, rng: Rng, n: int, translation: float = 0.0,
              noise_mult: float = 1.0):
    if spec.c != 2:
        raise ValidationError("two_arcs requires exactly 2 classes")
    if spec.d < 2:
        raise ValidationError("two_arcs requires dimension >= 2")
    labels = _balanced_labels(n, 2)
    t = rng.split(0).uniform(n) * np.pi
    x = np.zeros((n, spec.d))
    upper = labels == 0
    x[upper, 0] = np.cos(t[upper])
    x[upper, 1] = np.sin(t[upper])
    x[~upper, 0] = 1.0 - np.cos(t[~upper])
    x[~upper, 1] = 0.5 - np.sin(t[~upper])
    noise = rng.split(2).normal(n * spec.d).reshape(n, spec.d)
    x += spec.noise * noise_mult * noise
    x += _shift_vector(spec, translation)
    return x, labels


def _spirals(spec: DatasetSpec, rng: Rng, n: int, translation: float = 0.0,
             noise_mult: float = 1.0):
    if spec.d < 2:
        raise ValidationError("spirals requires dimension >= 2")
    labels = _balanced_labels(n, spec.c)
    t = rng.split(0).uniform(n)
    radius = 0.2 + 2.0 * t
    angle = 3.0 * np.pi * t + 2.0 * np.pi * labels / spec.c
    x = np.zeros((n, spec.d))
    x[:, 0] = radius * np.cos(angle)
    x[:, 1] = radius * np.sin(angle)
    noise = rng.split(2).normal(n * spec.d).reshape(n, spec.d)
    x += spec.noise * noise_mult * noise
    x += _shift_vector(spec, translation)
    return x, labels


_SYNTH = {
    "gaussian_blobs": _gaussian_blobs,
    "two_arcs": _two_arcs,
    "spirals": _spirals,
}


def generate_dataset(spec: DatasetSpec) -> Dataset:
    """Deterministic dataset from a spec; OOD set only when a shift is set."""
    if spec.generator == "csv_file":
        if not spec.path:
            raise ValidationError("csv_file generator requires a path")
        x, labels = load_csv(spec.path)
        c = int(labels.max()) + 1 if labels.size else 0
        n_train = int(round(spec.train_frac * x.shape[0]))
        return Dataset(
            train_inputs=x[:n_train],
            train_labels=labels[:n_train],
            test_inputs=x[n_train:],
            test_labels=labels[n_train:],
            n_classes=max(c, spec.c),
            spec=spec,
        )

    gen = _SYNTH[spec.generator]
    root = Rng(spec.seed)
    n_train = int(round(spec.train_frac * spec.n))
    n_test = spec.n - n_train
    x_tr, y_tr = gen(spec, root.split(100), n_train)
    if n_test > 0:
        x_te, y_te = gen(spec, root.split(200), n_test)
    else:
        x_te = np.zeros((0, spec.d))
        y_te = np.zeros(0, dtype=np.int64)
    ood_x = ood_y = None
    if spec.has_ood and n_test > 0:
        ood_x, ood_y = gen(
            spec, root.split(300), n_test,
            translation=spec.ood_translation, noise_mult=spec.ood_noise_mult,
        )
    return Dataset(
        train_inputs=x_tr,
        train_labels=y_tr,
        test_inputs=x_te,
        test_labels=y_te,
        n_classes=spec.c,
        ood_inputs=ood_x,
        ood_labels=ood_y,
        spec=spec,
    )


def load_csv(path) -> tuple:
    """Read the documented dataset format: header x0..x{D-1},label; 0-based
    integer labels."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[-1] != "label" or not header[0].startswith("x"):
            raise ValidationError(f"{path}: expected header x0,...,x{{D-1}},label")
        d = len(header) - 1
        rows = []
        labels = []
        for row in reader:
            if len(row) != d + 1:
                raise ValidationError(f"{path}: row width {len(row)} != {d + 1}")
            rows.append([float(v) for v in row[:d]])
            labels.append(int(row[d]))
    x = np.asarray(rows, dtype=np.float64).reshape(len(rows), d)
    return x, np.asarray(labels, dtype=np.int64)


def save_csv(path, inputs: np.ndarray, labels: np.ndarray) -> None:
    path = Path(path)
    d = inputs.shape[1]
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i}" for i in range(d)] + ["label"])
        for row, lab in zip(inputs, labels):
            writer.writerow([format(v, ".17g") for v in row] + [int(lab)])
