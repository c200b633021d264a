"""Synthetic labeling tasks and evaluation metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ModelShapeError, SpecError
from .model import ObservedSequence, check_labeling


@dataclass(frozen=True)
class LabeledDataset:
    """Sequences with gold labelings (0-based) over a shared label space.

    ``shapes`` optionally records ``(height, width)`` for grid items so label
    maps can be exported as matrices.
    """

    items: tuple
    n_labels: int
    shapes: tuple = field(default=())

    def __post_init__(self):
        items = tuple((seq, np.asarray(y, dtype=np.int64)) for seq, y in self.items)
        dims = set()
        for seq, y in items:
            check_labeling(y, seq.n_nodes, self.n_labels)
            dims.add((seq.positions.shape[1], seq.observations.shape[1]))
        if len(dims) > 1:
            raise ModelShapeError(f"items disagree on feature dimensions: {sorted(dims)}")
        object.__setattr__(self, "items", items)
        object.__setattr__(self, "shapes", tuple(self.shapes))

    def __len__(self):
        return len(self.items)

    def __eq__(self, other):
        if not isinstance(other, LabeledDataset):
            return NotImplemented
        return (
            self.n_labels == other.n_labels
            and self.shapes == other.shapes
            and len(self.items) == len(other.items)
            and all(
                s1 == s2 and np.array_equal(y1, y2)
                for (s1, y1), (s2, y2) in zip(self.items, other.items)
            )
        )

    def subset(self, idx) -> "LabeledDataset":
        idx = list(idx)
        shapes = tuple(self.shapes[i] for i in idx) if self.shapes else ()
        return LabeledDataset(tuple(self.items[i] for i in idx), self.n_labels, shapes)

    @property
    def obs_dim(self) -> int:
        return self.items[0][0].observations.shape[1]


@dataclass(frozen=True)
class SyntheticSpec:
    """Voronoi-region labeling task on a chain (``height == 1``) or grid."""

    width: int
    height: int = 1
    n_labels: int = 2
    noise_sigma: float = 0.5
    blob_count: int = 2
    seed: int = 0
    items: int = 1
    topology: str = "grid"

    def __post_init__(self):
        if self.topology not in ("grid", "chain"):
            raise SpecError(f"unknown topology {self.topology!r}")
        if self.topology == "chain" and self.height != 1:
            raise SpecError("a chain has height 1")
        if self.width < 1 or self.height < 1:
            raise SpecError("dimensions must be >= 1")
        if self.n_labels < 2:
            raise SpecError("need at least two labels")
        if not self.noise_sigma > 0:
            raise SpecError("noise_sigma must be > 0")
        if self.blob_count < 1:
            raise SpecError("blob_count must be >= 1")
        if self.blob_count > self.width * self.height:
            raise SpecError(
                f"blob_count {self.blob_count} exceeds node count {self.width * self.height}"
            )
        if self.items < 1:
            raise SpecError("items must be >= 1")

    @classmethod
    def chain(cls, length: int, **kw) -> "SyntheticSpec":
        return cls(width=length, height=1, topology="chain", **kw)

    @classmethod
    def grid(cls, width: int, height: int, **kw) -> "SyntheticSpec":
        return cls(width=width, height=height, topology="grid", **kw)


def _positions(spec: SyntheticSpec) -> np.ndarray:
    if spec.topology == "chain":
        return np.arange(spec.width, dtype=float)[:, None]
    rows, cols = np.divmod(np.arange(spec.width * spec.height), spec.width)
    return np.column_stack([rows, cols]).astype(float)


def gen_synthetic(spec: SyntheticSpec) -> LabeledDataset:
    """Spatially coherent labels with one-hot-plus-Gaussian observations.

    Each item draws ``blob_count`` distinct seed nodes.  The first
    ``min(K, blob_count)`` seeds get distinct labels, the rest random ones;
    every node takes the label of its nearest seed.
    """
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    pos = _positions(spec)
    n = pos.shape[0]
    items = []
    for _ in range(spec.items):
        seeds = rng.choice(n, size=spec.blob_count, replace=False)
        seed_labels = np.concatenate(
            [rng.permutation(spec.n_labels), rng.integers(0, spec.n_labels, size=spec.blob_count)]
        )[: spec.blob_count]
        d2 = ((pos[:, None, :] - pos[seeds][None, :, :]) ** 2).sum(axis=-1)
        y = seed_labels[np.argmin(d2, axis=1)]
        obs = np.eye(spec.n_labels)[y] + rng.normal(0.0, spec.noise_sigma, size=(n, spec.n_labels))
        items.append((ObservedSequence(pos, obs), y))
    shapes = ((spec.height, spec.width),) * spec.items
    return LabeledDataset(tuple(items), spec.n_labels, shapes)


def accuracy(pred, gold) -> float:
    pred = np.asarray(pred)
    gold = np.asarray(gold)
    if pred.shape != gold.shape:
        raise ModelShapeError(f"labelings differ in length: {pred.shape} vs {gold.shape}")
    if pred.size == 0:
        return 1.0
    return float((pred == gold).mean())


def neighbor_agreement(labels: np.ndarray) -> float:
    """Fraction of 4-neighbor pairs in a 2-d label map that share a label."""
    labels = np.asarray(labels)
    same = [(labels[1:, :] == labels[:-1, :]).ravel(), (labels[:, 1:] == labels[:, :-1]).ravel()]
    same = np.concatenate(same)
    return float(same.mean()) if same.size else 1.0
