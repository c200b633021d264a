"""Affinity kernels ``k(f_i, f_j)`` used as (unnormalized) attention weights.

Three kernel families are supported:

* :class:`GaussianBilateral` -- a weighted sum of Gaussians over the squared
  spatial distance and the squared appearance distance.
* :class:`Polynomial` -- ``(scale * <f_i, f_j> + bias) ** degree`` on the
  flattened feature pair.
* :class:`Precomputed` -- an explicit N x N matrix.

Attention weights are never row-normalized.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import FeatureShapeError, ModelShapeError


@dataclass(frozen=True)
class GaussianComponent:
    omega: float
    sigma_spatial: float
    sigma_appearance: float


@dataclass(frozen=True)
class GaussianBilateral:
    components: tuple

    def __post_init__(self):
        comps = tuple(
            c if isinstance(c, GaussianComponent) else GaussianComponent(*map(float, c))
            for c in self.components
        )
        object.__setattr__(self, "components", comps)

    @property
    def omegas(self) -> np.ndarray:
        return np.array([c.omega for c in self.components])

    @classmethod
    def single(cls, omega=1.0, sigma_spatial=1.0, sigma_appearance=1.0):
        return cls((GaussianComponent(omega, sigma_spatial, sigma_appearance),))

    def scaled(self, t: float) -> "GaussianBilateral":
        """Same kernel with every weight multiplied by ``t``."""
        return GaussianBilateral(
            tuple(
                GaussianComponent(c.omega * t, c.sigma_spatial, c.sigma_appearance)
                for c in self.components
            )
        )


@dataclass(frozen=True)
class Polynomial:
    scale: float = 1.0
    bias: float = 1.0
    degree: int = 2


@dataclass(frozen=True)
class Precomputed:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float, copy=True)
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    def __eq__(self, other):
        if not isinstance(other, Precomputed):
            return NotImplemented
        return np.array_equal(self.matrix, other.matrix)

    def __hash__(self):
        return hash(self.matrix.tobytes())

    def scaled(self, t: float) -> "Precomputed":
        return Precomputed(self.matrix * t)

    @classmethod
    def constant(cls, n: int, value: float) -> "Precomputed":
        """Every distinct pair gets affinity ``value``."""
        return cls(value * (1.0 - np.eye(n)))


KernelSpec = Union[GaussianBilateral, Polynomial, Precomputed]


def _split(f):
    if isinstance(f, tuple) and len(f) == 2:
        return np.atleast_1d(np.asarray(f[0], float)), np.atleast_1d(np.asarray(f[1], float))
    raise FeatureShapeError("a feature must be a (position, observation) pair")


def eval_kernel(f_i, f_j, spec: KernelSpec) -> float:
    """Kernel value for two ``(position, observation)`` feature pairs."""
    p_i, x_i = _split(f_i)
    p_j, x_j = _split(f_j)
    if p_i.shape != p_j.shape or x_i.shape != x_j.shape:
        raise FeatureShapeError(
            f"feature dimensions differ: {p_i.shape}/{x_i.shape} vs {p_j.shape}/{x_j.shape}"
        )
    if isinstance(spec, GaussianBilateral):
        dp = ((p_i - p_j) ** 2).sum()
        dx = ((x_i - x_j) ** 2).sum()
        return float(_gaussian_sum(spec, dp, dx))
    if isinstance(spec, Polynomial):
        a = np.concatenate([p_i, x_i])
        b = np.concatenate([p_j, x_j])
        return float((spec.scale * (a * b).sum() + spec.bias) ** spec.degree)
    if isinstance(spec, Precomputed):
        raise TypeError("a precomputed kernel has no pointwise form; use kernel_matrix")
    raise TypeError(f"unknown kernel spec {spec!r}")


def _gaussian_sum(spec: GaussianBilateral, dp, dx):
    total = 0.0
    for c in spec.components:
        total = total + c.omega * np.exp(
            -dp / (2.0 * c.sigma_spatial**2) - dx / (2.0 * c.sigma_appearance**2)
        )
    return total


def squared_distances(seq) -> tuple[np.ndarray, np.ndarray]:
    """Pairwise squared spatial and appearance distances (exactly symmetric)."""
    p, x = seq.positions, seq.observations
    dp = ((p[:, None, :] - p[None, :, :]) ** 2).sum(axis=-1)
    dx = ((x[:, None, :] - x[None, :, :]) ** 2).sum(axis=-1)
    return dp, dx


def gaussian_terms(seq, spec: GaussianBilateral) -> np.ndarray:
    """Per-component unweighted Gaussians, shape (C, N, N), zero diagonal."""
    dp, dx = squared_distances(seq)
    out = np.empty((len(spec.components),) + dp.shape)
    for c, comp in enumerate(spec.components):
        out[c] = np.exp(
            -dp / (2.0 * comp.sigma_spatial**2) - dx / (2.0 * comp.sigma_appearance**2)
        )
        np.fill_diagonal(out[c], 0.0)
    return out


def kernel_matrix(seq, spec: KernelSpec) -> np.ndarray:
    """Dense N x N attention weights with the diagonal forced to zero."""
    n = seq.n_nodes
    if isinstance(spec, GaussianBilateral):
        dp, dx = squared_distances(seq)
        km = _gaussian_sum(spec, dp, dx) * np.ones_like(dp)
    elif isinstance(spec, Polynomial):
        f = seq.features
        km = (spec.scale * (f[:, None, :] * f[None, :, :]).sum(axis=-1) + spec.bias) ** spec.degree
    elif isinstance(spec, Precomputed):
        if spec.matrix.shape != (n, n):
            raise ModelShapeError(
                f"precomputed kernel is {spec.matrix.shape}, sequence has {n} nodes"
            )
        return np.array(spec.matrix)
    else:
        raise TypeError(f"unknown kernel spec {spec!r}")
    km = np.array(km, dtype=float)
    np.fill_diagonal(km, 0.0)
    return km


def validate_spec(spec: KernelSpec, seq=None) -> list[str]:
    """Return a list of human-readable problems; empty means the spec is usable."""
    problems = []
    if isinstance(spec, GaussianBilateral):
        if not spec.components:
            problems.append("gaussian kernel needs at least one component")
        for idx, c in enumerate(spec.components):
            if not np.isfinite(c.omega):
                problems.append(f"component {idx}: omega must be finite")
            if not c.sigma_spatial > 0:
                problems.append(f"component {idx}: sigma_spatial must be > 0")
            if not c.sigma_appearance > 0:
                problems.append(f"component {idx}: sigma_appearance must be > 0")
    elif isinstance(spec, Polynomial):
        if int(spec.degree) != spec.degree or spec.degree < 1:
            problems.append("polynomial degree must be a positive integer")
    elif isinstance(spec, Precomputed):
        m = spec.matrix
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            problems.append(f"precomputed matrix must be square, got {m.shape}")
        else:
            if not np.isfinite(m).all():
                problems.append("precomputed matrix has non-finite entries")
            if np.abs(m - m.T).max(initial=0.0) > 1e-12:
                problems.append("precomputed matrix is not symmetric")
            if np.any(np.diag(m) != 0):
                problems.append("precomputed matrix has a nonzero diagonal")
            if seq is not None and m.shape[0] != seq.n_nodes:
                problems.append(
                    f"precomputed matrix is {m.shape[0]}x{m.shape[0]} "
                    f"but the sequence has {seq.n_nodes} nodes"
                )
    else:
        problems.append(f"unknown kernel variant {type(spec).__name__}")
    return problems
