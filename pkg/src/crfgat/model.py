"""Core data types of the fully connected pairwise CRF and its Gibbs energy.

Labels are 0-based everywhere inside the package.  They are shifted to
1-based only at the I/O boundary (see :mod:`crfgat.io`).

Marginal fields (N x K row-stochastic tables), potential fields (N x K
real tables) and labelings (length-N integer vectors) are plain numpy
arrays; the helpers below validate them where it matters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ModelShapeError

PROB_CLAMP = 1e-12


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class ObservedSequence:
    """Node features ``f_i = (p_i, X_i)``: spatial positions and observations."""

    positions: np.ndarray
    observations: np.ndarray

    def __post_init__(self):
        p = _frozen(self.positions)
        x = _frozen(self.observations)
        if p.ndim == 1:
            p = _frozen(p[:, None])
        if x.ndim == 1:
            x = _frozen(x[:, None])
        if p.ndim != 2 or x.ndim != 2:
            raise ModelShapeError("positions and observations must be 2-d tables")
        if p.shape[0] != x.shape[0]:
            raise ModelShapeError(
                f"positions have {p.shape[0]} rows but observations have {x.shape[0]}"
            )
        if p.shape[0] < 1:
            raise ModelShapeError("a sequence needs at least one node")
        if not (np.isfinite(p).all() and np.isfinite(x).all()):
            raise ModelShapeError("features must be finite")
        object.__setattr__(self, "positions", p)
        object.__setattr__(self, "observations", x)

    @property
    def n_nodes(self) -> int:
        return self.positions.shape[0]

    @property
    def features(self) -> np.ndarray:
        """Flattened feature vectors, one row per node."""
        return np.hstack([self.positions, self.observations])

    def __eq__(self, other):
        if not isinstance(other, ObservedSequence):
            return NotImplemented
        return np.array_equal(self.positions, other.positions) and np.array_equal(
            self.observations, other.observations
        )

    @classmethod
    def blank(cls, n: int) -> "ObservedSequence":
        """Sequence of ``n`` nodes on a line with empty-ish (zero) observations."""
        return cls(np.arange(n, dtype=float)[:, None], np.zeros((n, 1)))


@dataclass(frozen=True)
class CompatibilityMatrix:
    mu: np.ndarray
    symmetric: bool = True

    def __post_init__(self):
        mu = _frozen(self.mu)
        if mu.ndim != 2 or mu.shape[0] != mu.shape[1]:
            raise ModelShapeError(f"compatibility must be square, got {mu.shape}")
        if mu.shape[0] < 2:
            raise ModelShapeError("need at least two labels")
        if not np.isfinite(mu).all():
            raise ModelShapeError("compatibility entries must be finite")
        if self.symmetric and not np.array_equal(mu, mu.T):
            raise ModelShapeError("compatibility flagged symmetric but mu != mu.T")
        object.__setattr__(self, "mu", mu)

    @property
    def n_labels(self) -> int:
        return self.mu.shape[0]

    @classmethod
    def potts(cls, k: int, weight: float = 1.0) -> "CompatibilityMatrix":
        """Penalize disagreeing labels by ``weight``; agreement costs nothing."""
        return cls(weight * (1.0 - np.eye(k)), symmetric=True)

    def __eq__(self, other):
        if not isinstance(other, CompatibilityMatrix):
            return NotImplemented
        return self.symmetric == other.symmetric and np.array_equal(self.mu, other.mu)


@dataclass(frozen=True)
class CrfModel:
    """A complete fully connected pairwise CRF instance.

    ``unary`` holds the N x K potentials ``psi_u``; the pairwise potential
    between nodes i and j is ``mu[y_i, y_j] * k(f_i, f_j)``.
    """

    sequence: ObservedSequence
    unary: np.ndarray
    compatibility: CompatibilityMatrix
    kernel: object  # KernelSpec, see crfgat.kernels
    _kmat: np.ndarray = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        from .kernels import validate_spec

        u = _frozen(self.unary)
        if u.ndim != 2:
            raise ModelShapeError("unary potentials must be an N x K table")
        if not np.isfinite(u).all():
            raise ModelShapeError("unary potentials must be finite")
        n, k = u.shape
        if n != self.sequence.n_nodes:
            raise ModelShapeError(
                f"unary has {n} rows but the sequence has {self.sequence.n_nodes} nodes"
            )
        if k != self.compatibility.n_labels:
            raise ModelShapeError(
                f"unary has {k} labels but compatibility is {self.compatibility.mu.shape}"
            )
        problems = validate_spec(self.kernel, self.sequence)
        if problems:
            raise ModelShapeError("; ".join(problems))
        object.__setattr__(self, "unary", u)

    @property
    def n_nodes(self) -> int:
        return self.unary.shape[0]

    @property
    def n_labels(self) -> int:
        return self.unary.shape[1]

    @property
    def mu(self) -> np.ndarray:
        return self.compatibility.mu

    def kernel_matrix(self) -> np.ndarray:
        """Cached N x N attention matrix with zero diagonal."""
        if self._kmat is None:
            from .kernels import kernel_matrix

            km = kernel_matrix(self.sequence, self.kernel)
            km.flags.writeable = False
            object.__setattr__(self, "_kmat", km)
        return self._kmat

    def __eq__(self, other):
        if not isinstance(other, CrfModel):
            return NotImplemented
        return (
            self.sequence == other.sequence
            and np.array_equal(self.unary, other.unary)
            and self.compatibility == other.compatibility
            and self.kernel == other.kernel
        )


def check_labeling(y, n_nodes: int, n_labels: int) -> np.ndarray:
    y = np.asarray(y)
    if y.shape != (n_nodes,):
        raise ModelShapeError(f"labeling has shape {y.shape}, expected ({n_nodes},)")
    if not np.issubdtype(y.dtype, np.integer):
        raise ModelShapeError("labeling entries must be integers")
    if y.size and (y.min() < 0 or y.max() >= n_labels):
        raise ModelShapeError(f"labels must lie in 0..{n_labels - 1}")
    return y


def check_marginals(q, atol: float = 1e-12) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.ndim != 2:
        raise ModelShapeError("marginal field must be an N x K table")
    if (q < 0).any() or (q > 1).any():
        raise ModelShapeError("marginal entries must lie in [0, 1]")
    if not np.allclose(q.sum(axis=1), 1.0, rtol=0, atol=atol):
        raise ModelShapeError("marginal rows must sum to 1")
    return q


def gibbs_energy(y, model: CrfModel) -> float:
    """Energy ``sum_i psi_u(y_i) + sum_{i<j} mu(y_i, y_j) k(f_i, f_j)``.

    Pairs are visited once each, in ascending lexicographic ``(i, j)`` order.
    """
    y = check_labeling(y, model.n_nodes, model.n_labels)
    n = model.n_nodes
    unary = model.unary[np.arange(n), y].sum()
    iu, ju = np.triu_indices(n, k=1)
    pair = (model.mu[y[iu], y[ju]] * model.kernel_matrix()[iu, ju]).sum()
    return float(unary + pair)


def unary_from_classifier(probs, eps: float = PROB_CLAMP) -> np.ndarray:
    """Unary potentials ``-log max(p, eps)`` from per-node label distributions."""
    probs = np.asarray(probs, dtype=float)
    return -np.log(np.maximum(probs, eps))


def distribution_from_potentials(psi) -> np.ndarray:
    """Row-wise ``softmax(-psi)``, stabilized by subtracting the row minimum."""
    psi = np.asarray(psi, dtype=float)
    z = -(psi - psi.min(axis=-1, keepdims=True))
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)
