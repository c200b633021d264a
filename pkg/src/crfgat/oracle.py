"""Exact inference by enumeration, plus an MCMC sampler for comparison.

Both are deliberately simple: they evaluate the Gibbs energy straight from
its definition and share nothing with the mean-field code paths beyond the
model tables themselves.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass

import numpy as np

from .errors import InstanceTooLargeError
from .model import CrfModel, gibbs_energy

ENUMERATION_CAP = 2**24
_CHUNK = 1 << 14


@dataclass(frozen=True)
class ExactResult:
    log_z: float
    marginals: np.ndarray
    map_labeling: np.ndarray
    map_energy: float


class SamplerVariant(str, enum.Enum):
    GIBBS = "gibbs"
    METROPOLIS = "metropolis"


@dataclass(frozen=True)
class SamplerConfig:
    """Settings for :func:`gibbs_sample`.

    The chain is driven by numpy's PCG64 bit generator seeded with ``seed``,
    which gives the same stream on every platform.
    """

    sweeps: int = 10_000
    burn_in: int = 1_000
    seed: int = 0
    variant: SamplerVariant = SamplerVariant.GIBBS

    def __post_init__(self):
        if self.sweeps < 1 or self.burn_in < 0 or self.sweeps <= self.burn_in:
            raise ValueError("need sweeps > burn_in >= 0")
        object.__setattr__(self, "variant", SamplerVariant(self.variant))


def _check_cap(model: CrfModel, cap: int) -> int:
    total = model.n_labels**model.n_nodes
    if total > cap:
        raise InstanceTooLargeError(total, cap)
    return total


def _labeling_chunks(n: int, k: int, total: int):
    """All labelings in lexicographic order, in blocks of rows."""
    for start in range(0, total, _CHUNK):
        idx = np.arange(start, min(start + _CHUNK, total))
        ys = np.empty((idx.size, n), dtype=np.int64)
        for pos in range(n - 1, -1, -1):
            ys[:, pos] = idx % k
            idx = idx // k
        yield ys


def _energies(ys: np.ndarray, model: CrfModel) -> np.ndarray:
    n = model.n_nodes
    kmat = model.kernel_matrix()
    mu = model.mu
    e = model.unary[np.arange(n), ys].sum(axis=1)
    for i, j in itertools.combinations(range(n), 2):
        if kmat[i, j] != 0.0:
            e = e + mu[ys[:, i], ys[:, j]] * kmat[i, j]
    return e


def enumerate_exact(model: CrfModel, cap: int = ENUMERATION_CAP) -> ExactResult:
    """Partition function, marginals and MAP labeling by brute force.

    Ties in the MAP are broken towards the lexicographically smallest
    labeling.
    """
    total = _check_cap(model, cap)
    n, k = model.n_nodes, model.n_labels

    best_e, best_y = np.inf, None
    for ys in _labeling_chunks(n, k, total):
        e = _energies(ys, model)
        at = int(np.argmin(e))
        if e[at] < best_e:
            best_e, best_y = float(e[at]), ys[at].copy()

    # second pass, weights relative to the minimum energy so nothing overflows
    weight_sum = 0.0
    marg = np.zeros((n, k))
    rows = np.arange(n)
    for ys in _labeling_chunks(n, k, total):
        w = np.exp(-(_energies(ys, model) - best_e))
        weight_sum += w.sum()
        for i in rows:
            marg[i] += np.bincount(ys[:, i], weights=w, minlength=k)
    marg /= weight_sum
    log_z = -best_e + np.log(weight_sum)
    return ExactResult(
        log_z=float(log_z),
        marginals=marg,
        map_labeling=best_y,
        map_energy=gibbs_energy(best_y, model),
    )


def exact_kl(q, model: CrfModel, cap: int = ENUMERATION_CAP) -> float:
    """KL(Q || P) for the fully factorized ``Q(Y) = prod_i q[i, Y_i]``."""
    total = _check_cap(model, cap)
    n, k = model.n_nodes, model.n_labels
    q = np.asarray(q, dtype=float)
    with np.errstate(divide="ignore"):
        log_q = np.log(q)
    log_z = enumerate_exact(model, cap).log_z
    kl = 0.0
    rows = np.arange(n)
    for ys in _labeling_chunks(n, k, total):
        lq = log_q[rows, ys].sum(axis=1)
        keep = np.isfinite(lq)
        if not keep.any():
            continue
        ys, lq = ys[keep], lq[keep]
        e = _energies(ys, model)
        kl += float((np.exp(lq) * (lq + e + log_z)).sum())
    return kl


def gibbs_sample(model: CrfModel, cfg: SamplerConfig = SamplerConfig()) -> np.ndarray:
    """Estimate marginals by systematic-scan Gibbs or Metropolis sampling.

    Nodes are visited in ascending order each sweep; label counts are
    collected from every sweep after ``burn_in``.
    """
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    n, k = model.n_nodes, model.n_labels
    kmat = model.kernel_matrix()
    mu = model.mu
    unary = model.unary
    y = rng.integers(0, k, size=n)
    # field[i, l] = sum_j k_ij mu[l, y_j], kept current as labels change
    field = (mu[:, y] @ kmat.T).T
    counts = np.zeros((n, k))
    rows = np.arange(n)
    metropolis = cfg.variant is SamplerVariant.METROPOLIS

    for sweep in range(cfg.sweeps):
        u = rng.random(n)
        proposals = rng.integers(0, k, size=n) if metropolis else None
        for i in range(n):
            local = unary[i] + field[i]
            old = y[i]
            if metropolis:
                new = proposals[i]
                delta = local[new] - local[old]
                if not (delta <= 0 or u[i] < np.exp(-delta)):
                    new = old
            else:
                p = np.exp(-(local - local.min()))
                cdf = np.cumsum(p)
                new = int(np.searchsorted(cdf, u[i] * cdf[-1], side="right"))
                new = min(new, k - 1)
            if new != old:
                field += np.outer(kmat[:, i], mu[:, new] - mu[:, old])
                y[i] = new
        if sweep >= cfg.burn_in:
            counts[rows, y] += 1
    return counts / counts.sum(axis=1, keepdims=True)
