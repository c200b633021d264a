"""Mean-field inference for fully connected pairwise CRFs.

One update replaces every node's marginal by

    Q_i(l) ∝ exp(-psi_u(i, l) - sum_{j != i} sum_{l'} mu(l, l') k(f_i, f_j) Q_j(l'))

The double sum can be taken kernel-first (:func:`mf_step_eq6`: filter the
marginals, then apply the compatibility) or compatibility-first
(:func:`mf_step_eq7`: transform the marginals, then filter).  The second
ordering is what makes the update read as an attention layer.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import InstanceTooLargeError, ModelShapeError
from .model import CrfModel, distribution_from_potentials
from .oracle import ENUMERATION_CAP, exact_kl


class Schedule(str, enum.Enum):
    PARALLEL = "parallel"
    SEQUENTIAL = "sequential"


class Order(str, enum.Enum):
    EQ6 = "eq6"
    EQ7 = "eq7"


@dataclass(frozen=True)
class MeanFieldConfig:
    max_iter: int = 100
    tol: float = 1e-6
    schedule: Schedule = Schedule.PARALLEL
    order: Order = Order.EQ6
    track_kl: bool = False

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        object.__setattr__(self, "schedule", Schedule(self.schedule))
        object.__setattr__(self, "order", Order(self.order))


@dataclass
class MeanFieldDiagnostics:
    iterations_run: int = 0
    converged: bool = False
    linf_trace: list = field(default_factory=list)
    kl_trace: list | None = None

    def to_dict(self) -> dict:
        return {
            "iterations_run": self.iterations_run,
            "converged": self.converged,
            "linf_trace": list(self.linf_trace),
            "kl_trace": None if self.kl_trace is None else list(self.kl_trace),
        }


def _check_q(q, model: CrfModel) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (model.n_nodes, model.n_labels):
        raise ModelShapeError(
            f"marginals have shape {q.shape}, model is {model.n_nodes}x{model.n_labels}"
        )
    return q


def init_marginals(model: CrfModel) -> np.ndarray:
    return distribution_from_potentials(model.unary)


def mf_step_eq6(q, model: CrfModel) -> np.ndarray:
    """Parallel update, kernel sum first then compatibility."""
    q = _check_q(q, model)
    filtered = model.kernel_matrix() @ q  # A[i, l'] = sum_j k_ij Q[j, l']
    pairwise = filtered @ model.mu.T  # B[i, l] = sum_l' mu[l, l'] A[i, l']
    return distribution_from_potentials(model.unary + pairwise)


def mf_step_eq7(q, model: CrfModel) -> np.ndarray:
    """Parallel update, compatibility first then kernel sum."""
    q = _check_q(q, model)
    values = q @ model.mu.T  # A[j, l] = sum_l' mu[l, l'] Q[j, l']
    pairwise = model.kernel_matrix() @ values  # B[i, l] = sum_j k_ij A[j, l]
    return distribution_from_potentials(model.unary + pairwise)


def update_node(q: np.ndarray, model: CrfModel, i: int) -> np.ndarray:
    """New marginal row for node ``i`` given the current rows of all others."""
    kmat = model.kernel_matrix()
    pairwise = model.mu @ (kmat[i] @ q)
    return distribution_from_potentials(model.unary[i] + pairwise)


def mf_step_sequential(q, model: CrfModel, callback=None) -> np.ndarray:
    """Gauss-Seidel sweep: nodes in ascending order, each seeing fresh rows.

    ``callback(i, q)`` is invoked after each node update with the current
    table (not a copy).
    """
    q = _check_q(q, model).copy()
    for i in range(model.n_nodes):
        q[i] = update_node(q, model, i)
        if callback is not None:
            callback(i, q)
    return q


_STEPS = {
    (Schedule.PARALLEL, Order.EQ6): mf_step_eq6,
    (Schedule.PARALLEL, Order.EQ7): mf_step_eq7,
    (Schedule.SEQUENTIAL, Order.EQ6): mf_step_sequential,
    (Schedule.SEQUENTIAL, Order.EQ7): mf_step_sequential,
}


def step_fn(cfg: MeanFieldConfig):
    return _STEPS[(cfg.schedule, cfg.order)]


def run_mean_field(
    model: CrfModel, cfg: MeanFieldConfig = MeanFieldConfig()
) -> tuple[np.ndarray, MeanFieldDiagnostics]:
    """Iterate from the unary distribution until the L-inf change drops below tol."""
    step = step_fn(cfg)
    diag = MeanFieldDiagnostics()
    track_kl = cfg.track_kl and model.n_labels**model.n_nodes <= ENUMERATION_CAP
    if track_kl:
        diag.kl_trace = []

    q = init_marginals(model)
    for _ in range(cfg.max_iter):
        q_next = step(q, model)
        change = float(np.abs(q_next - q).max())
        q = q_next
        diag.iterations_run += 1
        diag.linf_trace.append(change)
        if track_kl:
            try:
                diag.kl_trace.append(exact_kl(q, model))
            except InstanceTooLargeError:
                diag.kl_trace = None
                track_kl = False
        if change < cfg.tol:
            diag.converged = True
            break
    return q, diag


def decode_argmax(q) -> np.ndarray:
    """Most probable label per node; ties go to the smallest index."""
    return np.argmax(np.asarray(q), axis=1)
