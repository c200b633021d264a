"""CRF-GAT: mean-field iterations unrolled into residual graph-attention layers.

Each layer turns the running potential field ``psi`` into a distribution,
maps it through its own compatibility matrix (the attention *values*),
aggregates over all other nodes with unnormalized kernel weights, and adds
the result back onto ``psi``:

    P = softmax(-psi)
    V = P @ mu_m.T
    R = alpha_m @ V          (alpha_m = kernel_m matrix, zero diagonal)
    psi <- psi + R

Unlike plain mean field, the unary term is never rebuilt, so layer ``m``
treats the output of layer ``m - 1`` as its unary classifier.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ModelShapeError
from .kernels import kernel_matrix, validate_spec
from .model import CompatibilityMatrix, CrfModel, ObservedSequence, distribution_from_potentials


@dataclass(frozen=True)
class GatLayerParams:
    compatibility: CompatibilityMatrix
    kernel: object

    @property
    def mu(self) -> np.ndarray:
        return self.compatibility.mu

    @property
    def n_labels(self) -> int:
        return self.compatibility.n_labels


@dataclass(frozen=True)
class UnaryClassifierParams:
    """Per-node linear-softmax classifier ``softmax(X_i @ weight + bias)``."""

    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = np.array(self.weight, dtype=float)
        b = np.array(self.bias, dtype=float)
        if w.ndim != 2 or b.shape != (w.shape[1],):
            raise ModelShapeError(f"weight {w.shape} and bias {b.shape} disagree")
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise ModelShapeError("classifier parameters must be finite")
        w.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)

    def logits(self, seq: ObservedSequence) -> np.ndarray:
        if seq.observations.shape[1] != self.weight.shape[0]:
            raise ModelShapeError(
                f"observations have {seq.observations.shape[1]} dims, "
                f"classifier expects {self.weight.shape[0]}"
            )
        return seq.observations @ self.weight + self.bias

    def potentials(self, seq: ObservedSequence) -> np.ndarray:
        """Unary potentials ``-log softmax(logits)``, computed in log space."""
        z = self.logits(seq)
        m = z.max(axis=1, keepdims=True)
        lse = m + np.log(np.exp(z - m).sum(axis=1, keepdims=True))
        return lse - z

    def __eq__(self, other):
        if not isinstance(other, UnaryClassifierParams):
            return NotImplemented
        return np.array_equal(self.weight, other.weight) and np.array_equal(
            self.bias, other.bias
        )


@dataclass(frozen=True)
class CrfGatModel:
    """An M-layer CRF-GAT.

    With ``share_parameters`` every layer is the very same
    :class:`GatLayerParams` object, which turns the network back into
    ``M`` iterations of one CRF.
    """

    layers: tuple
    unary_params: UnaryClassifierParams | None = None
    share_parameters: bool = False

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ModelShapeError("a CRF-GAT needs at least one layer")
        k = layers[0].n_labels
        for m, layer in enumerate(layers):
            if layer.n_labels != k:
                raise ModelShapeError(f"layer {m} has {layer.n_labels} labels, expected {k}")
            problems = validate_spec(layer.kernel)
            if problems:
                raise ModelShapeError(f"layer {m}: " + "; ".join(problems))
        if self.share_parameters:
            layers = (layers[0],) * len(layers)
        if self.unary_params is not None and self.unary_params.bias.shape[0] != k:
            raise ModelShapeError("unary classifier and layers disagree on K")
        object.__setattr__(self, "layers", layers)

    @classmethod
    def shared(cls, layer: GatLayerParams, depth: int, unary_params=None) -> "CrfGatModel":
        return cls((layer,) * depth, unary_params, share_parameters=True)

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def n_labels(self) -> int:
        return self.layers[0].n_labels


@dataclass
class GatTrace:
    """Per-layer snapshots.  ``psi[m]`` is the field after layer ``m``."""

    initial: np.ndarray
    P: list = field(default_factory=list)
    R: list = field(default_factory=list)
    psi: list = field(default_factory=list)


def attention_weights(seq: ObservedSequence, params: GatLayerParams) -> np.ndarray:
    return kernel_matrix(seq, params.kernel)


def gat_layer(
    psi, seq: ObservedSequence, params: GatLayerParams, alpha=None
) -> tuple[np.ndarray, np.ndarray]:
    """One residual attention layer; returns ``(psi + R, R)``."""
    psi = np.asarray(psi, dtype=float)
    if psi.shape != (seq.n_nodes, params.n_labels):
        raise ModelShapeError(
            f"potentials have shape {psi.shape}, expected ({seq.n_nodes}, {params.n_labels})"
        )
    if alpha is None:
        alpha = attention_weights(seq, params)
    P = distribution_from_potentials(psi)
    V = P @ params.mu.T
    R = alpha @ V
    return psi + R, R


def gat_forward(
    model: CrfGatModel, seq: ObservedSequence, unary, keep_trace: bool | None = None
) -> tuple[np.ndarray, GatTrace | None]:
    """Run all layers starting from the unary potentials."""
    psi = np.array(unary, dtype=float)
    if keep_trace is None:
        keep_trace = psi.size <= 10**6
    trace = GatTrace(initial=psi.copy()) if keep_trace else None
    alpha = None
    for m, layer in enumerate(model.layers):
        if m == 0 or layer is not model.layers[m - 1]:
            alpha = attention_weights(seq, layer)
        psi_next, R = gat_layer(psi, seq, layer, alpha=alpha)
        if trace is not None:
            trace.P.append(distribution_from_potentials(psi))
            trace.R.append(R)
            trace.psi.append(psi_next)
        psi = psi_next
    return psi, trace


def decode_argmin(psi) -> np.ndarray:
    """Lowest-potential label per node; ties go to the smallest index."""
    return np.argmin(np.asarray(psi), axis=1)


def unary_for(model: CrfGatModel, seq: ObservedSequence) -> np.ndarray:
    if model.unary_params is None:
        raise ModelShapeError("model has no unary classifier; pass potentials explicitly")
    return model.unary_params.potentials(seq)


def crf_from_gat(model: CrfGatModel, seq: ObservedSequence, unary=None, layer: int = 0) -> CrfModel:
    """The single CRF whose parameters are those of one CRF-GAT layer."""
    if unary is None:
        unary = unary_for(model, seq)
    params = model.layers[layer]
    return CrfModel(seq, unary, params.compatibility, params.kernel)


def gat_from_crf(crf: CrfModel, depth: int = 1) -> CrfGatModel:
    """Shared-parameter CRF-GAT that unrolls ``depth`` iterations of ``crf``."""
    return CrfGatModel.shared(GatLayerParams(crf.compatibility, crf.kernel), depth)
