"""End-to-end cross-entropy training of CRF-GAT models.

Gradients are accumulated by hand in reverse through the unrolled layers
(softmax -> values -> attention -> residual add) and checked against
central finite differences in the test suite.

Trainable scalars are exposed as a flat ``{name: array}`` dictionary:

=========================  ==========================================
``layer{m}.mu``            K x K compatibility of layer m
``layer{m}.omega``         Gaussian component weights of layer m
``layer{m}.sigma_spatial`` only with ``train_sigma``
``layer{m}.sigma_appearance`` only with ``train_sigma``
``unary.weight``           d_x x K classifier weights
``unary.bias``             length-K classifier bias
=========================  ==========================================

A shared-parameter model exposes ``layer0.*`` only.  Kernels that are not
Gaussian (polynomial, precomputed) have no trainable entries.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .data import LabeledDataset
from .errors import ModelShapeError, TrainingDivergedError
from .gat import CrfGatModel, GatLayerParams, UnaryClassifierParams, decode_argmin, gat_forward, unary_for
from .kernels import GaussianBilateral, GaussianComponent, kernel_matrix, squared_distances
from .model import CompatibilityMatrix, distribution_from_potentials

_SIGMA_FLOOR = 1e-6


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 100
    seed: int = 0
    train_sigma: bool = False
    symmetrize_mu: bool = True
    fd_epsilon: float = 1e-5

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be >= 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not self.fd_epsilon > 0:
            raise ValueError("fd_epsilon must be > 0")


def init_unary(obs_dim: int, n_labels: int, rng: np.random.Generator) -> UnaryClassifierParams:
    return UnaryClassifierParams(rng.normal(0.0, 0.1, size=(obs_dim, n_labels)), np.zeros(n_labels))


def init_crf_gat(
    n_labels: int,
    obs_dim: int,
    depth: int,
    kernel,
    seed: int = 0,
    symmetric: bool = True,
    share_parameters: bool = False,
) -> CrfGatModel:
    """Potts compatibilities plus uniform noise in [-0.01, 0.01], unit omegas."""
    rng = np.random.Generator(np.random.PCG64(seed))
    if isinstance(kernel, GaussianBilateral):
        kernel = GaussianBilateral(
            tuple(GaussianComponent(1.0, c.sigma_spatial, c.sigma_appearance) for c in kernel.components)
        )
    n_distinct = 1 if share_parameters else depth
    layers = []
    for _ in range(n_distinct):
        noise = rng.uniform(-0.01, 0.01, size=(n_labels, n_labels))
        if symmetric:
            noise = (noise + noise.T) / 2
        mu = 1.0 - np.eye(n_labels) + noise
        layers.append(GatLayerParams(CompatibilityMatrix(mu, symmetric=symmetric), kernel))
    unary = init_unary(obs_dim, n_labels, rng)
    if share_parameters:
        return CrfGatModel.shared(layers[0], depth, unary)
    return CrfGatModel(tuple(layers), unary)


def _distinct_layers(model: CrfGatModel):
    return model.layers[:1] if model.share_parameters else model.layers


def get_params(model: CrfGatModel, train_sigma: bool = False) -> dict:
    params = {}
    for m, layer in enumerate(_distinct_layers(model)):
        params[f"layer{m}.mu"] = np.array(layer.mu)
        if isinstance(layer.kernel, GaussianBilateral):
            comps = layer.kernel.components
            params[f"layer{m}.omega"] = np.array([c.omega for c in comps])
            if train_sigma:
                params[f"layer{m}.sigma_spatial"] = np.array([c.sigma_spatial for c in comps])
                params[f"layer{m}.sigma_appearance"] = np.array([c.sigma_appearance for c in comps])
    if model.unary_params is not None:
        params["unary.weight"] = np.array(model.unary_params.weight)
        params["unary.bias"] = np.array(model.unary_params.bias)
    return params


def set_params(model: CrfGatModel, params: dict) -> CrfGatModel:
    """Copy of ``model`` with the entries of ``params`` substituted."""
    layers = []
    for m, layer in enumerate(_distinct_layers(model)):
        compat = layer.compatibility
        if f"layer{m}.mu" in params:
            mu = np.asarray(params[f"layer{m}.mu"], dtype=float)
            compat = CompatibilityMatrix(mu, symmetric=bool(np.array_equal(mu, mu.T)))
        kernel = layer.kernel
        if isinstance(kernel, GaussianBilateral):
            comps = kernel.components
            omega = params.get(f"layer{m}.omega", [c.omega for c in comps])
            ss = params.get(f"layer{m}.sigma_spatial", [c.sigma_spatial for c in comps])
            sa = params.get(f"layer{m}.sigma_appearance", [c.sigma_appearance for c in comps])
            kernel = GaussianBilateral(
                tuple(GaussianComponent(float(w), float(s1), float(s2)) for w, s1, s2 in zip(omega, ss, sa))
            )
        layers.append(GatLayerParams(compat, kernel))
    unary = model.unary_params
    if "unary.weight" in params:
        unary = UnaryClassifierParams(params["unary.weight"], params["unary.bias"])
    if model.share_parameters:
        return CrfGatModel.shared(layers[0], model.depth, unary)
    return CrfGatModel(tuple(layers), unary)


def cross_entropy(psi_final, gold) -> float:
    """Mean negative log-likelihood of ``gold`` under ``softmax(-psi_final)``."""
    psi = np.asarray(psi_final, dtype=float)
    gold = np.asarray(gold)
    shifted = psi - psi.min(axis=1, keepdims=True)
    lse = np.log(np.exp(-shifted).sum(axis=1))
    nll = shifted[np.arange(psi.shape[0]), gold] + lse
    return float(nll.mean())


class _Geometry:
    """Squared distances per dataset item, computed once."""

    def __init__(self, batch: LabeledDataset):
        self.dists = [squared_distances(seq) for seq, _ in batch.items]


def _gaussian_parts(kernel: GaussianBilateral, dp, dx):
    terms = []
    for c in kernel.components:
        e = np.exp(-dp / (2.0 * c.sigma_spatial**2) - dx / (2.0 * c.sigma_appearance**2))
        np.fill_diagonal(e, 0.0)
        terms.append(e)
    return terms


def _item_loss_grad(model, seq, gold, dists, train_sigma, want_grad):
    n = seq.n_nodes
    layers = model.layers
    if model.unary_params is None:
        raise ModelShapeError("training needs a model with a unary classifier")

    z = model.unary_params.logits(seq)
    p0 = distribution_from_potentials(-z)
    psi = model.unary_params.potentials(seq)

    tape = []
    cache = {}
    for m, layer in enumerate(layers):
        key = id(layer)
        if key not in cache:
            if isinstance(layer.kernel, GaussianBilateral):
                terms = _gaussian_parts(layer.kernel, *dists)
                alpha = sum(c.omega * e for c, e in zip(layer.kernel.components, terms))
            else:
                terms = None
                alpha = kernel_matrix(seq, layer.kernel)
            cache[key] = (alpha, terms)
        alpha, terms = cache[key]
        P = distribution_from_potentials(psi)
        V = P @ layer.mu.T
        psi = psi + alpha @ V
        tape.append((0 if model.share_parameters else m, layer, P, V, alpha, terms))

    loss = cross_entropy(psi, gold)
    if not want_grad:
        return loss, None

    grads = {}

    def acc(name, g):
        if name in grads:
            grads[name] = grads[name] + g
        else:
            grads[name] = g

    P_final = distribution_from_potentials(psi)
    G = -P_final
    G[np.arange(n), gold] += 1.0
    G /= n

    for m, layer, P, V, alpha, terms in reversed(tape):
        d_alpha = G @ V.T
        d_V = alpha.T @ G
        acc(f"layer{m}.mu", d_V.T @ P)
        d_P = d_V @ layer.mu
        d_z = P * (d_P - (d_P * P).sum(axis=1, keepdims=True))
        if terms is not None:
            dp, dx = dists
            comps = layer.kernel.components
            acc(f"layer{m}.omega", np.array([(d_alpha * e).sum() for e in terms]))
            if train_sigma:
                acc(
                    f"layer{m}.sigma_spatial",
                    np.array([(d_alpha * c.omega * e * dp).sum() / c.sigma_spatial**3 for c, e in zip(comps, terms)]),
                )
                acc(
                    f"layer{m}.sigma_appearance",
                    np.array([(d_alpha * c.omega * e * dx).sum() / c.sigma_appearance**3 for c, e in zip(comps, terms)]),
                )
        G = G - d_z

    # psi0 = logsumexp(z) - z
    d_logits = -G + p0 * G.sum(axis=1, keepdims=True)
    acc("unary.weight", seq.observations.T @ d_logits)
    acc("unary.bias", d_logits.sum(axis=0))
    return loss, grads


def loss_and_grad(model: CrfGatModel, batch: LabeledDataset, train_sigma=False, want_grad=True, geometry=None):
    """Mean cross-entropy over the batch and its exact gradient."""
    geometry = geometry or _Geometry(batch)
    total = 0.0
    grads = None
    for (seq, gold), dists in zip(batch.items, geometry.dists):
        loss, g = _item_loss_grad(model, seq, gold, dists, train_sigma, want_grad)
        total += loss
        if g is not None:
            grads = g if grads is None else {k: grads[k] + g[k] for k in grads}
    count = len(batch.items)
    if grads is not None:
        grads = {k: v / count for k, v in grads.items()}
    return total / count, grads


def batch_loss(model: CrfGatModel, batch: LabeledDataset) -> float:
    return loss_and_grad(model, batch, want_grad=False)[0]


def grad_analytic(model: CrfGatModel, batch: LabeledDataset, train_sigma: bool = False) -> dict:
    return loss_and_grad(model, batch, train_sigma)[1]


def _oracle_loss(model: CrfGatModel, batch: LabeledDataset) -> float:
    """Mean batch loss from a separate forward pass in extended precision.

    Shares no code with :func:`loss_and_grad`, and the extra precision keeps
    the finite-difference quotient accurate for gradients near 1e-8.
    """
    ld = np.longdouble
    total = ld(0)
    w = model.unary_params.weight.astype(ld)
    b = model.unary_params.bias.astype(ld)
    for seq, gold in batch.items:
        x = seq.observations.astype(ld)
        z = x @ w + b
        zmax = z.max(axis=1, keepdims=True)
        psi = zmax + np.log(np.exp(z - zmax).sum(axis=1, keepdims=True)) - z
        pos = seq.positions.astype(ld)
        for layer in model.layers:
            if isinstance(layer.kernel, GaussianBilateral):
                dp = ((pos[:, None, :] - pos[None, :, :]) ** 2).sum(axis=-1)
                dx = ((x[:, None, :] - x[None, :, :]) ** 2).sum(axis=-1)
                alpha = np.zeros_like(dp)
                for c in layer.kernel.components:
                    s1, s2 = ld(c.sigma_spatial), ld(c.sigma_appearance)
                    alpha += ld(c.omega) * np.exp(-dp / (2 * s1 * s1) - dx / (2 * s2 * s2))
                np.fill_diagonal(alpha, 0)
            else:
                alpha = kernel_matrix(seq, layer.kernel).astype(ld)
            e = np.exp(-(psi - psi.min(axis=1, keepdims=True)))
            p = e / e.sum(axis=1, keepdims=True)
            psi = psi + alpha @ (p @ layer.mu.astype(ld).T)
        shifted = psi - psi.min(axis=1, keepdims=True)
        nll = shifted[np.arange(seq.n_nodes), gold] + np.log(np.exp(-shifted).sum(axis=1))
        total += nll.mean()
    return total / len(batch.items)


def grad_fd(model: CrfGatModel, batch: LabeledDataset, eps: float = 1e-5, train_sigma: bool = False) -> dict:
    """Central finite differences of the mean batch loss, one scalar at a time."""
    params = get_params(model, train_sigma)
    out = {}
    for name, value in params.items():
        g = np.zeros_like(value)
        for idx in np.ndindex(value.shape):
            vals = []
            for sign in (1.0, -1.0):
                bumped = {k: v.copy() for k, v in params.items()}
                bumped[name][idx] += sign * eps
                vals.append(_oracle_loss(set_params(model, bumped), batch))
            g[idx] = float((vals[0] - vals[1]) / (2 * eps))
        out[name] = g
    return out


def _descend(params, loss_grad, cfg: TrainConfig):
    losses = []
    for epoch in range(cfg.epochs):
        loss, grads = loss_grad(params)
        if not np.isfinite(loss) or not all(np.isfinite(g).all() for g in grads.values()):
            raise TrainingDivergedError(epoch, loss)
        losses.append(loss)
        params = {k: v - cfg.learning_rate * grads[k] for k, v in params.items()}
        for k in params:
            if k.endswith(".mu") and cfg.symmetrize_mu:
                params[k] = (params[k] + params[k].T) / 2
            elif ".sigma_" in k:
                params[k] = np.maximum(params[k], _SIGMA_FLOOR)
        if not all(np.isfinite(v).all() for v in params.values()):
            raise TrainingDivergedError(epoch + 1, float("nan"))
    return params, losses


def train(model: CrfGatModel, data: LabeledDataset, cfg: TrainConfig = TrainConfig()):
    """Full-batch gradient descent on the mean cross-entropy.

    Returns the trained model and the per-epoch loss, measured before each
    epoch's update.
    """
    if model.unary_params is None:
        rng = np.random.Generator(np.random.PCG64(cfg.seed))
        model = replace(model, unary_params=init_unary(data.obs_dim, model.n_labels, rng))
    geometry = _Geometry(data)
    params = get_params(model, cfg.train_sigma)
    if cfg.epochs == 0 or cfg.learning_rate == 0:
        losses = [batch_loss(model, data)] * cfg.epochs
        return model, losses

    def loss_grad(p):
        return loss_and_grad(set_params(model, p), data, cfg.train_sigma, geometry=geometry)

    params, losses = _descend(params, loss_grad, cfg)
    return set_params(model, params), losses


def unary_loss_and_grad(params: UnaryClassifierParams, batch: LabeledDataset):
    total = 0.0
    gw = np.zeros_like(params.weight)
    gb = np.zeros_like(params.bias)
    for seq, gold in batch.items:
        psi = params.potentials(seq)
        total += cross_entropy(psi, gold)
        n = seq.n_nodes
        d = distribution_from_potentials(psi)
        d[np.arange(n), gold] -= 1.0
        d /= n
        gw += seq.observations.T @ d
        gb += d.sum(axis=0)
    count = len(batch.items)
    return total / count, {"unary.weight": gw / count, "unary.bias": gb / count}


def train_unary(params: UnaryClassifierParams, data: LabeledDataset, cfg: TrainConfig = TrainConfig()):
    """Train the linear-softmax classifier alone (the no-pairwise baseline)."""
    flat = {"unary.weight": np.array(params.weight), "unary.bias": np.array(params.bias)}

    def loss_grad(p):
        return unary_loss_and_grad(UnaryClassifierParams(p["unary.weight"], p["unary.bias"]), data)

    flat, losses = _descend(flat, loss_grad, cfg)
    return UnaryClassifierParams(flat["unary.weight"], flat["unary.bias"]), losses


def predict(model: CrfGatModel, seq) -> np.ndarray:
    psi, _ = gat_forward(model, seq, unary_for(model, seq), keep_trace=False)
    return decode_argmin(psi)
