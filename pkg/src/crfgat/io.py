"""JSON and CSV (de)serialization.

Every JSON artifact carries ``schema_version`` and a ``kind`` discriminator.
Labels are written 1-based and read back 0-based.  Floats go through
Python's shortest round-trip ``repr``, so reals survive a save/load cycle
bit for bit.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .data import LabeledDataset, SyntheticSpec
from .errors import ParseError, SchemaVersionError
from .gat import CrfGatModel, GatLayerParams, UnaryClassifierParams
from .kernels import GaussianBilateral, GaussianComponent, Polynomial, Precomputed
from .meanfield import MeanFieldDiagnostics
from .model import CompatibilityMatrix, CrfModel, ObservedSequence
from .oracle import ExactResult
from .training import TrainConfig

SCHEMA_VERSION = 1


def _table(a) -> list:
    return np.asarray(a, dtype=float).tolist()


# -- kernels and models ------------------------------------------------------


def kernel_to_dict(spec) -> dict:
    if isinstance(spec, GaussianBilateral):
        return {
            "variant": "gaussian_bilateral",
            "components": [
                {"omega": c.omega, "sigma_spatial": c.sigma_spatial, "sigma_appearance": c.sigma_appearance}
                for c in spec.components
            ],
        }
    if isinstance(spec, Polynomial):
        return {"variant": "polynomial", "scale": spec.scale, "bias": spec.bias, "degree": spec.degree}
    if isinstance(spec, Precomputed):
        return {"variant": "precomputed", "matrix": _table(spec.matrix)}
    raise TypeError(f"cannot serialize kernel {spec!r}")


def kernel_from_dict(d: dict):
    variant = d.get("variant")
    if variant == "gaussian_bilateral":
        return GaussianBilateral(
            tuple(
                GaussianComponent(float(c["omega"]), float(c["sigma_spatial"]), float(c["sigma_appearance"]))
                for c in d["components"]
            )
        )
    if variant == "polynomial":
        return Polynomial(float(d["scale"]), float(d["bias"]), int(d["degree"]))
    if variant == "precomputed":
        return Precomputed(np.array(d["matrix"], dtype=float))
    raise ParseError(f"unknown kernel variant {variant!r}")


def _compat_to_dict(c: CompatibilityMatrix) -> dict:
    return {"mu": _table(c.mu), "symmetric": c.symmetric}


def _compat_from_dict(d: dict) -> CompatibilityMatrix:
    return CompatibilityMatrix(np.array(d["mu"], dtype=float), bool(d.get("symmetric", False)))


def _seq_to_dict(seq: ObservedSequence) -> dict:
    return {"positions": _table(seq.positions), "observations": _table(seq.observations)}


def _seq_from_dict(d: dict) -> ObservedSequence:
    return ObservedSequence(np.array(d["positions"], dtype=float), np.array(d["observations"], dtype=float))


def to_dict(obj) -> dict:
    """JSON-ready dictionary for any serializable artifact."""
    head = {"schema_version": SCHEMA_VERSION}
    if isinstance(obj, CrfModel):
        return head | {
            "kind": "crf_model",
            "sequence": _seq_to_dict(obj.sequence),
            "unary": _table(obj.unary),
            "compatibility": _compat_to_dict(obj.compatibility),
            "kernel": kernel_to_dict(obj.kernel),
        }
    if isinstance(obj, CrfGatModel):
        layers = obj.layers[:1] if obj.share_parameters else obj.layers
        unary = None
        if obj.unary_params is not None:
            unary = {"weight": _table(obj.unary_params.weight), "bias": _table(obj.unary_params.bias)}
        return head | {
            "kind": "crf_gat_model",
            "depth": obj.depth,
            "share_parameters": obj.share_parameters,
            "layers": [
                {"compatibility": _compat_to_dict(l.compatibility), "kernel": kernel_to_dict(l.kernel)}
                for l in layers
            ],
            "unary_classifier": unary,
        }
    if isinstance(obj, LabeledDataset):
        items = []
        for idx, (seq, y) in enumerate(obj.items):
            item = _seq_to_dict(seq) | {"labels": (np.asarray(y) + 1).tolist()}
            if obj.shapes:
                item["shape"] = list(obj.shapes[idx])
            items.append(item)
        return head | {"kind": "dataset", "n_labels": obj.n_labels, "items": items}
    if isinstance(obj, ExactResult):
        return head | {
            "kind": "exact_result",
            "log_z": obj.log_z,
            "marginals": _table(obj.marginals),
            "map_labeling": (np.asarray(obj.map_labeling) + 1).tolist(),
            "map_energy": obj.map_energy,
        }
    if isinstance(obj, MeanFieldDiagnostics):
        return head | {"kind": "mean_field_diagnostics"} | obj.to_dict()
    if isinstance(obj, SyntheticSpec):
        return head | {
            "kind": "synthetic_spec",
            "topology": obj.topology,
            "width": obj.width,
            "height": obj.height,
            "n_labels": obj.n_labels,
            "noise_sigma": obj.noise_sigma,
            "blob_count": obj.blob_count,
            "seed": obj.seed,
            "items": obj.items,
        }
    if isinstance(obj, TrainConfig):
        return head | {
            "kind": "train_config",
            "learning_rate": obj.learning_rate,
            "epochs": obj.epochs,
            "seed": obj.seed,
            "train_sigma": obj.train_sigma,
            "symmetrize_mu": obj.symmetrize_mu,
            "fd_epsilon": obj.fd_epsilon,
        }
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _check_version(d: dict):
    if not isinstance(d, dict):
        raise ParseError("top-level JSON value must be an object")
    version = d.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionError(f"unsupported schema_version {version!r}; expected {SCHEMA_VERSION}")


def from_dict(d: dict, kind: str | None = None):
    """Inverse of :func:`to_dict`; ``kind`` restricts what is accepted."""
    _check_version(d)
    found = d.get("kind")
    if kind is not None and found != kind and not (isinstance(kind, tuple) and found in kind):
        raise ParseError(f"expected a {kind} document, found {found!r}")
    try:
        return _build(found, d)
    except (KeyError, TypeError) as exc:
        raise ParseError(f"malformed {found} document: missing or bad field {exc}") from exc


def _build(kind: str, d: dict):
    if kind == "crf_model":
        return CrfModel(
            _seq_from_dict(d["sequence"]),
            np.array(d["unary"], dtype=float),
            _compat_from_dict(d["compatibility"]),
            kernel_from_dict(d["kernel"]),
        )
    if kind == "crf_gat_model":
        layers = tuple(
            GatLayerParams(_compat_from_dict(l["compatibility"]), kernel_from_dict(l["kernel"]))
            for l in d["layers"]
        )
        share = bool(d.get("share_parameters", False))
        depth = int(d.get("depth", len(layers)))
        unary = d.get("unary_classifier")
        if unary is not None:
            unary = UnaryClassifierParams(np.array(unary["weight"], dtype=float), np.array(unary["bias"], dtype=float))
        if share:
            return CrfGatModel.shared(layers[0], depth, unary)
        if depth != len(layers):
            raise ParseError(f"depth {depth} but {len(layers)} layers listed")
        return CrfGatModel(layers, unary)
    if kind == "dataset":
        items, shapes = [], []
        for item in d["items"]:
            items.append((_seq_from_dict(item), np.array(item["labels"], dtype=np.int64) - 1))
            if "shape" in item:
                shapes.append(tuple(item["shape"]))
        if shapes and len(shapes) != len(items):
            raise ParseError("either every dataset item has a shape or none does")
        return LabeledDataset(tuple(items), int(d["n_labels"]), tuple(shapes))
    if kind == "exact_result":
        return ExactResult(
            float(d["log_z"]),
            np.array(d["marginals"], dtype=float),
            np.array(d["map_labeling"], dtype=np.int64) - 1,
            float(d["map_energy"]),
        )
    if kind == "mean_field_diagnostics":
        return MeanFieldDiagnostics(
            int(d["iterations_run"]), bool(d["converged"]), list(d["linf_trace"]), d.get("kl_trace")
        )
    if kind == "synthetic_spec":
        fields = ("topology", "width", "height", "n_labels", "noise_sigma", "blob_count", "seed", "items")
        return SyntheticSpec(**{k: d[k] for k in fields if k in d})
    if kind == "train_config":
        fields = ("learning_rate", "epochs", "seed", "train_sigma", "symmetrize_mu", "fd_epsilon")
        return TrainConfig(**{k: d[k] for k in fields if k in d})
    if kind == "predictions":
        return d
    raise ParseError(f"unknown document kind {kind!r}")


def read_json(path) -> dict:
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


def write_json(path, doc: dict):
    Path(path).write_text(json.dumps(doc, indent=1, allow_nan=False) + "\n")


def save(obj, path):
    write_json(path, to_dict(obj))


def load(path, kind=None):
    return from_dict(read_json(path), kind)


def save_model(model, path):
    save(model, path)


def load_model(path):
    return load(path, ("crf_model", "crf_gat_model"))


def save_dataset(ds: LabeledDataset, path):
    save(ds, path)


def load_dataset(path) -> LabeledDataset:
    return load(path, "dataset")


# -- predictions -------------------------------------------------------------


def predictions_doc(labelings, marginals=None, algo: str | None = None) -> dict:
    items = []
    for idx, y in enumerate(labelings):
        item = {"labels": (np.asarray(y) + 1).tolist()}
        if marginals is not None and marginals[idx] is not None:
            item["marginals"] = _table(marginals[idx])
        items.append(item)
    return {"schema_version": SCHEMA_VERSION, "kind": "predictions", "algo": algo, "items": items}


def read_labelings(path) -> list[np.ndarray]:
    """Labelings (0-based) from either a predictions file or a dataset file."""
    d = read_json(path)
    _check_version(d)
    kind = d.get("kind")
    if kind == "predictions":
        return [np.array(item["labels"], dtype=np.int64) - 1 for item in d["items"]]
    if kind == "dataset":
        return [y for _, y in from_dict(d, "dataset").items]
    raise ParseError(f"{path}: expected predictions or dataset, found {kind!r}")


# -- CSV ---------------------------------------------------------------------


def write_trace_csv(path, values, header=("step", "value"), start: int = 1):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for step, v in enumerate(values, start=start):
            w.writerow([step, repr(float(v))])


def read_trace_csv(path) -> list[float]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return [float(r[1]) for r in rows[1:]]


def write_label_grid(path, labels, shape):
    """Write a 1-based label map as an ``height x width`` integer matrix."""
    grid = (np.asarray(labels) + 1).reshape(shape)
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows(grid.tolist())


def read_label_grid(path) -> np.ndarray:
    with open(path, newline="") as fh:
        return np.array([[int(v) for v in row] for row in csv.reader(fh) if row]) - 1
