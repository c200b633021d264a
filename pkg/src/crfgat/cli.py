"""Command-line interface: ``crfgat {gen,infer,train,compare,eval}``.

Exit status is 0 on success, 1 on a usage error and 2 on a runtime error.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from pathlib import Path

import numpy as np

from . import io
from .data import accuracy, gen_synthetic
from .errors import CrfError, InstanceTooLargeError, ModelShapeError
from .gat import CrfGatModel, crf_from_gat, decode_argmin, gat_forward, gat_from_crf, unary_for
from .meanfield import MeanFieldConfig, decode_argmax, run_mean_field
from .model import CrfModel, distribution_from_potentials, gibbs_energy
from .oracle import SamplerConfig, enumerate_exact, gibbs_sample
from .training import train

ALGOS = ("mf", "mf-seq", "gat", "exact", "gibbs")
COMPARE_COLUMNS = ("algo", "item", "accuracy", "energy", "linf_vs_exact", "seconds", "labels")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="crfgat", description="Mean-field CRF inference and CRF-GAT models.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="generate a synthetic labeled dataset")
    p.add_argument("--spec", required=True, help="synthetic spec JSON")
    p.add_argument("--out", required=True, help="dataset JSON to write")

    p = sub.add_parser("infer", help="run one inference algorithm")
    p.add_argument("--model", required=True, help="crf_model or crf_gat_model JSON")
    p.add_argument("--data", help="dataset JSON (required for a crf_gat_model)")
    p.add_argument("--algo", required=True, choices=ALGOS)
    p.add_argument("--out", required=True, help="predictions JSON to write")
    _add_inference_flags(p)
    p.add_argument("--trace", help="CSV of the per-iteration L-inf change (mean field only)")
    p.add_argument("--labels-csv", help="CSV label map per grid item (suffixed when several)")

    p = sub.add_parser("train", help="train a CRF-GAT end to end")
    p.add_argument("--model", required=True, help="crf_gat_model JSON (initial parameters)")
    p.add_argument("--data", required=True, help="dataset JSON")
    p.add_argument("--config", required=True, help="train config JSON")
    p.add_argument("--out", required=True, help="trained model JSON to write")
    p.add_argument("--loss-trace", required=True, help="CSV of per-epoch loss")

    p = sub.add_parser("compare", help="run several algorithms and report a CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--data")
    p.add_argument("--algos", required=True, help=f"comma-separated subset of {','.join(ALGOS)}")
    p.add_argument("--report", required=True, help="CSV report to write")
    _add_inference_flags(p)

    p = sub.add_parser("eval", help="accuracy of predicted labelings")
    p.add_argument("--pred", required=True, help="predictions or dataset JSON")
    p.add_argument("--gold", required=True, help="predictions or dataset JSON")
    return parser


def _add_inference_flags(p):
    p.add_argument("--max-iter", type=int, help="mean-field iteration cap (default 100)")
    p.add_argument("--tol", type=float, default=1e-6, help="mean-field L-inf tolerance")
    p.add_argument("--seed", type=int, default=0, help="sampler seed")
    p.add_argument("--sweeps", type=int, default=10_000, help="sampler sweeps")
    p.add_argument("--burn-in", type=int, default=1_000, help="sampler burn-in sweeps")
    p.add_argument("--metropolis", action="store_true", help="Metropolis instead of Gibbs updates")


def _need_file(path):
    if not Path(path).is_file():
        raise FileNotFoundError(f"no such file: {path}")


def _load_instances(args):
    """Return ``(model, [(crf, gold, shape)])`` for the requested inputs."""
    _need_file(args.model)
    model = io.load_model(args.model)
    if isinstance(model, CrfModel):
        if args.data:
            raise UsageError("a crf_model is a complete instance; omit --data")
        return model, [(model, None, None)]
    if not args.data:
        raise UsageError("--data is required with a crf_gat_model")
    _need_file(args.data)
    ds = io.load_dataset(args.data)
    out = []
    for idx, (seq, gold) in enumerate(ds.items):
        shape = ds.shapes[idx] if ds.shapes else None
        out.append((crf_from_gat(model, seq), gold, shape))
    return model, out


def _run_algo(algo, model, crf: CrfModel, args) -> dict:
    mf_cfg = MeanFieldConfig(
        max_iter=args.max_iter or 100,
        tol=args.tol,
        schedule="sequential" if algo == "mf-seq" else "parallel",
    )
    result = {}
    if algo in ("mf", "mf-seq"):
        q, diag = run_mean_field(crf, mf_cfg)
        result.update(marginals=q, labels=decode_argmax(q), trace=diag.linf_trace)
    elif algo == "gat":
        if isinstance(model, CrfGatModel):
            gat_model, unary = model, unary_for(model, crf.sequence)
        else:
            gat_model, unary = gat_from_crf(crf, depth=args.max_iter or 1), crf.unary
        psi, _ = gat_forward(gat_model, crf.sequence, unary, keep_trace=False)
        result.update(marginals=distribution_from_potentials(psi), labels=decode_argmin(psi))
    elif algo == "exact":
        ex = enumerate_exact(crf)
        result.update(marginals=ex.marginals, labels=ex.map_labeling, log_z=ex.log_z)
    elif algo == "gibbs":
        cfg = SamplerConfig(
            sweeps=args.sweeps,
            burn_in=args.burn_in,
            seed=args.seed,
            variant="metropolis" if args.metropolis else "gibbs",
        )
        q = gibbs_sample(crf, cfg)
        result.update(marginals=q, labels=decode_argmax(q))
    else:
        raise UsageError(f"unknown algorithm {algo!r}")
    return result


def _suffixed(path, idx, count):
    if count == 1:
        return Path(path)
    p = Path(path)
    return p.with_name(f"{p.stem}_{idx}{p.suffix}")


def cmd_gen(args):
    _need_file(args.spec)
    d = io.read_json(args.spec)
    spec = io.from_dict(d if "kind" in d else d | {"kind": "synthetic_spec"}, "synthetic_spec")
    io.save_dataset(gen_synthetic(spec), args.out)
    return 0


def cmd_infer(args):
    model, instances = _load_instances(args)
    labels, margs = [], []
    for idx, (crf, _, shape) in enumerate(instances):
        res = _run_algo(args.algo, model, crf, args)
        labels.append(res["labels"])
        margs.append(res["marginals"])
        if args.trace and "trace" in res:
            io.write_trace_csv(_suffixed(args.trace, idx, len(instances)), res["trace"])
        if args.labels_csv and shape is not None:
            io.write_label_grid(_suffixed(args.labels_csv, idx, len(instances)), res["labels"], shape)
    io.write_json(args.out, io.predictions_doc(labels, margs, algo=args.algo))
    return 0


def cmd_train(args):
    for path in (args.model, args.data, args.config):
        _need_file(path)
    model = io.load_model(args.model)
    if not isinstance(model, CrfGatModel):
        raise UsageError("train needs a crf_gat_model")
    data = io.load_dataset(args.data)
    d = io.read_json(args.config)
    cfg = io.from_dict(d if "kind" in d else d | {"kind": "train_config"}, "train_config")
    trained, losses = train(model, data, cfg)
    io.save_model(trained, args.out)
    io.write_trace_csv(args.loss_trace, losses, header=("epoch", "loss"), start=0)
    return 0


def _fmt(v):
    return "" if v is None else repr(float(v))


def cmd_compare(args):
    algos = [a.strip() for a in args.algos.split(",") if a.strip()]
    bad = [a for a in algos if a not in ALGOS]
    if bad or not algos:
        raise UsageError(f"unknown algorithms {bad}; choose from {','.join(ALGOS)}")
    model, instances = _load_instances(args)
    rows = []
    for idx, (crf, gold, _) in enumerate(instances):
        try:
            exact_marg = enumerate_exact(crf).marginals
        except InstanceTooLargeError:
            exact_marg = None
        for algo in algos:
            t0 = time.perf_counter()
            res = _run_algo(algo, model, crf, args)
            elapsed = time.perf_counter() - t0
            linf = None if exact_marg is None else np.abs(res["marginals"] - exact_marg).max()
            rows.append(
                {
                    "algo": algo,
                    "item": idx,
                    "accuracy": _fmt(None if gold is None else accuracy(res["labels"], gold)),
                    "energy": _fmt(gibbs_energy(res["labels"], crf)),
                    "linf_vs_exact": _fmt(linf),
                    "seconds": f"{elapsed:.6f}",
                    "labels": " ".join(str(v + 1) for v in res["labels"]),
                }
            )
    with open(args.report, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=COMPARE_COLUMNS)
        w.writeheader()
        w.writerows(rows)
    return 0


def cmd_eval(args):
    for path in (args.pred, args.gold):
        _need_file(path)
    pred = io.read_labelings(args.pred)
    gold = io.read_labelings(args.gold)
    if len(pred) != len(gold):
        raise ModelShapeError(f"{len(pred)} predicted items but {len(gold)} gold items")
    for p, g in zip(pred, gold):
        if p.shape != g.shape:
            raise ModelShapeError(f"labelings differ in length: {p.shape} vs {g.shape}")
    hits = sum(int((p == g).sum()) for p, g in zip(pred, gold))
    total = sum(g.size for g in gold)
    print(hits / total if total else 1.0)
    return 0


COMMANDS = {"gen": cmd_gen, "infer": cmd_infer, "train": cmd_train, "compare": cmd_compare, "eval": cmd_eval}


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except InstanceTooLargeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CrfError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
