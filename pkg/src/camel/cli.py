"""Command-line front end: ``camel {synth,fit,eval,report}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Errors are reported on stderr as one JSON object.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from .core import CamelConfig, DataError, NumericalError, ProjectionModel, preprocess_rows
from .data import (
    ModelFileError,
    SyntheticSpec,
    generate_synthetic,
    load_features,
    load_model,
    save_features,
    save_model,
)
from .matcheval import build_split, rank_gallery
from .solver import camel_fit, camel_fit_supervised, cluster_purity_report, cmel_fit

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
CMC_RANKS = (1, 5, 10, 20)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        _emit_error("usage", message)
        sys.exit(EXIT_USAGE)


def _emit_error(kind: str, message: str):
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)


def _nonneg_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number") from None
    if not (v >= 0 and np.isfinite(v)):
        raise argparse.ArgumentTypeError(f"must be a finite number >= 0, got {text}")
    return v


def _pos_float(text):
    v = _nonneg_float(text)
    if v == 0:
        raise argparse.ArgumentTypeError("must be > 0")
    return v


def _pos_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _readable(path):
    if not os.path.isfile(path):
        raise DataError(f"{path}: no such file")
    return path


def _writable(path):
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent):
        raise DataError(f"{parent}: output directory does not exist")
    return path


def _load_training(args):
    fs = load_features(_readable(args.features))
    if args.normalize == "l2":
        fs = type(fs)(preprocess_rows(fs.features, "l2"), fs.views, fs.identities, fs.n_views)
    return fs


def _config(args) -> CamelConfig:
    try:
        return CamelConfig(lam=args.lam, k=args.k, dim=args.dim, alpha=args.alpha,
                           epsilon=args.epsilon, max_iter=args.max_iter, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _fit(fs, cfg, variant):
    """Returns (model, state or None)."""
    if variant == "camel":
        return camel_fit(fs, cfg)
    if variant == "cmel":
        return cmel_fit(fs, cfg, return_state=True)
    if variant == "supervised":
        return camel_fit_supervised(fs, cfg), None
    return ProjectionModel.identity(fs.n_views, fs.dim), None


# ----------------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    _writable(args.out)
    spec = SyntheticSpec(V=args.views, ids=args.ids, per_view_per_id=args.per_view, M=args.dim,
                         latent_dim=args.latent_dim, bias_strength=args.bias, noise_sigma=args.noise,
                         seed=args.seed)
    save_features(generate_synthetic(spec), args.out)
    return EXIT_OK


def cmd_fit(args) -> int:
    _writable(args.out)
    cfg = _config(args)
    fs = _load_training(args)
    t0 = time.perf_counter()
    model, state = _fit(fs, cfg, args.variant)
    model = ProjectionModel(model.transforms, config=model.config, variant=args.variant,
                            objective_history=model.objective_history, iterations=model.iterations,
                            converged=model.converged, meta=model.meta, preprocess=args.normalize)
    save_model(model, args.out)
    log = {
        "features": args.features,
        "variant": args.variant,
        "seed": cfg.seed,
        "N": fs.n_samples,
        "V": fs.n_views,
        "M": fs.dim,
        "iterations": model.iterations,
        "converged": model.converged,
        "objective_history": list(model.objective_history),
        "elapsed_seconds": round(time.perf_counter() - t0, 3),
    }
    if state is not None:
        log["constraint_residuals"] = [float(r) for r in state.constraint_residuals]
    with open(args.log or f"{args.out}.log.json", "w") as fh:
        json.dump(log, fh, indent=2)
        fh.write("\n")
    if state is not None and args.assignments:
        with open(args.assignments, "w") as fh:
            fh.write("row,initial,final\n")
            for i, (a, b) in enumerate(zip(state.initial_assignment, state.H.assignment)):
                fh.write(f"{i},{a},{b}\n")
    return EXIT_OK


def evaluate_repetitions(model, fs, protocol, shots, repetitions, seed, gallery_view=None):
    reps = []
    for r in range(repetitions):
        split = build_split(fs, protocol, shots, seed + r, gallery_view)
        res = rank_gallery(model, split, fs)
        reps.append({"seed": seed + r, "cmc": res.cmc, "map": res.map,
                     "excluded_probes": len(res.excluded_probes),
                     "excluded_identities": len(split.excluded_identities)})
    return reps


def format_eval_report(reps, header: dict) -> str:
    n = min(len(r["cmc"]) for r in reps)
    cmc = np.array([r["cmc"][:n] for r in reps])
    maps = np.array([r["map"] for r in reps])
    lines = ["[summary]"]
    lines += [f"{k} = {v}" for k, v in header.items()]
    lines.append(f"repetitions = {len(reps)}")
    for k in CMC_RANKS:
        if k <= n:
            lines.append(f"rank{k}_mean = {cmc[:, k - 1].mean():.6f}")
            lines.append(f"rank{k}_std = {cmc[:, k - 1].std():.6f}")
    lines.append(f"map_mean = {maps.mean():.6f}")
    lines.append(f"map_std = {maps.std():.6f}")
    lines.append("")
    lines.append("[repetitions]")
    lines.append("rep\tseed\trank1\tmap\texcluded_probes\texcluded_identities")
    for i, r in enumerate(reps):
        lines.append(f"{i}\t{r['seed']}\t{r['cmc'][0]:.6f}\t{r['map']:.6f}\t"
                     f"{r['excluded_probes']}\t{r['excluded_identities']}")
    lines.append("")
    lines.append("[cmc]")
    lines.append("rank\taccuracy")
    for k in range(n):
        lines.append(f"{k + 1}\t{cmc[:, k].mean():.6f}")
    return "\n".join(lines) + "\n"


def cmd_eval(args) -> int:
    if args.out:
        _writable(args.out)
    fs = load_features(_readable(args.features))
    if not fs.labeled:
        raise DataError(f"{args.features}: evaluation needs identity labels")
    if args.model == "identity":
        model = ProjectionModel.identity(fs.n_views, fs.dim)
    else:
        model = load_model(_readable(args.model))
    gallery_view = None if args.gallery_view is None else args.gallery_view - 1
    reps = evaluate_repetitions(model, fs, args.protocol, args.shots, args.repetitions, args.seed,
                                gallery_view)
    header = {
        "model": args.model,
        "variant": model.variant,
        "features": args.features,
        "protocol": args.protocol,
        "shots": args.shots or (1 if args.protocol == "single" else 3),
        "seed": args.seed,
    }
    text = format_eval_report(reps, header)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _read_assignments(path):
    with open(path) as fh:
        head = fh.readline().strip().split(",")
        if not head or head[0] != "row" or len(head) < 2:
            raise DataError(f"{path}:1: header must be 'row,<stage>,...'")
        body = np.loadtxt(fh, delimiter=",", dtype=np.int64, ndmin=2)
    return head[1:], body[:, 1:]


def cmd_report(args) -> int:
    if args.out:
        _writable(args.out)
    fs = load_features(_readable(args.features))
    if not fs.labeled:
        raise DataError(f"{args.features}: purity report needs identity labels")
    if args.assignments:
        stages, table = _read_assignments(_readable(args.assignments))
        if table.shape[0] != fs.n_samples:
            raise DataError("assignment file and features differ in row count")
        columns = {s: table[:, j] for j, s in enumerate(stages)}
    else:
        if args.normalize == "l2":
            fs = type(fs)(preprocess_rows(fs.features, "l2"), fs.views, fs.identities, fs.n_views)
        _, state = camel_fit(fs, _config(args))
        columns = {"initial": state.initial_assignment, "converged": state.H.assignment}
    lines = ["stage\trate_mixed\tclusters"]
    for stage, assign in columns.items():
        rep = cluster_purity_report(assign, fs.identities)
        lines.append(f"{stage}\t{rep.rate_mixed:.6f}\t{len(rep.cluster_ids)}")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ------------------------------------------------------------------------ parser


def _add_solver_flags(p):
    p.add_argument("--lambda", dest="lam", type=_nonneg_float, default=0.01,
                   help="cross-view consistency weight (default 0.01)")
    p.add_argument("--k", type=_pos_int, default=500, help="number of clusters (default 500)")
    p.add_argument("--dim", type=_pos_int, default=None, help="output dimension T (default M)")
    p.add_argument("--alpha", type=_nonneg_float, default=None,
                   help="covariance ridge (default 1%% of the mean per-feature second moment, per view)")
    p.add_argument("--epsilon", type=_pos_float, default=1e-8)
    p.add_argument("--max-iter", type=_pos_int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--normalize", choices=("l2", "none"), default="l2",
                   help="per-sample feature normalisation applied before fitting and matching")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="camel", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic labeled cross-view feature CSV")
    d = SyntheticSpec()
    p.add_argument("--out", required=True)
    p.add_argument("--views", type=_pos_int, default=d.V)
    p.add_argument("--ids", type=_pos_int, default=d.ids)
    p.add_argument("--per-view", type=_pos_int, default=d.per_view_per_id)
    p.add_argument("--dim", type=_pos_int, default=d.M)
    p.add_argument("--latent-dim", type=_pos_int, default=d.latent_dim)
    p.add_argument("--bias", type=_nonneg_float, default=d.bias_strength)
    p.add_argument("--noise", type=_nonneg_float, default=d.noise_sigma)
    p.add_argument("--seed", type=int, default=d.seed)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit", help="learn per-view projections")
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--variant", choices=("camel", "cmel", "supervised", "euclidean"), default="camel")
    p.add_argument("--log", default=None, help="run log path (default <out>.log.json)")
    p.add_argument("--assignments", default=None, help="also write initial/final cluster ids as CSV")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", help="CMC / mAP of a model on labeled features")
    p.add_argument("--features", required=True)
    p.add_argument("--model", required=True, help="model file, or 'identity' for raw Euclidean")
    p.add_argument("--protocol", choices=("single", "multi"), default="single")
    p.add_argument("--shots", type=_pos_int, default=None)
    p.add_argument("--repetitions", type=_pos_int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gallery-view", type=_pos_int, default=None,
                   help="draw the gallery from this view only (1-based)")
    p.add_argument("--out", default=None, help="report path (default stdout)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="mixed-identity cluster rate, initial vs converged")
    p.add_argument("--features", required=True)
    p.add_argument("--assignments", default=None, help="CSV 'row,<stage>,...' of cluster ids")
    p.add_argument("--out", default=None)
    _add_solver_flags(p)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "synth" and args.latent_dim > args.dim:
            parser.error("--latent-dim cannot exceed --dim")
    except SystemExit as exc:  # argparse exits on errors and --help
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        _emit_error("usage", str(exc))
        return EXIT_USAGE
    except (DataError, ModelFileError, OSError) as exc:
        _emit_error("data", str(exc))
        return EXIT_DATA
    except (NumericalError, np.linalg.LinAlgError) as exc:
        _emit_error("numerical", str(exc))
        return EXIT_NUMERIC
    except ValueError as exc:
        _emit_error("data", str(exc))
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
