"""Command-line interface: gen, seed, run, batch, diagnose, experiment.

Exit codes: 0 success, 1 usage error, 2 data/config error.  Identical
invocations produce byte-identical outputs; seeds fully determine runs.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import PRNG_NAME, __version__
from .dataset import (
    DataFormatError,
    load_dense_csv,
    load_svmlight,
    mixture_from_toml,
    generate_gauss,
    write_dense_csv,
)
from .geometry import cost, read_centroids_csv, run_batch, write_centroids_csv
from .harness import ExperimentSpec, parse_schedules, run_experiment, write_outputs
from .seeding import SeedConfig, make_seeds
from .diagnostics import clusterability, is_stationary, margin, update_probability
from .stochastic import RunConfig, run_stochastic


class _Parser(argparse.ArgumentParser):
    """argparse that exits 1 (not 2) on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(self._usage_exit(message))

    def _usage_exit(self, message) -> int:
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        return 1


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def build_parser() -> _Parser:
    parser = _Parser(prog="skm", description=__doc__)
    parser.add_argument("--version", action="version", version=f"skm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="generate a Gaussian-mixture dataset")
    p.add_argument("--spec", required=True, help="mixture TOML (k, d, weights, means, sigmas, seed)")
    p.add_argument("--n", required=True, type=_positive_int, help="number of points")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("seed", help="draw initial centroids")
    _add_data_flags(p)
    p.add_argument("--k", required=True, type=_positive_int, help="number of centroids")
    p.add_argument("--method", choices=["random", "buckshot"], default="random")
    p.add_argument("--m0", type=_positive_int, help="buckshot sample size (>= k)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("run", help="run stochastic (mini-batch) k-means")
    _add_data_flags(p)
    p.add_argument("--k", type=_positive_int, help="number of centroids (random-point init)")
    p.add_argument("--init", help="initial centroids CSV (overrides --k init)")
    p.add_argument("--m", required=True, type=_positive_int, help="mini-batch size")
    p.add_argument("--schedule", required=True,
                   help="flat | count | const (see --schedule-help of experiment)")
    p.add_argument("--cprime", type=float, help="flat schedule numerator c'")
    p.add_argument("--t0", type=float, help="flat schedule offset t0")
    p.add_argument("--eta", type=float, help="constant schedule rate")
    p.add_argument("--iters", type=_positive_int, help="iteration budget T")
    p.add_argument("--epochs", type=_positive_int, help="number of epochs")
    p.add_argument("--epoch-len", type=_positive_int, help="iterations per epoch")
    p.add_argument("--eval-every", type=_positive_int, help="cost evaluation cadence")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ref", help="reference centroids CSV; trace records distance to it")
    p.add_argument("--full-batch", action="store_true",
                   help="testing mode: deterministic batch of every point once "
                        "(not part of the sampled algorithm)")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("batch", help="run batch (Lloyd's) k-means")
    _add_data_flags(p)
    p.add_argument("--k", type=_positive_int, help="number of centroids (random-point init)")
    p.add_argument("--init", help="initial centroids CSV")
    p.add_argument("--iters", type=_positive_int, default=20, help="maximum iterations")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("diagnose", help="margins, stationarity, clusterability")
    _add_data_flags(p)
    p.add_argument("--centroids", required=True, help="centroid CSV to diagnose")
    p.add_argument("--alpha", type=float, default=0.5, help="clusterability strength in (0,1)")
    p.add_argument("--tol", type=float, default=1e-9, help="stationarity tolerance")
    p.add_argument("--out", help="also write the full JSON report here")

    p = sub.add_parser("experiment", help="run an experiment grid from TOML")
    p.add_argument("--spec", required=True, help="experiment TOML")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--threads", type=_positive_int,
                   default=int(os.environ.get("SKM_THREADS", "1")),
                   help="parallel cells (default: SKM_THREADS or 1)")
    return parser


def _add_data_flags(p) -> None:
    p.add_argument("--data", required=True, help="dataset path")
    p.add_argument("--format", choices=["csv", "svmlight"], default="csv")
    p.add_argument("--d", type=_positive_int, help="dimension override for svmlight")


def _load_data(args):
    if args.format == "svmlight":
        return load_svmlight(args.data, d=args.d)
    return load_dense_csv(args.data)


def _make_run_schedule(args, k: int):
    text = args.schedule
    if text == "flat":
        if args.cprime is None or args.t0 is None:
            raise ValueError("flat schedule needs --cprime and --t0")
        text = f"flat({args.cprime},{args.t0})"
    elif text == "const" and args.eta is not None:
        text = f"const({args.eta})"
    specs = parse_schedules(text)
    if len(specs) != 1:
        raise ValueError("run takes a single concrete schedule, not a grid")
    return specs[0].make(k, getattr(args, "epoch_len", None))


def _initial_centroids(args, ds):
    from .seeding import random_seeds

    if args.init:
        return read_centroids_csv(args.init)
    if not args.k:
        raise ValueError("pass --k for random-point init or --init for explicit centroids")
    return random_seeds(np.random.default_rng(args.seed), ds, args.k)


# ---------------------------------------------------------------------------
# subcommands


def _cmd_gen(args) -> int:
    spec = mixture_from_toml(args.spec)
    ds, labels = generate_gauss(spec, args.n)
    os.makedirs(args.out, exist_ok=True)
    write_dense_csv(ds, os.path.join(args.out, "data.csv"))
    with open(os.path.join(args.out, "labels.csv"), "w", encoding="utf-8") as fh:
        for lab in labels.labels:
            fh.write(f"{int(lab)}\n")
    _write_meta(args.out, {"command": "gen", "n": args.n, "k": spec.k, "d": spec.d,
                           "mixture_seed": spec.seed})
    return 0


def _cmd_seed(args) -> int:
    ds = _load_data(args)
    config = SeedConfig(
        method="buckshot" if args.method == "buckshot" else "random_points",
        k=args.k,
        m0=args.m0,
        seed=args.seed,
    )
    seeds = make_seeds(ds, config)
    os.makedirs(args.out, exist_ok=True)
    write_centroids_csv(seeds, os.path.join(args.out, "centroids.csv"))
    _write_meta(args.out, {"command": "seed", "method": args.method, "k": args.k,
                           "m0": args.m0, "seed": args.seed})
    return 0


def _cmd_run(args) -> int:
    ds = _load_data(args)
    c0 = _initial_centroids(args, ds)
    if args.iters is not None:
        iters, eval_every = args.iters, args.eval_every or 1
    elif args.epochs is not None and args.epoch_len is not None:
        iters = args.epochs * args.epoch_len
        eval_every = args.eval_every or args.epoch_len
    else:
        raise ValueError("pass --iters or both --epochs and --epoch-len")
    config = RunConfig(
        m=args.m,
        iters=iters,
        schedule=_make_run_schedule(args, c0.k),
        seed=args.seed,
        eval_every=eval_every,
        full_batch=args.full_batch,
    )
    reference = read_centroids_csv(args.ref) if args.ref else None
    final, trace = run_stochastic(ds, c0, config, reference=reference)
    os.makedirs(args.out, exist_ok=True)
    trace.write_ndjson(os.path.join(args.out, "trace.ndjson"))
    write_centroids_csv(final, os.path.join(args.out, "centroids.csv"))
    _write_meta(args.out, {"command": "run", "k": c0.k, "m": args.m, "iters": iters,
                           "schedule": args.schedule, "seed": args.seed,
                           "eval_every": eval_every, "full_batch": args.full_batch,
                           "final_phi": cost(ds, final).total})
    return 0


def _cmd_batch(args) -> int:
    ds = _load_data(args)
    c0 = _initial_centroids(args, ds)
    final, trace = run_batch(ds, c0, args.iters)
    os.makedirs(args.out, exist_ok=True)
    trace.write_ndjson(os.path.join(args.out, "trace.ndjson"))
    write_centroids_csv(final, os.path.join(args.out, "centroids.csv"))
    _write_meta(args.out, {"command": "batch", "k": c0.k, "iters": args.iters,
                           "seed": args.seed, "converged": trace.converged,
                           "final_phi": cost(ds, final).total})
    return 0


def _cmd_diagnose(args) -> int:
    ds = _load_data(args)
    c = read_centroids_csv(args.centroids)
    stat = is_stationary(ds, c, tol=args.tol)
    phi = cost(ds, c).total
    lines = [
        f"cost: {_fmt(phi)}",
        f"stationary: {stat.is_stationary} (drift {_fmt(stat.drift)})",
        f"boundary: {stat.boundary}",
    ]
    report = {
        "phi": phi,
        "stationary": stat.is_stationary,
        "drift": stat.drift,
        "boundary": stat.boundary,
    }
    if c.n_active >= 2:
        mrep = margin(ds, c)
        lines.append(
            f"margin: {_fmt(mrep.delta)} attained by pair {mrep.pair} at point {mrep.point}"
        )
        report["margin"] = {"delta": mrep.delta, "pair": list(mrep.pair),
                            "point": mrep.point}
        crep = clusterability(ds, c, args.alpha)
        lines.append(
            f"clusterability(alpha={args.alpha:g}): f_max {_fmt(crep.f_max)} vs "
            f"floor {_fmt(crep.floor)} -> {'satisfied' if crep.satisfied else 'not satisfied'}"
        )
        lines.append(f"p_min: {_fmt(crep.p_min)}  w_min: {_fmt(crep.w_min)}")
        report["clusterability"] = json.loads(crep.to_json())
    from .geometry import assign

    sizes = assign(ds, c).sizes
    probs = {int(r): update_probability(int(sizes[r]), ds.n, 1) for r in range(c.k)}
    report["update_probability_m1"] = probs
    print("\n".join(lines))
    if args.out:
        os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0


def _cmd_experiment(args) -> int:
    spec = ExperimentSpec.from_toml(args.spec)
    bundle = run_experiment(spec, threads=args.threads)
    write_outputs(bundle, args.out)
    return 0


def _write_meta(outdir: str, payload: dict) -> None:
    payload = dict(payload)
    payload["prng"] = PRNG_NAME
    payload["version"] = __version__
    with open(os.path.join(outdir, "meta.json"), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


_COMMANDS = {
    "gen": _cmd_gen,
    "seed": _cmd_seed,
    "run": _cmd_run,
    "batch": _cmd_batch,
    "diagnose": _cmd_diagnose,
    "experiment": _cmd_experiment,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse --help exits 0, usage errors exit 1
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (DataFormatError, ValueError, OSError) as exc:
        print(f"skm: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
