"""Experiment orchestration: convergence traces, slope fits, cost-ratio tables.

An experiment is a grid of cells (k, m, schedule, optional epoch length).
Every cell shares the same initial centroids for its k (drawn once from
the data) and averages R repeated runs pointwise in cost; repeats vary
only the sampling seed.  The harness then shifts traces by the smallest
cost observed anywhere in the grid, fits log-log slopes on the shifted
tails, and compares final costs against a 20-iteration batch baseline
started from the same centroids.
"""

from __future__ import annotations

import json
import math
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import PRNG_NAME, __version__
from .dataset import Dataset, MixtureSpec, generate_gauss, load_dense_csv, load_svmlight, mixture_from_mapping
from .geometry import CentroidSet, cost, run_batch
from .seeding import random_seeds
from .stochastic import ConstantRate, CountRate, FlatRate, RateSchedule, RunConfig, run_stochastic
from .trace import RunTrace

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

BATCH_BASELINE_ITERS = 20
EVAL_EVERY_ITER_MAX = 1000


# ---------------------------------------------------------------------------
# schedule grammar


@dataclass(frozen=True)
class ScheduleSpec:
    """One concrete learning-rate setup for a cell.

    ``eta=None`` on a const spec means 1/sqrt(epoch length), resolved per
    cell.
    """

    kind: str  # "flat" | "count" | "const"
    c_prime: float | None = None
    t0: float | None = None
    eta: float | None = None

    def label(self) -> str:
        if self.kind == "flat":
            return f"flat-c{_num(self.c_prime)}-t{_num(self.t0)}"
        if self.kind == "count":
            return "count"
        return "const" if self.eta is None else f"const-{_num(self.eta)}"

    def make(self, k: int, epoch_len: int | None) -> RateSchedule:
        if self.kind == "flat":
            return FlatRate(self.c_prime, self.t0)
        if self.kind == "count":
            return CountRate(k)
        eta = self.eta
        if eta is None:
            if not epoch_len:
                raise ValueError("const without eta needs an epoch length (eta = 1/sqrt(E))")
            eta = 1.0 / math.sqrt(epoch_len)
        return ConstantRate(eta)


def _num(x: float) -> str:
    return f"{x:g}"


_FLAT_RE = re.compile(r"^flat\(\s*([^,()]+)\s*,\s*([^()]+)\)$")
_CONST_RE = re.compile(r"^const(?:\(\s*([^()]+)\s*\))?$")


def parse_schedules(text: str) -> list[ScheduleSpec]:
    """Parse one schedule string, expanding flat t0 grids into one spec each.

    Grammar: ``flat(C,T0)`` with ``T0`` a single value or ``a|b|c`` grid;
    ``count``; ``const`` (eta = 1/sqrt(E)) or ``const(ETA)``.
    """
    text = text.strip()
    if text == "count":
        return [ScheduleSpec(kind="count")]
    m = _CONST_RE.match(text)
    if m:
        eta = None if m.group(1) is None else float(m.group(1))
        return [ScheduleSpec(kind="const", eta=eta)]
    m = _FLAT_RE.match(text)
    if m:
        c_prime = float(m.group(1))
        return [
            ScheduleSpec(kind="flat", c_prime=c_prime, t0=float(tok))
            for tok in m.group(2).split("|")
        ]
    raise ValueError(f"cannot parse schedule {text!r}")


# ---------------------------------------------------------------------------
# experiment specification


@dataclass
class ExperimentSpec:
    """Grid definition plus dataset source for one experiment.

    ``dataset`` is a Dataset instance, or a mapping with either
    ``{"path": ..., "format": "csv"|"svmlight"}`` or
    ``{"mixture": <MixtureSpec or mapping>, "n": ...}``.
    Exactly one of ``iters`` or ``(epochs, epoch_lens)`` must be set.
    """

    name: str
    dataset: object
    ks: list[int]
    ms: list[int]
    schedules: list[str]
    repeats: int = 1
    seed: int = 0
    iters: int | None = None
    epochs: int | None = None
    epoch_lens: list[int] | None = None
    eval_every: int | None = None

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if not self.ks or not self.ms or not self.schedules:
            raise ValueError("k, m, and schedule grids must be non-empty")
        has_iters = self.iters is not None
        has_epochs = self.epochs is not None and self.epoch_lens is not None
        if has_iters == has_epochs:
            raise ValueError("set exactly one of iters or (epochs, epoch_lens)")
        if has_iters and self.iters < 1:
            raise ValueError("iters must be >= 1")
        if has_epochs and (self.epochs < 1 or not self.epoch_lens):
            raise ValueError("epochs must be >= 1 with a non-empty epoch_lens grid")

    @classmethod
    def from_toml(cls, path) -> "ExperimentSpec":
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
        epoch_lens = doc.get("epoch_len")
        if isinstance(epoch_lens, int):
            epoch_lens = [epoch_lens]
        return cls(
            name=doc.get("name", "experiment"),
            dataset=doc["dataset"],
            ks=[int(v) for v in _as_list(doc["k"])],
            ms=[int(v) for v in _as_list(doc["m"])],
            schedules=[str(s) for s in _as_list(doc["schedules"])],
            repeats=int(doc.get("repeats", 1)),
            seed=int(doc.get("seed", 0)),
            iters=doc.get("iters"),
            epochs=doc.get("epochs"),
            epoch_lens=epoch_lens,
            eval_every=doc.get("eval_every"),
        )


def _as_list(v):
    return v if isinstance(v, list) else [v]


def resolve_dataset(source) -> Dataset:
    """Materialize the dataset a spec refers to."""
    if isinstance(source, Dataset):
        return source
    if not isinstance(source, dict):
        raise ValueError(f"cannot interpret dataset source {source!r}")
    if "path" in source:
        fmt = source.get("format", "csv")
        if fmt == "csv":
            return load_dense_csv(source["path"])
        if fmt == "svmlight":
            return load_svmlight(source["path"], d=source.get("d"))
        raise ValueError(f"unknown dataset format {fmt!r}")
    if "mixture" in source:
        mix = source["mixture"]
        if not isinstance(mix, MixtureSpec):
            mix = mixture_from_mapping(mix)
        ds, _ = generate_gauss(mix, int(source["n"]))
        return ds
    raise ValueError("dataset source needs either 'path' or 'mixture'")


# ---------------------------------------------------------------------------
# cells


@dataclass(frozen=True)
class Cell:
    index: int
    k: int
    m: int
    epoch_len: int | None
    schedule: ScheduleSpec

    def key(self) -> str:
        parts = [f"k{self.k}", f"m{self.m}"]
        if self.epoch_len is not None:
            parts.append(f"E{self.epoch_len}")
        parts.append(self.schedule.label())
        return "-".join(parts)


def expand_cells(spec: ExperimentSpec) -> list[Cell]:
    cells = []
    epoch_lens = spec.epoch_lens if spec.epoch_lens is not None else [None]
    index = 0
    for k in spec.ks:
        for m in spec.ms:
            for epoch_len in epoch_lens:
                for text in spec.schedules:
                    for sched in parse_schedules(text):
                        cells.append(Cell(index, k, m, epoch_len, sched))
                        index += 1
    return cells


def _cell_iters(spec: ExperimentSpec, cell: Cell) -> int:
    return spec.iters if spec.iters is not None else spec.epochs * cell.epoch_len


def _cell_eval_every(spec: ExperimentSpec, cell: Cell, iters: int) -> int:
    if spec.eval_every is not None:
        return spec.eval_every
    if iters <= EVAL_EVERY_ITER_MAX:
        return 1
    # long runs: evaluating cost every iteration is O(nk) wasted work
    return cell.epoch_len if cell.epoch_len else max(1, iters // EVAL_EVERY_ITER_MAX)


def _seed_for(master: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=master, spawn_key=tuple(key))


_DOMAIN_C0 = 0
_DOMAIN_SAMPLING = 1


# ---------------------------------------------------------------------------
# results


@dataclass
class SlopeFit:
    """Least-squares fit of log y against log t."""

    slope: float
    intercept: float
    t_lo: float
    t_hi: float
    residual_rms: float
    n_used: int
    n_excluded: int


def slope_fit(ts, ys, fit_range: tuple[float, float] | None = None) -> SlopeFit:
    """OLS of log y on log t; default range is the tail half of usable points.

    Points with t <= 0 or y <= 0 are excluded (and counted).  Raises when
    fewer than 10 usable points remain.
    """
    ts = np.asarray(ts, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if ts.shape != ys.shape:
        raise ValueError("t and y series differ in length")
    usable = (ts > 0) & (ys > 0)
    n_excluded = int(ts.size - usable.sum())
    t_ok, y_ok = ts[usable], ys[usable]
    if fit_range is None:
        half = t_ok.size // 2
        t_fit, y_fit = t_ok[half:], y_ok[half:]
    else:
        lo, hi = fit_range
        in_range = (t_ok >= lo) & (t_ok <= hi)
        t_fit, y_fit = t_ok[in_range], y_ok[in_range]
    if t_fit.size < 10:
        raise ValueError(f"need >= 10 usable points to fit, got {t_fit.size}")
    lx, ly = np.log(t_fit), np.log(y_fit)
    design = np.column_stack([lx, np.ones_like(lx)])
    (slope, intercept), *_ = np.linalg.lstsq(design, ly, rcond=None)
    resid = ly - (slope * lx + intercept)
    return SlopeFit(
        slope=float(slope),
        intercept=float(intercept),
        t_lo=float(t_fit[0]),
        t_hi=float(t_fit[-1]),
        residual_rms=float(np.sqrt(np.mean(resid**2))),
        n_used=int(t_fit.size),
        n_excluded=n_excluded,
    )


@dataclass
class CellResult:
    cell: Cell
    ts: np.ndarray
    phi_avg: np.ndarray
    phi_shifted: np.ndarray | None = None
    baseline: np.ndarray | None = None
    slope: SlopeFit | None = None
    repeat_seeds: list[int] = field(default_factory=list)

    @property
    def phi0(self) -> float:
        return float(self.phi_avg[0])

    @property
    def final_phi(self) -> float:
        return float(self.phi_avg[-1])

    def baseline_t0(self) -> float:
        return self.cell.schedule.t0 if self.cell.schedule.kind == "flat" else 0.0


@dataclass
class BatchBaseline:
    k: int
    centroids: CentroidSet
    trace: RunTrace
    phi: float


@dataclass
class ExperimentBundle:
    spec: ExperimentSpec
    cells: list[CellResult]
    batch: dict[int, BatchBaseline]
    phi_min: float
    c0_seeds: dict[int, int]


def average_traces(traces: list[np.ndarray]) -> np.ndarray:
    """Pointwise mean of equal-length series, invariant to list order.

    Uses exactly-rounded summation so permuting the repeats cannot change
    the result bitwise.
    """
    stacked = np.stack(traces)
    n = stacked.shape[0]
    return np.array(
        [math.fsum(stacked[:, j]) / n for j in range(stacked.shape[1])]
    )


def run_experiment(spec: ExperimentSpec, threads: int = 1) -> ExperimentBundle:
    """Run the full grid and aggregate traces, slopes, and batch baselines."""
    ds = resolve_dataset(spec.dataset)
    cells = expand_cells(spec)

    c0_by_k: dict[int, CentroidSet] = {}
    c0_seeds: dict[int, int] = {}
    for k in sorted(set(spec.ks)):
        ss = _seed_for(spec.seed, _DOMAIN_C0, k)
        c0_by_k[k] = random_seeds(np.random.default_rng(ss), ds, k)
        c0_seeds[k] = spec.seed

    def one_run(cell: Cell, rep: int) -> RunTrace:
        iters = _cell_iters(spec, cell)
        config = RunConfig(
            m=cell.m,
            iters=iters,
            schedule=cell.schedule.make(cell.k, cell.epoch_len),
            seed=_seed_for(spec.seed, _DOMAIN_SAMPLING, cell.index, rep),
            eval_every=_cell_eval_every(spec, cell, iters),
        )
        _, trace = run_stochastic(ds, c0_by_k[cell.k], config)
        return trace

    tasks = [(cell, rep) for cell in cells for rep in range(spec.repeats)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            traces = list(pool.map(lambda cr: one_run(*cr), tasks))
    else:
        traces = [one_run(*cr) for cr in tasks]

    results: list[CellResult] = []
    pos = 0
    for cell in cells:
        reps = traces[pos : pos + spec.repeats]
        pos += spec.repeats
        ts = reps[0].ts
        phi_avg = average_traces([tr.phis for tr in reps])
        results.append(
            CellResult(
                cell=cell,
                ts=ts,
                phi_avg=phi_avg,
                repeat_seeds=list(range(spec.repeats)),
            )
        )

    phi_min = min(float(tr.phis.min()) for tr in traces)

    batch: dict[int, BatchBaseline] = {}
    for k in sorted(set(spec.ks)):
        c_final, btrace = run_batch(ds, c0_by_k[k], BATCH_BASELINE_ITERS)
        batch[k] = BatchBaseline(k=k, centroids=c_final, trace=btrace,
                                 phi=cost(ds, c_final).total)

    for res in results:
        res.phi_shifted = res.phi_avg - phi_min
        t0 = res.baseline_t0()
        with np.errstate(divide="ignore"):
            res.baseline = np.where(
                res.ts + t0 > 0, (res.phi0 - phi_min) / (res.ts + t0), np.nan
            )
        try:
            res.slope = slope_fit(res.ts, res.phi_shifted)
        except ValueError:
            res.slope = None

    return ExperimentBundle(
        spec=spec, cells=results, batch=batch, phi_min=phi_min, c0_seeds=c0_seeds
    )


# ---------------------------------------------------------------------------
# ratio table


def final_cost_ratio(phi_final: float, phi_batch: float) -> float:
    return phi_final / phi_batch


def ratio_table(bundle: ExperimentBundle) -> tuple[list[str], list[list]]:
    """Final-cost ratios against the batch baseline.

    One row per (dataset, k); one column per (epoch length or iteration
    budget, schedule kind).  Flat cells differing only in t0 collapse to
    the best (lowest) final cost.
    """
    spec = bundle.spec
    groups: dict[tuple[int, object, str], float] = {}
    for res in bundle.cells:
        cell = res.cell
        budget = cell.epoch_len if cell.epoch_len is not None else spec.iters
        key = (cell.k, budget, cell.schedule.kind)
        prev = groups.get(key)
        if prev is None or res.final_phi < prev:
            groups[key] = res.final_phi

    budgets = sorted({key[1] for key in groups})
    kinds = []
    for text in spec.schedules:
        kind = parse_schedules(text)[0].kind
        if kind not in kinds:
            kinds.append(kind)

    header = ["dataset", "k"]
    for budget in budgets:
        tag = f"E{budget}" if spec.epoch_lens is not None else f"T{budget}"
        header += [f"{tag}:{kind}" for kind in kinds]
    rows = []
    for k in spec.ks:
        row: list = [spec.name, k]
        for budget in budgets:
            for kind in kinds:
                phi_final = groups.get((k, budget, kind))
                row.append(
                    None
                    if phi_final is None
                    else final_cost_ratio(phi_final, bundle.batch[k].phi)
                )
        rows.append(row)
    return header, rows


def cost_ratio_table(spec: ExperimentSpec, threads: int = 1):
    """Run the experiment grid and return its ratio table (header, rows)."""
    return ratio_table(run_experiment(spec, threads=threads))


# ---------------------------------------------------------------------------
# output files


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def write_outputs(bundle: ExperimentBundle, outdir) -> None:
    """Write trace-<cell>.ndjson per cell, summary.csv, slopes.csv, meta.json."""
    import os

    os.makedirs(outdir, exist_ok=True)
    for res in bundle.cells:
        path = os.path.join(outdir, f"trace-{res.cell.key()}.ndjson")
        with open(path, "w", encoding="utf-8") as fh:
            for i in range(res.ts.size):
                rec = {
                    "t": int(res.ts[i]),
                    "phi": float(res.phi_avg[i]),
                    "phi_shifted": float(res.phi_shifted[i]),
                    "baseline": None
                    if not np.isfinite(res.baseline[i])
                    else float(res.baseline[i]),
                }
                fh.write(json.dumps(rec) + "\n")

    header, rows = ratio_table(bundle)
    with open(os.path.join(outdir, "summary.csv"), "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")

    with open(os.path.join(outdir, "slopes.csv"), "w", encoding="utf-8") as fh:
        fh.write("cell,slope,intercept,t_lo,t_hi,residual_rms,n_used,n_excluded\n")
        for res in bundle.cells:
            s = res.slope
            if s is None:
                fh.write(f"{res.cell.key()},,,,,,,\n")
            else:
                fields = [res.cell.key()] + [
                    _fmt(v)
                    for v in (s.slope, s.intercept, s.t_lo, s.t_hi,
                              s.residual_rms, s.n_used, s.n_excluded)
                ]
                fh.write(",".join(fields) + "\n")

    meta = {
        "experiment": bundle.spec.name,
        "prng": PRNG_NAME,
        "version": __version__,
        "seed": bundle.spec.seed,
        "repeats": bundle.spec.repeats,
        "phi_min": bundle.phi_min,
        "batch_iters": BATCH_BASELINE_ITERS,
        "cells": [
            {
                "key": res.cell.key(),
                "k": res.cell.k,
                "m": res.cell.m,
                "epoch_len": res.cell.epoch_len,
                "schedule": res.cell.schedule.label(),
                "iters": _cell_iters(bundle.spec, res.cell),
            }
            for res in bundle.cells
        ],
    }
    with open(os.path.join(outdir, "meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
