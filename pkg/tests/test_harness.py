import json

import numpy as np
import pytest

from skm.dataset import Dataset
from skm.harness import (
    Cell,
    ExperimentSpec,
    average_traces,
    expand_cells,
    final_cost_ratio,
    parse_schedules,
    ratio_table,
    run_experiment,
    slope_fit,
    write_outputs,
)


def toy_spec(**kw):
    ds = Dataset.from_dense([[0.0], [1.0], [4.0], [5.0], [4.2], [0.8]])
    base = dict(
        name="toy",
        dataset=ds,
        ks=[2],
        ms=[2],
        schedules=["flat(4,10)"],
        repeats=2,
        seed=3,
        iters=40,
        eval_every=1,
    )
    base.update(kw)
    return ExperimentSpec(**base)


class TestScheduleParsing:
    def test_flat_single(self):
        specs = parse_schedules("flat(4,10)")
        assert len(specs) == 1
        assert specs[0].kind == "flat" and specs[0].c_prime == 4 and specs[0].t0 == 10

    def test_flat_grid_expands(self):
        specs = parse_schedules("flat(4,10|60|600|6000)")
        assert [s.t0 for s in specs] == [10, 60, 600, 6000]

    def test_count(self):
        assert parse_schedules("count")[0].kind == "count"

    def test_const_auto_eta(self):
        spec = parse_schedules("const")[0]
        assert spec.eta is None
        sched = spec.make(3, epoch_len=400)
        assert sched.eta == pytest.approx(1 / np.sqrt(400))

    def test_const_explicit_eta(self):
        assert parse_schedules("const(0.25)")[0].eta == 0.25

    def test_const_auto_without_epochs_rejected(self):
        with pytest.raises(ValueError, match="epoch"):
            parse_schedules("const")[0].make(3, epoch_len=None)

    def test_garbage_rejected(self):
        with pytest.raises(ValueError, match="parse"):
            parse_schedules("warp(9)")


class TestSlopeFit:
    def test_exact_inverse_law(self):
        t = np.arange(1, 101)
        fit = slope_fit(t, 7.0 / t)
        assert fit.slope == pytest.approx(-1.0, abs=1e-6)

    def test_constant_series(self):
        t = np.arange(1, 101)
        fit = slope_fit(t, np.full(100, 3.3))
        assert fit.slope == pytest.approx(0.0, abs=1e-6)

    def test_exact_inverse_square(self):
        t = np.arange(1, 101)
        fit = slope_fit(t, 3.0 / t**2)
        assert fit.slope == pytest.approx(-2.0, abs=1e-6)

    def test_default_range_is_tail_half(self):
        t = np.arange(1, 41)
        fit = slope_fit(t, 1.0 / t)
        assert fit.n_used == 20 and fit.t_lo == 21 and fit.t_hi == 40

    def test_nonpositive_values_excluded_and_counted(self):
        t = np.arange(0, 40)
        y = 1.0 / np.maximum(t, 1)
        y[5] = 0.0
        fit = slope_fit(t, y)
        assert fit.n_excluded == 2  # t=0 and the zeroed point

    def test_too_few_points_rejected(self):
        with pytest.raises(ValueError, match=">= 10"):
            slope_fit(np.arange(1, 10), np.ones(9))

    def test_explicit_range(self):
        t = np.arange(1, 101)
        fit = slope_fit(t, 5.0 / t, fit_range=(50, 100))
        assert fit.t_lo >= 50 and fit.slope == pytest.approx(-1.0, abs=1e-6)


class TestAveraging:
    def test_identical_series_average_to_themselves(self):
        tr = np.array([4.0, 2.0, 1.0])
        assert np.array_equal(average_traces([tr, tr]), tr)

    def test_permutation_invariant_bitwise(self):
        rng = np.random.default_rng(40)
        series = [rng.random(50) * 10 ** rng.integers(-3, 3) for _ in range(7)]
        a = average_traces(series)
        b = average_traces(series[::-1])
        assert np.array_equal(a, b)


class TestRunExperiment:
    def test_single_cell_bookkeeping(self):
        spec = toy_spec(iters=10, repeats=1)
        bundle = run_experiment(spec)
        assert len(bundle.cells) == 1
        res = bundle.cells[0]
        assert res.ts.tolist() == list(range(11))  # t=0 plus 10 evaluations
        assert res.phi_avg.shape == (11,)

    def test_shifted_trace_non_negative(self):
        bundle = run_experiment(toy_spec())
        for res in bundle.cells:
            assert np.all(res.phi_shifted >= 0)

    def test_baseline_identity(self):
        bundle = run_experiment(toy_spec())
        res = bundle.cells[0]
        t0 = res.cell.schedule.t0
        want = (res.phi0 - bundle.phi_min) / (res.ts + t0)
        assert np.allclose(res.baseline, want, rtol=0, atol=0)

    def test_deterministic_bundle(self):
        a = run_experiment(toy_spec())
        b = run_experiment(toy_spec())
        assert np.array_equal(a.cells[0].phi_avg, b.cells[0].phi_avg)
        assert a.phi_min == b.phi_min

    def test_threads_do_not_change_results(self):
        spec = toy_spec(schedules=["flat(4,10)", "count"], repeats=2)
        a = run_experiment(spec, threads=1)
        b = run_experiment(spec, threads=4)
        for ra, rb in zip(a.cells, b.cells):
            assert np.array_equal(ra.phi_avg, rb.phi_avg)

    def test_epoch_mode_cadence(self):
        spec = toy_spec(iters=None, epochs=3, epoch_lens=[5], eval_every=None)
        bundle = run_experiment(spec)
        res = bundle.cells[0]
        assert res.ts.tolist() == [0, 5, 10, 15]


class TestRatioTable:
    def test_self_ratio_is_exactly_one(self):
        assert final_cost_ratio(123.456, 123.456) == 1.0

    def test_flat_grid_collapses_to_best(self):
        spec = toy_spec(schedules=["flat(4,10|600)", "count"], repeats=1)
        bundle = run_experiment(spec)
        header, rows = ratio_table(bundle)
        assert header == ["dataset", "k", "T40:flat", "T40:count"]
        flat_cells = [r for r in bundle.cells if r.cell.schedule.kind == "flat"]
        want = min(r.final_phi for r in flat_cells) / bundle.batch[2].phi
        assert rows[0][2] == want

    def test_batch_baseline_from_same_start(self):
        bundle = run_experiment(toy_spec(repeats=1))
        assert bundle.batch[2].trace.phis[0] == bundle.cells[0].phi_avg[0]


class TestOutputs:
    def test_files_and_rerun_bytes(self, tmp_path):
        spec = toy_spec(repeats=1)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        write_outputs(run_experiment(spec), out1)
        write_outputs(run_experiment(spec), out2)
        names = sorted(p.name for p in out1.iterdir())
        assert "summary.csv" in names and "slopes.csv" in names and "meta.json" in names
        assert any(n.startswith("trace-") and n.endswith(".ndjson") for n in names)
        for name in names:
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_trace_records_schema(self, tmp_path):
        write_outputs(run_experiment(toy_spec(repeats=1)), tmp_path)
        trace_file = next(p for p in tmp_path.iterdir() if p.name.startswith("trace-"))
        lines = trace_file.read_text().splitlines()
        rec = json.loads(lines[1])
        assert set(rec) == {"t", "phi", "phi_shifted", "baseline"}

    def test_meta_lists_prng_and_cells(self, tmp_path):
        write_outputs(run_experiment(toy_spec(repeats=1)), tmp_path)
        meta = json.loads((tmp_path / "meta.json").read_text())
        assert "PCG64" in meta["prng"]
        assert meta["cells"][0]["k"] == 2


class TestSpecValidation:
    def test_needs_exactly_one_budget(self):
        with pytest.raises(ValueError, match="exactly one"):
            toy_spec(iters=None)
        with pytest.raises(ValueError, match="exactly one"):
            toy_spec(epochs=5, epoch_lens=[10])

    def test_from_toml(self, tmp_path):
        data = tmp_path / "X.csv"
        data.write_text("0\n1\n4\n5\n")
        doc = f"""
name = "demo"
seed = 9
repeats = 2
k = [2]
m = 2
schedules = ["flat(4,10)", "count"]
iters = 20

[dataset]
path = "{data}"
format = "csv"
"""
        spec_file = tmp_path / "exp.toml"
        spec_file.write_text(doc)
        spec = ExperimentSpec.from_toml(spec_file)
        assert spec.name == "demo" and spec.ks == [2] and spec.ms == [2]
        bundle = run_experiment(spec)
        assert len(bundle.cells) == 2

    def test_cell_keys_unique(self):
        spec = toy_spec(schedules=["flat(4,10|60)", "count", "const(0.5)"])
        cells = expand_cells(spec)
        keys = [c.key() for c in cells]
        assert len(set(keys)) == len(keys)
