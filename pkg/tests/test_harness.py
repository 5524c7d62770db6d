import math

import numpy as np
import pytest

from warptransfer.benchmarks import BenchFn, sample_dataset
from warptransfer.harness import (
    RESULT_HEADER,
    ExperimentConfig,
    derive_seed,
    in_domain_filter,
    read_dataset_csv,
    run_experiment,
    smape,
    write_dataset_csv,
    write_results_csv,
)
from warptransfer.optimizer import CmaConfig, GdSchedule
from warptransfer.transfer import TransferParams, apply_transform
from warptransfer.warp import Box, WarpParams

BOX2 = Box.cube(-5.0, 5.0, 2)


def tiny_config(**overrides):
    base = dict(
        functions=("sphere",),
        dimension=2,
        shape="exponential",
        transfer_sizes=(8,),
        repetitions=2,
        base_seed=3,
        fitter="gd",
        source_multiplier=20,
        test_multiplier=20,
        gpr_restarts=2,
        gd=GdSchedule(epochs=3, restarts=1),
    )
    base.update(overrides)
    return ExperimentConfig(**base)


class TestSmape:
    def test_zero_on_equal(self):
        assert smape([1.0, -2.0, 3.0], [1.0, -2.0, 3.0]) == 0.0

    def test_maximum_on_opposite_signs(self):
        assert smape([1.0], [-1.0]) == 2.0

    def test_formula_arithmetic(self):
        assert smape([3.0], [1.0]) == pytest.approx(1.0)

    def test_zero_pairs_contribute_zero(self):
        assert smape([0.0, 1.0], [0.0, 1.0]) == 0.0

    def test_range_and_permutation_invariance(self):
        rng = np.random.default_rng(0)
        pred = rng.normal(size=100)
        actual = rng.normal(size=100)
        value = smape(pred, actual)
        assert 0.0 <= value <= 2.0
        perm = rng.permutation(100)
        assert smape(pred[perm], actual[perm]) == pytest.approx(value, abs=1e-15)

    def test_errors(self):
        with pytest.raises(ValueError):
            smape([1.0, 2.0], [1.0])
        with pytest.raises(ValueError):
            smape([], [])


class TestDeriveSeed:
    def test_stable_and_distinct(self):
        a = derive_seed(7, "sphere", "exponential", 20, 0)
        b = derive_seed(7, "sphere", "exponential", 20, 0)
        c = derive_seed(7, "sphere", "exponential", 20, 1)
        d = derive_seed(8, "sphere", "exponential", 20, 0)
        assert a == b
        assert a != c and a != d

    def test_independent_of_other_grid_cells(self):
        # The same cell must get the same seed whatever else is in the grid.
        cfg_small = tiny_config(transfer_sizes=(8,))
        cfg_large = tiny_config(transfer_sizes=(8, 10))
        rows_small = run_experiment(cfg_small).rows
        rows_large = [r for r in run_experiment(cfg_large).rows if r.transfer_size == 8]
        assert len(rows_small) == len(rows_large)
        for a, b in zip(rows_small, rows_large):
            assert a.key() == b.key()
            assert a.smape == b.smape and a.loss == b.loss and a.seed == b.seed


class TestInDomainFilter:
    def test_identity_is_noop(self):
        data = sample_dataset(BenchFn("sphere", 2), 30, BOX2, np.random.default_rng(0))
        kept = in_domain_filter(data, TransferParams.identity(BOX2), BOX2)
        assert kept == data

    def test_large_translation_empties_dataset(self):
        data = sample_dataset(BenchFn("sphere", 2), 30, BOX2, np.random.default_rng(1))
        # Warps keep points inside, so a full-width shift pushes all out.
        lopsided = TransferParams(np.eye(2), np.array([11.0, 0.0]), WarpParams.identity(2), BOX2)
        kept = in_domain_filter(data, lopsided, BOX2)
        assert kept.n == 0

    def test_matches_row_by_row_membership(self):
        rng = np.random.default_rng(2)
        data = sample_dataset(BenchFn("sphere", 2), 100, BOX2, rng)
        params = TransferParams(np.eye(2), np.array([3.0, -2.0]), WarpParams.identity(2), BOX2)
        kept = in_domain_filter(data, params, BOX2)
        expected = [
            i
            for i in range(data.n)
            if bool(BOX2.contains(apply_transform(params, data.X[i])))
        ]
        assert 0 < len(expected) < data.n
        np.testing.assert_array_equal(kept.X, data.X[expected])


class TestExperimentConfig:
    @pytest.mark.parametrize(
        "overrides",
        [
            {"functions": ("warturtle",)},
            {"shape": "spiral"},
            {"repetitions": 0},
            {"transfer_sizes": (1,)},
            {"transfer_sizes": ()},
            {"source_multiplier": 0},
            {"fitter": "sgd"},
            {"dimension": 0},
            {"box_lo": 5.0, "box_hi": -5.0},
        ],
    )
    def test_validation(self, overrides):
        with pytest.raises(ValueError):
            tiny_config(**overrides)


class TestRunExperiment:
    def test_row_count_contract(self):
        config = tiny_config(transfer_sizes=(8, 10), repetitions=10)
        result = run_experiment(config)
        assert len(result.rows) == 10 * 2 * 3

    def test_rows_sorted_and_unique(self):
        result = run_experiment(tiny_config(transfer_sizes=(8, 10)))
        keys = [row.key() for row in result.rows]
        assert keys == sorted(keys)
        assert len(set(keys)) == len(keys)

    def test_deterministic_csv(self, tmp_path):
        config = tiny_config()
        first, second = tmp_path / "a.csv", tmp_path / "b.csv"
        write_results_csv(run_experiment(config), first)
        write_results_csv(run_experiment(tiny_config()), second)
        assert first.read_bytes() == second.read_bytes()

    def test_cmaes_fitter_path(self):
        config = tiny_config(fitter="cmaes", cma=CmaConfig(budget=60))
        result = run_experiment(config)
        assert all(row.status == "ok" for row in result.rows)

    def test_in_domain_mode(self):
        result = run_experiment(tiny_config(in_domain=True))
        assert {row.model for row in result.rows} == {"original", "scratch", "transferred"}

    def test_mean_smape_helper(self):
        result = run_experiment(tiny_config())
        value = result.mean_smape("original")
        assert 0.0 <= value <= 2.0
        assert math.isnan(result.mean_smape("original", transfer_size=99))

    def test_wall_ms_zero_without_timing(self):
        result = run_experiment(tiny_config())
        assert all(row.wall_ms == 0.0 for row in result.rows)

    def test_wall_ms_recorded_with_timing(self):
        result = run_experiment(tiny_config(record_timing=True))
        assert any(row.wall_ms > 0.0 for row in result.rows)

    def test_every_benchmark_function_runs_clean(self):
        from warptransfer.benchmarks import BENCH_IDS

        config = tiny_config(
            functions=BENCH_IDS, shape="sigmoidal", transfer_sizes=(8,), repetitions=1
        )
        result = run_experiment(config)
        assert len(result.rows) == len(BENCH_IDS) * 3
        assert all(row.status == "ok" for row in result.rows)

    def test_one_dimensional_problems(self):
        config = tiny_config(
            functions=("sphere", "ellipsoid"), dimension=1, transfer_sizes=(6,), repetitions=1
        )
        result = run_experiment(config)
        assert all(row.status == "ok" for row in result.rows)

    def test_five_dimensional_cmaes(self):
        config = tiny_config(
            functions=("schaffers",),
            dimension=5,
            transfer_sizes=(10,),
            repetitions=1,
            fitter="cmaes",
            cma=CmaConfig(budget=200),
        )
        result = run_experiment(config)
        assert all(row.status == "ok" for row in result.rows)


class TestResultsCsv:
    def test_header_contract(self, tmp_path):
        path = tmp_path / "results.csv"
        write_results_csv(run_experiment(tiny_config()), path)
        lines = path.read_text().splitlines()
        assert lines[0] == RESULT_HEADER
        assert lines[0] == (
            "function,d,shape,transfer_size,repetition,model,smape,loss,wall_ms,seed,status"
        )
        assert len(lines) == 1 + 2 * 3


class TestDatasetCsv:
    def test_round_trip_is_exact(self, tmp_path):
        data = sample_dataset(BenchFn("sphere", 2), 25, BOX2, np.random.default_rng(0))
        path = tmp_path / "data.csv"
        write_dataset_csv(data, path)
        loaded = read_dataset_csv(path, box=BOX2)
        np.testing.assert_array_equal(loaded.X, data.X)
        np.testing.assert_array_equal(loaded.y, data.y)

    def test_header_shape(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("x1,x2,y\n0,0,1\n1,1,2\n0.5,0.5,3\n")
        data = read_dataset_csv(path)
        assert data.n == 3 and data.d == 2

    def test_box_inferred_from_columns(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("x1,y\n-2.0,1\n4.0,2\n")
        data = read_dataset_csv(path)
        assert data.box.lo[0] == -2.0 and data.box.hi[0] == 4.0

    def test_malformed_row_names_line(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("x1,x2,y\n0,0,1\n0,zap,2\n")
        with pytest.raises(ValueError, match="line 3.*x2"):
            read_dataset_csv(path)

    def test_wrong_cell_count_names_line(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("x1,x2,y\n0,0\n")
        with pytest.raises(ValueError, match="line 2"):
            read_dataset_csv(path)

    def test_non_finite_rejected(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("x1,y\nnan,1\n")
        with pytest.raises(ValueError, match="non-finite"):
            read_dataset_csv(path)

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("a,b,c\n0,0,1\n")
        with pytest.raises(ValueError, match="header"):
            read_dataset_csv(path)

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("")
        with pytest.raises(ValueError, match="empty"):
            read_dataset_csv(path)
