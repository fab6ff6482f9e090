"""Optimizer behavior, the training loop's record contract, determinism,
multi-seed aggregation, and grid search."""

import numpy as np
import pytest

from anodelab import tensorgrad as tg
from anodelab.data import LabeledSet, gen_g1d
from anodelab.models import Model, ModelSpec
from anodelab.odeint import SolverConfig
from anodelab.train import (AdamState, GridCellResult, RunAggregate,
                            TrainConfig, TrainRecord, adam_step, evaluate,
                            fit, grid_search, repeat_runs)
from anodelab.tensorgrad import ParamSet


def tiny_dataset(n=32, seed=0):
    return gen_g1d(n // 2, seed=seed)


def tiny_model(seed=0, kind="node", p=0, head="affine"):
    return Model(ModelSpec(kind=kind, input_dim=1, hidden_dim=4, p=p,
                           output_dim=1, head=head), seed=seed)


def fast_cfg(**kw):
    kw.setdefault("epochs", 2)
    kw.setdefault("batch_size", 16)
    kw.setdefault("solver", SolverConfig(method="rk4", fixed_step=0.25))
    return TrainConfig(**kw)


class TestTrainConfig:
    @pytest.mark.parametrize("kwargs", [
        {"lr": 0.0}, {"epochs": 0}, {"weight_decay": -0.1}, {"loss": "hinge"},
    ])
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            TrainConfig(**kwargs)


class TestAdam:
    def test_quadratic_converges(self):
        params = ParamSet()
        p = params.add("x", np.array([5.0]))
        state = AdamState()
        cfg = TrainConfig(lr=0.1)
        for _ in range(500):
            p.grad[...] = 2.0 * p.data  # d/dx x^2
            adam_step(params, state, cfg)
        assert abs(p.data[0]) < 1e-3

    def test_decoupled_weight_decay(self):
        params = ParamSet()
        p = params.add("x", np.array([2.0]))
        state = AdamState()
        cfg = TrainConfig(lr=0.01, weight_decay=0.5)
        p.grad[...] = 0.0
        adam_step(params, state, cfg)
        # zero gradient: only the multiplicative shrink applies
        assert np.isclose(p.data[0], 2.0 * (1.0 - 0.01 * 0.5))

    def test_first_step_magnitude_is_lr(self):
        # bias correction makes the first update exactly lr * sign(grad)
        params = ParamSet()
        p = params.add("x", np.array([1.0]))
        cfg = TrainConfig(lr=0.05)
        p.grad[...] = 3.7
        adam_step(params, AdamState(), cfg)
        assert np.isclose(p.data[0], 1.0 - 0.05, atol=1e-6)

    def test_non_finite_gradient_names_parameter(self):
        params = ParamSet()
        p = params.add("layer.w", np.zeros(2))
        p.grad[...] = np.nan
        with pytest.raises(ValueError, match="layer.w"):
            adam_step(params, AdamState(), TrainConfig())

    def test_grads_zeroed_after_step(self):
        params = ParamSet()
        p = params.add("x", np.array([1.0]))
        p.grad[...] = 1.0
        adam_step(params, AdamState(), TrainConfig())
        assert np.all(p.grad == 0.0)


class TestFit:
    def test_one_row_per_epoch_zero_based(self):
        rec = fit(tiny_model(), tiny_dataset(), None, fast_cfg(epochs=3))
        assert [e.epoch for e in rec.epochs] == [0, 1, 2]
        assert rec.error is None and rec.final_params is not None

    def test_loss_decreases(self):
        rec = fit(tiny_model(kind="anode", p=2), tiny_dataset(64),
                  None, fast_cfg(epochs=15, lr=1e-2))
        assert rec.epochs[-1].train_loss < rec.epochs[0].train_loss

    def test_validation_metrics_present(self):
        rec = fit(tiny_model(), tiny_dataset(), tiny_dataset(16, seed=1),
                  fast_cfg())
        assert all(e.val_loss is not None and e.val_acc is not None
                   for e in rec.epochs)

    def test_empty_dataset_rejected(self):
        empty = LabeledSet(np.zeros((0, 1)), np.zeros(0))
        with pytest.raises(ValueError):
            fit(tiny_model(), empty, None, fast_cfg())

    def test_deterministic_rows_bitwise(self):
        rows = [fit(tiny_model(seed=4), tiny_dataset(seed=4), None,
                    fast_cfg(seed=4)).deterministic_rows() for _ in range(2)]
        assert rows[0] == rows[1]

    def test_wall_ms_excluded_from_deterministic_rows(self):
        rec = fit(tiny_model(), tiny_dataset(), None, fast_cfg(epochs=1))
        assert len(rec.deterministic_rows()[0]) == 6

    def test_step_limit_skips_batch(self):
        cfg = TrainConfig(epochs=1, batch_size=16,
                          solver=SolverConfig(max_steps=1))
        rec = fit(tiny_model(), tiny_dataset(), None, cfg)
        assert rec.error == "all batches skipped at epoch 0"
        assert rec.metadata["skipped_batches"] == 2

    def test_cross_entropy_path(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((24, 2))
        y = (x[:, 0] > 0).astype(np.int64)
        ds = LabeledSet(x, y)
        m = Model(ModelSpec(kind="node", input_dim=2, hidden_dim=8,
                            output_dim=2), seed=0)
        rec = fit(m, ds, ds, fast_cfg(epochs=2, loss="cross_entropy"))
        assert 0.0 <= rec.epochs[-1].train_acc <= 1.0

    def test_epoch_callback_indices(self):
        seen = []
        fit(tiny_model(), tiny_dataset(), None, fast_cfg(epochs=3),
            epoch_callback=lambda i, m: seen.append(i))
        assert seen == [0, 1, 2, 3]

    def test_resnet_nfe_is_layer_count(self):
        m = Model(ModelSpec(kind="resnet", input_dim=1, hidden_dim=4,
                            resnet_layers=3, output_dim=1), seed=0)
        rec = fit(m, tiny_dataset(), None, fast_cfg(epochs=1))
        assert rec.metadata.get("nfe_is_layer_count")
        assert rec.epochs[0].nfe_forward_mean == 3.0


class TestTrainRecordCsv:
    def test_header_and_formatting(self, tmp_path):
        rec = fit(tiny_model(), tiny_dataset(), None, fast_cfg(epochs=2))
        path = tmp_path / "log.csv"
        rec.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == TrainRecord.CSV_HEADER
        assert len(lines) == 3
        first = lines[1].split(",")
        assert first[0] == "0"
        # blank validation columns when no validation set was given
        assert first[3] == "" and first[4] == ""

    def test_csv_reproducible_except_wall_ms(self, tmp_path):
        def run(path):
            fit(tiny_model(seed=2), tiny_dataset(seed=2), tiny_dataset(16, 3),
                fast_cfg(seed=2)).to_csv(path)
            rows = [ln.split(",") for ln in path.read_text().splitlines()]
            return [r[:-1] for r in rows]

        assert run(tmp_path / "a.csv") == run(tmp_path / "b.csv")

    def test_metric_extraction(self):
        rec = fit(tiny_model(), tiny_dataset(), None, fast_cfg(epochs=2))
        assert np.array_equal(rec.metric("epoch"), [0.0, 1.0])
        assert np.all(np.isnan(rec.metric("val_loss")))


class TestEvaluate:
    def test_matches_manual_mse(self):
        ds = tiny_dataset(16)
        m = tiny_model()
        cfg = fast_cfg()
        loss, acc, nfe = evaluate(m, ds, cfg)
        from anodelab.models import node_forward
        from anodelab.tensorgrad import Tensor
        with tg.no_grad():
            out, _ = node_forward(m, Tensor(ds.inputs), cfg.solver)
        manual = float(np.mean((out.data.reshape(-1) - ds.targets) ** 2))
        assert np.isclose(loss, manual)
        assert 0.0 <= acc <= 1.0 and nfe > 0


class TestRepeatRuns:
    def test_seed_offsets_and_aggregate(self):
        agg = repeat_runs(lambda s: tiny_model(seed=s),
                          lambda s: (tiny_dataset(seed=s), None),
                          fast_cfg(epochs=2), n_repeats=3)
        assert len(agg.records) == 3 and agg.failed_seeds == []
        assert agg.metric_mean("train_loss").shape == (2,)
        assert np.all(agg.metric_std("train_loss") >= 0.0)

    def test_single_run_zero_std(self):
        agg = repeat_runs(lambda s: tiny_model(seed=s),
                          lambda s: (tiny_dataset(seed=s), None),
                          fast_cfg(epochs=1), n_repeats=1)
        assert np.all(agg.metric_std("train_loss") == 0.0)

    def test_failures_recorded_not_fatal(self):
        cfg = TrainConfig(epochs=1, batch_size=16,
                          solver=SolverConfig(max_steps=1))
        agg = repeat_runs(lambda s: tiny_model(seed=s),
                          lambda s: (tiny_dataset(seed=s), None), cfg, 2)
        assert agg.failed_seeds == [0, 1]
        with pytest.raises(RuntimeError):
            agg.metric_mean("train_loss")

    def test_validation(self):
        with pytest.raises(ValueError):
            repeat_runs(lambda s: tiny_model(), lambda s: (tiny_dataset(), None),
                        fast_cfg(), 0)


class TestGridSearch:
    def _build(self, cell, seed):
        return Model(ModelSpec(kind="anode", input_dim=1,
                               hidden_dim=cell["hidden"], p=cell.get("aug", 0),
                               output_dim=1), seed=seed)

    def test_cell_count_and_ranking(self):
        grid = {"lr": [1e-2, 1e-3], "hidden": [4, 8]}
        base = TrainConfig(solver=SolverConfig(method="rk4", fixed_step=0.25),
                           batch_size=16)
        results = grid_search(grid, self._build, tiny_dataset(30), epochs=1,
                              cv_folds=3, base_cfg=base)
        assert len(results) == 4
        assert all(len(r.fold_losses) == 3 for r in results if r.error is None)
        losses = [r.mean_val_loss for r in results if r.error is None]
        assert losses == sorted(losses)

    def test_lr_override_changes_outcome(self):
        base = TrainConfig(solver=SolverConfig(method="rk4", fixed_step=0.25),
                           batch_size=16)
        results = grid_search({"lr": [1e-1, 1e-5], "hidden": [8]}, self._build,
                              tiny_dataset(30), epochs=4, cv_folds=2,
                              base_cfg=base)
        by_lr = {r.cell["lr"]: r.mean_val_loss for r in results}
        assert by_lr[1e-1] != by_lr[1e-5]

    def test_failed_cell_marked_search_continues(self):
        def build(cell, seed):
            if cell["hidden"] == 6:
                raise RuntimeError("boom")
            return self._build(cell, seed)

        base = TrainConfig(solver=SolverConfig(method="rk4", fixed_step=0.25),
                           batch_size=16)
        results = grid_search({"hidden": [4, 6]}, build, tiny_dataset(20),
                              epochs=1, cv_folds=2, base_cfg=base)
        failed = [r for r in results if r.error is not None]
        assert len(failed) == 1 and "boom" in failed[0].error
        assert results[-1] is failed[0]  # failed cells rank last

    def test_empty_grid_rejected(self):
        with pytest.raises(ValueError):
            grid_search({}, self._build, tiny_dataset(10), epochs=1)


class TestP0Degeneracy:
    def test_anode_p0_record_matches_node_bitwise(self):
        cfg = fast_cfg(epochs=3, seed=11)
        rec_n = fit(tiny_model(seed=11, kind="node"),
                    tiny_dataset(seed=11), None, cfg)
        rec_a = fit(tiny_model(seed=11, kind="anode", p=0),
                    tiny_dataset(seed=11), None, cfg)
        assert rec_n.deterministic_rows() == rec_a.deterministic_rows()
        for k in rec_n.final_params:
            assert np.array_equal(rec_n.final_params[k], rec_a.final_params[k])
