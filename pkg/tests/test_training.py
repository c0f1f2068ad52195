from dataclasses import replace

import numpy as np
import pytest

from bemnet import training
from bemnet.bem import BCSpec, generate_dataset
from bemnet.errors import AllRunsFailed, NonFiniteLoss, ShapeMismatch, TooFewSensors
from bemnet.geometry import PointSet, uniform_sensor_points
from bemnet.model import loss, predict
from bemnet.training import (
    STOP_MAX_EPOCHS, STOP_PATIENCE, TrainingData, TrainingRecord, select_record,
    split_train_validation, train_multi_seed, train_one,
)


def _points(n):
    return PointSet(np.full((n, 3), 0.5), np.arange(n, dtype=float))


class TestSplit:
    @pytest.mark.parametrize('n, n_train, n_val', [(15, 12, 3), (120, 96, 24), (2, 1, 1)])
    def test_sizes(self, n, n_train, n_val):
        train, val = split_train_validation(_points(n), 0.2, seed=0)
        assert (len(train), len(val)) == (n_train, n_val)

    def test_disjoint_and_complete(self):
        train, val = split_train_validation(_points(15), 0.2, seed=4)
        ids = np.concatenate([train.values, val.values])
        assert sorted(ids) == list(range(15))

    def test_seeded(self):
        first = split_train_validation(_points(15), 0.2, seed=9)[1].values
        again = split_train_validation(_points(15), 0.2, seed=9)[1].values
        np.testing.assert_array_equal(first, again)

    @pytest.mark.parametrize('n, fraction, n_val', [(5, 0.5, 3), (25, 0.1, 3), (15, 0.1, 2)])
    def test_halves_round_up(self, n, fraction, n_val):
        _, val = split_train_validation(_points(n), fraction, seed=0)
        assert len(val) == n_val

    def test_single_sensor(self):
        with pytest.raises(TooFewSensors):
            split_train_validation(_points(1), 0.2, seed=0)


class TestTrainOne:
    def test_zero_targets_stop_on_patience(self, plane_wave_data, tiny_config):
        data = plane_wave_data
        zero = replace(data, sensors=data.sensors.with_values(np.zeros(len(data.sensors))))
        bare = replace(tiny_config, kernel_prior='none')
        _, record = train_one(0, zero, bare, init='zeros')
        assert record.best_epoch == 1
        assert record.best_val_loss == 0.0
        assert record.epochs == tiny_config.patience + 1
        assert record.stop_reason == STOP_PATIENCE

    def test_best_is_minimum(self, plane_wave_data, tiny_config):
        model, record = train_one(0, plane_wave_data, tiny_config)
        assert len(record.train_loss) == len(record.val_loss) == record.epochs
        assert record.best_val_loss == record.val_loss[record.best_epoch - 1]
        assert record.best_val_loss <= min(record.val_loss) + 1e-12
        assert record.stop_reason in (STOP_PATIENCE, STOP_MAX_EPOCHS)

    def test_returns_best_checkpoint(self, plane_wave_data, tiny_config):
        data = plane_wave_data
        model, record = train_one(1, data, tiny_config)
        _, val = split_train_validation(data.sensors, tiny_config.validation_fraction,
                                        tiny_config.split_seed)
        inputs = model.inputs(data.mesh, data.boundary, val)
        assert loss(predict(model, inputs), val.values) == pytest.approx(record.best_val_loss,
                                                                         rel=1e-10)

    def test_deterministic(self, plane_wave_data, tiny_config):
        model_a, record_a = train_one(2, plane_wave_data, tiny_config)
        model_b, record_b = train_one(2, plane_wave_data, tiny_config)
        assert record_a.val_loss == record_b.val_loss
        for p, q in zip(model_a.parameters(), model_b.parameters()):
            np.testing.assert_array_equal(p, q)

    def test_non_finite_readings(self, plane_wave_data, tiny_config):
        data = plane_wave_data
        bad = replace(data, sensors=data.sensors.with_values(np.full(len(data.sensors), np.inf)))
        with pytest.raises(NonFiniteLoss):
            train_one(0, bad, tiny_config)

    def test_prior_needs_wavenumber(self, plane_wave_data, tiny_config):
        with pytest.raises(ShapeMismatch, match='wavenumber'):
            train_one(0, replace(plane_wave_data, wavenumber=None), tiny_config)

    def test_model_carries_prior(self, plane_wave_data, tiny_config):
        model, _ = train_one(0, plane_wave_data, replace(tiny_config, max_epochs=1, patience=0))
        assert model.kernel_prior == 'free-space'
        assert model.wavenumber == 1.0

    def test_training_beats_zero_model(self, unit_box, tiny_config):
        generated = generate_dataset(unit_box, 0.5, 1.0, BCSpec.test_case(), (2, 2, 2), (2, 2, 2))
        data = TrainingData(generated.mesh, generated.boundary, generated.sensors, 1.0)
        _, record = train_one(0, data, replace(tiny_config, loss='rmse'))
        zero_model = loss(np.zeros(len(data.sensors)), data.sensors.values, 'rmse')
        assert record.best_train_loss <= 0.1 * zero_model


class TestTrainMultiSeed:
    def test_repeated_seed_selects_first(self, plane_wave_data, tiny_config):
        result = train_multi_seed(plane_wave_data, replace(tiny_config, seeds=(7, 7)))
        assert result.records[0].val_loss == result.records[1].val_loss
        assert result.selected == 0
        assert len(result.models) == 2

    def test_single_seed(self, plane_wave_data, tiny_config):
        result = train_multi_seed(plane_wave_data, replace(tiny_config, seeds=(3,)))
        assert result.selected == 0
        assert result.records[0].seed == 3
        assert result.model is result.models[0]

    def test_selects_lowest_validation_loss(self, plane_wave_data, tiny_config):
        result = train_multi_seed(plane_wave_data, replace(tiny_config, seeds=(0, 1, 2)))
        best = min(r.best_val_loss for r in result.records)
        assert result.records[result.selected].best_val_loss == best

    def test_failed_seed_is_skipped(self, plane_wave_data, tiny_config, monkeypatch):
        real_train_one = training.train_one

        def flaky(seed, data, config, init='glorot'):
            if seed == 1:
                raise NonFiniteLoss('seed 1: training loss became nan at epoch 3')
            return real_train_one(seed, data, config, init)

        monkeypatch.setattr(training, 'train_one', flaky)
        result = train_multi_seed(plane_wave_data, tiny_config)
        assert [r.seed for r in result.records] == [0]
        assert result.failures[0][0] == 1

    def test_all_runs_failed(self, plane_wave_data, tiny_config):
        data = plane_wave_data
        bad = replace(data, sensors=data.sensors.with_values(np.full(len(data.sensors), np.inf)))
        with pytest.raises(AllRunsFailed):
            train_multi_seed(bad, tiny_config)

    @pytest.mark.slow
    def test_workers_do_not_change_results(self, plane_wave_data, tiny_config):
        serial = train_multi_seed(plane_wave_data, tiny_config)
        pooled = train_multi_seed(plane_wave_data, replace(tiny_config, workers=2))
        assert [r.val_loss for r in serial.records] == [r.val_loss for r in pooled.records]
        assert serial.selected == pooled.selected


class TestSelectRecord:
    def test_empty(self):
        assert select_record([]) is None

    def test_tie_goes_to_lowest_seed(self):
        records = [TrainingRecord(4, best_val_loss=0.1), TrainingRecord(2, best_val_loss=0.1),
                   TrainingRecord(3, best_val_loss=0.2)]
        assert select_record(records) == 1


def test_training_data_requires_readings(unit_box, coarse_mesh, plane_wave_data):
    with pytest.raises(ShapeMismatch):
        TrainingData(coarse_mesh, plane_wave_data.boundary,
                     uniform_sensor_points(unit_box, (2, 2, 2)))
