import copy

import numpy as np
import pytest

from taskopt.errors import TrainingDivergedError
from taskopt.nn import (
    FcnnConfig,
    FcnnModel,
    _make_batches,
    loss_and_gradients,
    mse,
    train,
)


def finite_difference_gradients(model, x, y, masks, h=1e-5):
    """Central-difference gradient of the batch MSE for every parameter."""
    grads = {}
    for key, value in model.params.items():
        grad = np.zeros_like(value)
        flat = value.ravel()
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            plus, _ = loss_and_gradients(model, x, y, masks=masks)
            flat[i] = original - h
            minus, _ = loss_and_gradients(model, x, y, masks=masks)
            flat[i] = original
            grad.ravel()[i] = (plus - minus) / (2.0 * h)
        grads[key] = grad
    return grads


def max_relative_error(analytic, numeric):
    worst = 0.0
    for key in analytic:
        a = analytic[key].ravel()
        f = numeric[key].ravel()
        denom = np.maximum(np.maximum(np.abs(a), np.abs(f)), 1e-6)
        worst = max(worst, float(np.max(np.abs(a - f) / denom)))
    return worst


class TestForward:
    def test_eval_deterministic(self):
        model = FcnnModel(FcnnConfig(input_dim=4, hidden=(6, 5), seed=3))
        x = np.random.default_rng(0).normal(size=(7, 4))
        a = model.forward(x, mode="eval")
        b = model.forward(x, mode="eval")
        assert np.array_equal(a, b)

    def test_reduces_to_plain_mlp_at_identity_batchnorm(self):
        # dropout 0, gamma=1, beta=0, running stats (0,1), zero biases:
        # zero input must map to exactly zero output.
        config = FcnnConfig(input_dim=3, hidden=(4, 4), dropout_rate=0.0,
                            bn_eps=0.0, seed=1)
        model = FcnnModel(config)
        for i in range(2):
            model.params[f"h{i}.b"][:] = 0.0
        model.params["out.b"][:] = 0.0
        out = model.forward(np.zeros((2, 3)), mode="eval")
        assert np.array_equal(out, np.zeros((2, 1)))

    def test_train_mode_batch_statistics(self):
        # Post-batch-norm activations must have batch mean beta and
        # biased variance gamma^2 (exactly, up to the eps term).
        config = FcnnConfig(input_dim=5, hidden=(8,), dropout_rate=0.0,
                            bn_eps=1e-12, seed=2)
        model = FcnnModel(config)
        rng = np.random.default_rng(5)
        model.params["h0.gamma"] = rng.uniform(0.5, 2.0, size=8)
        model.params["h0.beta"] = rng.normal(size=8)
        x = rng.normal(size=(64, 5))
        _, cache = model._forward_train(x, None)
        bn_out = cache["layers"][0]["bn_out"]
        assert np.allclose(bn_out.mean(axis=0), model.params["h0.beta"],
                           atol=1e-6)
        assert np.allclose(bn_out.var(axis=0), model.params["h0.gamma"] ** 2,
                           atol=1e-6)

    def test_train_mode_needs_two_rows(self):
        model = FcnnModel(FcnnConfig(input_dim=2, hidden=(3,), seed=0))
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError, match="at least 2"):
            model.forward(np.zeros((1, 2)), mode="train", rng=rng)

    def test_train_mode_with_dropout_needs_rng(self):
        model = FcnnModel(FcnnConfig(input_dim=2, hidden=(3,), seed=0))
        with pytest.raises(ValueError, match="rng"):
            model.forward(np.zeros((4, 2)), mode="train")

    def test_empty_batch_rejected(self):
        model = FcnnModel(FcnnConfig(input_dim=2, hidden=(3,), seed=0))
        with pytest.raises(ValueError, match="empty"):
            model.forward(np.zeros((0, 2)), mode="eval")

    def test_eval_consumes_no_rng_and_mutates_nothing(self):
        model = FcnnModel(FcnnConfig(input_dim=3, hidden=(4,), seed=1))
        rng = np.random.default_rng(9)
        state_before = copy.deepcopy(rng.bit_generator.state)
        buffers_before = {k: v.copy() for k, v in model.buffers.items()}
        model.forward(np.ones((3, 3)), mode="eval", rng=rng)
        assert rng.bit_generator.state == state_before
        for k, v in model.buffers.items():
            assert np.array_equal(v, buffers_before[k])

    def test_non_finite_activation_detected(self):
        model = FcnnModel(FcnnConfig(input_dim=2, hidden=(3,), seed=0))
        model.params["out.W"][:] = np.inf
        with np.errstate(invalid="ignore"), \
                pytest.raises(TrainingDivergedError, match="non-finite"):
            model.forward(np.ones((2, 2)), mode="eval")


class TestGradients:
    def test_finite_difference_small_net_with_dropout(self):
        config = FcnnConfig(input_dim=3, hidden=(4,), dropout_rate=0.2, seed=11)
        model = FcnnModel(config)
        rng = np.random.default_rng(42)
        x = rng.normal(size=(5, 3))
        y = rng.normal(size=5)
        masks = model.draw_dropout_masks(5, rng)  # fixed for checkability
        _, analytic = loss_and_gradients(model, x, y, masks=masks)
        numeric = finite_difference_gradients(model, x, y, masks)
        assert max_relative_error(analytic, numeric) < 1e-4

    def test_finite_difference_two_hidden_layers(self):
        config = FcnnConfig(input_dim=4, hidden=(5, 3), dropout_rate=0.0,
                            seed=13)
        model = FcnnModel(config)
        rng = np.random.default_rng(7)
        x = rng.normal(size=(6, 4))
        y = rng.normal(size=6)
        _, analytic = loss_and_gradients(model, x, y)
        numeric = finite_difference_gradients(model, x, y, None)
        assert max_relative_error(analytic, numeric) < 1e-4

    def test_zero_output_layer_bias_gradient(self):
        # With a zeroed output layer the prediction is 0, so the output
        # bias gradient is 2 * mean(pred - target) = -2 * mean(target).
        config = FcnnConfig(input_dim=3, hidden=(4,), dropout_rate=0.0, seed=5)
        model = FcnnModel(config)
        model.params["out.W"][:] = 0.0
        model.params["out.b"][:] = 0.0
        rng = np.random.default_rng(3)
        x = rng.normal(size=(8, 3))
        y = rng.normal(size=8)
        _, grads = loss_and_gradients(model, x, y)
        assert grads["out.b"][0] == pytest.approx(-2.0 * y.mean(), rel=1e-12)

    def test_duplicated_rows_leave_gradients_unchanged(self):
        config = FcnnConfig(input_dim=3, hidden=(4,), dropout_rate=0.0, seed=5)
        model = FcnnModel(config)
        rng = np.random.default_rng(8)
        x = rng.normal(size=(6, 3))
        y = rng.normal(size=6)
        _, single = loss_and_gradients(model, x, y)
        _, doubled = loss_and_gradients(model, np.vstack([x, x]),
                                        np.concatenate([y, y]))
        for key in single:
            assert np.allclose(single[key], doubled[key], atol=1e-12)


class TestTraining:
    def test_linear_neuron_learns_slope_two(self):
        # Noiseless y = 2x has least-squares optimum w = 2, b = 0.
        config = FcnnConfig(input_dim=1, hidden=(), output_dim=1,
                            dropout_rate=0.0, learning_rate=0.05,
                            batch_size=32, max_epochs=300, patience=300,
                            seed=0, normalize_inputs=False)
        model = FcnnModel(config)
        rng = np.random.default_rng(1)
        x = rng.uniform(-1, 1, size=(256, 1))
        y = 2.0 * x[:, 0]
        model, _ = train(model, (x[:200], y[:200]), (x[200:], y[200:]), config)
        assert model.params["out.W"][0, 0] == pytest.approx(2.0, abs=1e-2)
        assert model.params["out.b"][0] == pytest.approx(0.0, abs=1e-2)

    def test_zero_gradients_leave_parameters_unchanged(self):
        config = FcnnConfig(input_dim=2, hidden=(3,), dropout_rate=0.2,
                            max_epochs=3, patience=3, seed=4)
        model = FcnnModel(config)
        model.params["out.W"][:] = 0.0
        model.params["out.b"][:] = 0.0
        before = {k: v.copy() for k, v in model.params.items()}
        x = np.zeros((8, 2))
        y = np.zeros(8)
        model, _ = train(model, (x, y), (x[:2], y[:2]), config)
        for key, value in model.params.items():
            assert np.array_equal(value, before[key]), key

    def test_early_stopping_restores_best_epoch(self):
        # Training targets pull the weights away from their initial
        # values while the validation targets are the initial model's
        # exact predictions, so validation loss rises every epoch.
        config = FcnnConfig(input_dim=1, hidden=(), dropout_rate=0.0,
                            learning_rate=0.05, batch_size=8, max_epochs=50,
                            patience=1, seed=21, normalize_inputs=False)
        probe = FcnnModel(config)
        w0 = float(probe.params["out.W"][0, 0])
        b0 = float(probe.params["out.b"][0])
        x_train = np.linspace(-1, 1, 16).reshape(-1, 1)
        y_train = -10.0 * x_train[:, 0]
        x_val = np.array([[-1.0], [1.0]])
        y_val = np.array([-w0 + b0, w0 + b0])

        model, history = train(FcnnModel(config), (x_train, y_train),
                               (x_val, y_val), config)
        assert history.stopped_early
        assert len(history.records) == 2  # stopped at epoch 2
        assert history.best_epoch == 1

        one_epoch = dataclasses_replace(config, max_epochs=1, patience=1)
        reference, _ = train(FcnnModel(one_epoch), (x_train, y_train),
                             (x_val, y_val), one_epoch)
        assert model.params["out.W"][0, 0] == reference.params["out.W"][0, 0]
        assert model.params["out.b"][0] == reference.params["out.b"][0]

    def test_best_validation_is_minimum_of_history(self):
        config = FcnnConfig(input_dim=2, hidden=(6,), dropout_rate=0.1,
                            max_epochs=15, patience=15, batch_size=16, seed=2)
        rng = np.random.default_rng(2)
        x = rng.normal(size=(80, 2))
        y = np.sin(x[:, 0]) + 0.1 * rng.normal(size=80)
        model, history = train(FcnnModel(config), (x[:60], y[:60]),
                               (x[60:], y[60:]), config)
        vals = [r.val_mse for r in history.records]
        assert history.best_val_mse == pytest.approx(min(vals))
        restored_val = mse(model.predict(x[60:]), y[60:])
        assert restored_val == pytest.approx(history.best_val_mse, rel=1e-12)

    def test_training_bit_reproducible(self):
        config = FcnnConfig(input_dim=3, hidden=(5,), dropout_rate=0.2,
                            max_epochs=5, patience=5, batch_size=16, seed=7)
        rng = np.random.default_rng(3)
        x = rng.normal(size=(50, 3))
        y = rng.normal(size=50)
        m1, h1 = train(FcnnModel(config), (x[:40], y[:40]), (x[40:], y[40:]),
                       config)
        m2, h2 = train(FcnnModel(config), (x[:40], y[:40]), (x[40:], y[40:]),
                       config)
        for key in m1.params:
            assert m1.params[key].tobytes() == m2.params[key].tobytes()
        assert [(r.train_mse, r.val_mse) for r in h1.records] == \
            [(r.train_mse, r.val_mse) for r in h2.records]

    def test_divergence_raises(self):
        config = FcnnConfig(input_dim=2, hidden=(3,), dropout_rate=0.0,
                            max_epochs=2, patience=2, seed=0)
        model = FcnnModel(config)
        model.params["h0.W"][:] = np.inf
        x = np.ones((8, 2))
        y = np.zeros(8)
        with np.errstate(invalid="ignore"), pytest.raises(TrainingDivergedError):
            train(model, (x, y), (x[:2], y[:2]), config)

    def test_input_normalization_fitted_on_train(self):
        config = FcnnConfig(input_dim=2, hidden=(3,), dropout_rate=0.0,
                            max_epochs=1, patience=1, seed=0)
        rng = np.random.default_rng(4)
        x = rng.normal(5.0, 3.0, size=(32, 2))
        y = rng.normal(size=32)
        model, _ = train(FcnnModel(config), (x, y), (x[:4], y[:4]), config)
        assert np.allclose(model.input_mean, x.mean(axis=0))
        assert np.allclose(model.input_std, x.std(axis=0))


class TestBatches:
    def test_trailing_singleton_merged(self):
        batches = _make_batches(np.arange(65), 64)
        assert len(batches) == 1
        assert batches[0].size == 65

    def test_exact_multiple(self):
        batches = _make_batches(np.arange(128), 64)
        assert [b.size for b in batches] == [64, 64]

    def test_small_remainder_kept(self):
        batches = _make_batches(np.arange(70), 64)
        assert [b.size for b in batches] == [64, 6]


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        config = FcnnConfig(input_dim=3, hidden=(4, 4), seed=9)
        model = FcnnModel(config)
        rng = np.random.default_rng(0)
        x = rng.normal(size=(32, 3))
        y = rng.normal(size=32)
        model, _ = train(model, (x[:24], y[:24]), (x[24:], y[24:]),
                         dataclasses_replace(config, max_epochs=3, patience=3))
        model.save(tmp_path / "model.json")
        back = FcnnModel.load(tmp_path / "model.json")
        assert np.array_equal(back.predict(x), model.predict(x))
        for key in model.params:
            assert back.params[key].tobytes() == model.params[key].tobytes()


class TestConfig:
    def test_validation_collects_problems(self):
        bad = FcnnConfig(input_dim=0, dropout_rate=1.5, batch_size=1,
                         patience=200)
        with pytest.raises(ValueError) as err:
            bad.validate()
        message = str(err.value)
        for fragment in ("input_dim", "dropout_rate", "batch_size", "patience"):
            assert fragment in message


def dataclasses_replace(config, **kwargs):
    import dataclasses

    return dataclasses.replace(config, **kwargs)
