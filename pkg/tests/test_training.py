import numpy as np
import pytest

from arclearn import autodiff as ad
from arclearn import models
from arclearn.autodiff import ParamStore, Tape
from arclearn.datagen import GenSpec, generate
from arclearn.models import ModelKind
from arclearn.training import (
    DivergenceError,
    SgdState,
    TrainConfig,
    TrainLog,
    EpochRecord,
    batch_loss,
    sgd_step,
    train,
    train_arrays,
    triple_loss,
)


def tiny_splits(n_examples=8, n_points=16, holdout=2, seed=5):
    return generate(
        GenSpec(
            n_examples=n_examples,
            n_points=n_points,
            holdout_examples=holdout,
            seed=seed,
        )
    )


def tiny_config(**overrides):
    kwargs = dict(
        model=ModelKind.CNN,
        batch_size=4,
        epochs=2,
        conv_channels=4,
        seed=1,
    )
    kwargs.update(overrides)
    return TrainConfig(**kwargs)


class TestTripleLoss:
    def test_hand_arithmetic(self):
        # residual 0.5 squared with no penalty
        splits = tiny_splits()
        t = splits.train[0]
        params = models.init_params(ModelKind.CNN, 0, n_points=t.n_points, conv_channels=4)
        for _, tensor in params.items():
            tensor.data[:] = 0.0
        params["fc2.bias"].data[:] = (t.len1 - 0.5) / 2.0  # O(s2)+O(s3) = len1 - 0.5
        loss = triple_loss(ModelKind.CNN, params, t, reg_lambda=0.0)
        assert loss.item() == pytest.approx(0.25, rel=1e-12)

    def test_perfect_model_zero_loss(self):
        splits = tiny_splits()
        t = splits.train[0]
        params = models.init_params(ModelKind.CNN, 0, n_points=t.n_points, conv_channels=4)
        for _, tensor in params.items():
            tensor.data[:] = 0.0
        params["fc2.bias"].data[:] = t.len1 / 2.0
        # constant model that happens to split len1 across both pieces
        loss = triple_loss(ModelKind.CNN, params, t, reg_lambda=0.0)
        assert loss.item() == pytest.approx(0.0, abs=1e-18)

    def test_penalty_term(self):
        splits = tiny_splits()
        t = splits.train[0]
        params = ParamStore()
        params.add("fc1.weight", np.zeros((10, 4 * (t.n_points - 2))))
        params.add("fc1.bias", np.zeros(10), bias=True)
        params.add("fc2.weight", np.zeros((1, 10)))
        params.add("fc2.bias", np.array([t.len1 / 2.0]), bias=True)
        params.add("conv.kernel", np.zeros((4, 2, 3)))
        params.add("conv.bias", np.zeros(4), bias=True)
        params["conv.kernel"].data[0, 0, 0] = 3.0
        params["conv.kernel"].data[0, 0, 1] = 4.0
        # zero fc1 weight kills the conv contribution, so output stays constant
        loss = triple_loss(ModelKind.CNN, params, t, reg_lambda=0.01)
        assert loss.item() == pytest.approx(0.01 * 25.0, rel=1e-12)

    def test_loss_nonnegative(self):
        splits = tiny_splits()
        params = models.init_params(ModelKind.CNN, 3, n_points=16, conv_channels=4)
        for t in splits.train:
            assert triple_loss(ModelKind.CNN, params, t, 0.01).item() >= 0.0


class TestSgdStep:
    @staticmethod
    def _single_param(theta):
        store = ParamStore()
        store.add("w", np.array([theta]))
        return store

    def test_momentum_accumulation(self):
        store = self._single_param(1.0)
        state = SgdState(store)
        config = TrainConfig(learning_rate=0.1, momentum=0.9, weight_decay=0.0)
        store["w"].grad[:] = 0.5
        sgd_step(store, state, config)
        assert state.velocity["w"][0] == pytest.approx(0.5)
        assert store["w"].data[0] == pytest.approx(0.95)
        store["w"].grad[:] = 0.0
        sgd_step(store, state, config)
        assert state.velocity["w"][0] == pytest.approx(0.45)
        assert store["w"].data[0] == pytest.approx(0.905)

    def test_pure_weight_decay(self):
        store = self._single_param(1.0)
        state = SgdState(store)
        config = TrainConfig(learning_rate=0.1, momentum=0.9, weight_decay=0.1)
        store["w"].grad[:] = 0.0
        sgd_step(store, state, config)
        assert store["w"].data[0] == pytest.approx(0.99)

    def test_biases_not_decayed(self):
        store = ParamStore()
        store.add("b", np.array([1.0]), bias=True)
        state = SgdState(store)
        config = TrainConfig(learning_rate=0.1, momentum=0.0, weight_decay=0.5)
        store["b"].grad[:] = 0.0
        sgd_step(store, state, config)
        assert store["b"].data[0] == 1.0


class TestBatchLoss:
    def test_permutation_invariance(self):
        splits = tiny_splits(n_examples=10)
        params = models.init_params(ModelKind.CNN, 7, n_points=16, conv_channels=4)
        s2 = np.stack([t.s2 for t in splits.train])
        s3 = np.stack([t.s3 for t in splits.train])
        len1 = np.array([t.len1 for t in splits.train])

        def loss_and_grads(order):
            params.zero_grad()
            loss = batch_loss(
                ModelKind.CNN, params, s2[order], s3[order], len1[order], 0.01
            )
            loss.backward()
            return loss.item(), {n: t.grad.copy() for n, t in params.items()}

        base = np.arange(len(len1))
        perm = np.random.default_rng(0).permutation(len(len1))
        loss_a, grads_a = loss_and_grads(base)
        loss_b, grads_b = loss_and_grads(perm)
        assert loss_a == pytest.approx(loss_b, rel=1e-12)
        for name in grads_a:
            np.testing.assert_allclose(grads_a[name], grads_b[name], rtol=1e-12, atol=1e-14)

    def test_batch_mean_matches_triple_losses(self):
        splits = tiny_splits(n_examples=6)
        params = models.init_params(ModelKind.CNN, 8, n_points=16, conv_channels=4)
        triples = splits.train
        s2 = np.stack([t.s2 for t in triples])
        s3 = np.stack([t.s3 for t in triples])
        len1 = np.array([t.len1 for t in triples])
        batch = batch_loss(ModelKind.CNN, params, s2, s3, len1, 0.01).item()
        singles = [triple_loss(ModelKind.CNN, params, t, 0.01).item() for t in triples]
        assert batch == pytest.approx(np.mean(singles), rel=1e-12)


class TestTrain:
    def test_single_triple_loss_decreases(self):
        splits = tiny_splits(n_examples=2, holdout=0)
        splits.train = splits.train[:1]
        splits.test = splits.train[:1]
        config = tiny_config(batch_size=1, epochs=1, learning_rate=1e-4, center_output=False)
        t = splits.train[0]
        params0 = models.init_params(
            config.model, config.seed, n_points=t.n_points, conv_channels=config.conv_channels
        )
        before = triple_loss(config.model, params0, t, config.reg_lambda).item()
        params, log = train(splits, config)
        after = triple_loss(config.model, params, t, config.reg_lambda).item()
        assert after < before

    def test_descent_sanity_fifty_steps(self):
        # fixed batch, lambda 0: 50 steps cut the loss by at least 90%
        splits = tiny_splits(n_examples=8, n_points=16)
        config = tiny_config(epochs=1)
        s2 = np.stack([t.s2 for t in splits.train])
        s3 = np.stack([t.s3 for t in splits.train])
        len1 = np.array([t.len1 for t in splits.train])
        params = models.init_params(ModelKind.CNN, 2, n_points=16, conv_channels=4)
        params["fc2.bias"].data[:] = 0.5 * len1.mean()
        state = SgdState(params)
        first = batch_loss(ModelKind.CNN, params, s2, s3, len1, 0.0).item()
        for _ in range(50):
            params.zero_grad()
            loss = batch_loss(ModelKind.CNN, params, s2, s3, len1, 0.0)
            tape = Tape(loss)
            tape.backward()
            sgd_step(params, state, TrainConfig())
        last = batch_loss(ModelKind.CNN, params, s2, s3, len1, 0.0).item()
        assert last <= 0.1 * first

    def test_deterministic_parameters(self):
        splits = tiny_splits()
        config = tiny_config()
        params_a, log_a = train(splits, config)
        params_b, log_b = train(splits, config)
        for name, t in params_a.items():
            np.testing.assert_array_equal(t.data, params_b[name].data)
        assert [r.train_loss for r in log_a.records] == [r.train_loss for r in log_b.records]

    def test_log_structure(self):
        splits = tiny_splits()
        config = tiny_config(epochs=3)
        seen = []
        params, log = train(splits, config, progress=seen.append)
        assert [r.epoch for r in log.records] == [1, 2, 3]
        assert len(seen) == 3
        assert all(np.isfinite(r.test_loss) for r in log.records)

    def test_test_loss_includes_penalty(self):
        splits = tiny_splits(n_examples=4, holdout=0)
        config = tiny_config(epochs=1, reg_lambda=0.5)
        params, log = train(splits, config)
        s2 = np.stack([t.s2 for t in splits.test])
        s3 = np.stack([t.s3 for t in splits.test])
        len1 = np.array([t.len1 for t in splits.test])
        expected = batch_loss(config.model, params, s2, s3, len1, config.reg_lambda).item()
        assert log.final().test_loss == pytest.approx(expected, rel=1e-12)

    def test_empty_train_set_rejected(self):
        splits = tiny_splits()
        splits.train = []
        with pytest.raises(ValueError):
            train(splits, tiny_config())

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_detected(self):
        splits = tiny_splits()
        config = tiny_config(learning_rate=1e9, epochs=50, center_output=False)
        with pytest.raises(DivergenceError) as err:
            train(splits, config)
        assert err.value.epoch >= 1

    def test_lstm_trains(self):
        splits = tiny_splits(n_examples=4, n_points=12)
        config = tiny_config(model=ModelKind.LSTM, epochs=1, batch_size=2)
        params, log = train(splits, config)
        assert np.isfinite(log.final().train_loss)

    def test_center_output_sets_bias(self):
        splits = tiny_splits(n_examples=4)
        config = tiny_config(epochs=1, learning_rate=1e-12)
        params, _ = train(splits, config)
        mean_half = 0.5 * np.mean([t.len1 for t in splits.train])
        # after one epoch of negligible steps the bias is still near the start
        assert params["fc2.bias"].data[0] == pytest.approx(mean_half, rel=1e-3)


class TestTrainLog:
    def test_csv_round_trip(self, tmp_path):
        log = TrainLog()
        log.append(EpochRecord(1, 0.5, 0.6, 1.25))
        log.append(EpochRecord(2, 0.4, 0.5, 1.5))
        path = tmp_path / "log.csv"
        log.write_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "epoch,train_loss,test_loss,seconds"
        assert lines[1].startswith("1,0.5,0.6,")

    def test_epoch_monotonicity_enforced(self):
        log = TrainLog()
        log.append(EpochRecord(1, 0.5, 0.6, 1.0))
        with pytest.raises(ValueError):
            log.append(EpochRecord(1, 0.4, 0.5, 1.0))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(batch_size=0)
        with pytest.raises(ValueError):
            TrainConfig(momentum=1.5)
        with pytest.raises(ValueError):
            TrainConfig(learning_rate=0.0)
