import numpy as np
import pytest

from keyforge import dataset as kd
from keyforge.errors import TrainingError
from keyforge.learners import MlpConfig, base, mlp


def _loss_of(net, x, y):
    loss, _ = net.loss_and_grads(x, y, dropout_mask=None)
    return loss


def _jitter_params(net, rng):
    # moves zero-initialized biases off relu kinks so the loss is smooth at
    # the evaluation point (central differences straddle the kink otherwise)
    for v in net.params.values():
        v += rng.normal(0.0, 0.05, size=v.shape)


class TestGradientCheck:
    def test_finite_differences_all_parameters(self):
        # 3-sample batch through the full stack (both batch-norm layers on,
        # dropout off so the loss is a deterministic function of parameters).
        rng = np.random.default_rng(42)
        net = mlp.MlpNet(4, (5, 4, 3), 2, (True, True), 0.0, rng)
        _jitter_params(net, rng)
        x = rng.normal(size=(3, 4))
        y = np.zeros((3, 2))
        y[np.arange(3), [0, 1, 0]] = 1.0
        _, grads = net.loss_and_grads(x, y, dropout_mask=None)
        h = 1e-5
        worst = 0.0
        for key, param in net.params.items():
            it = np.nditer(param, flags=["multi_index"])
            while not it.finished:
                ix = it.multi_index
                orig = param[ix]
                param[ix] = orig + h
                up = _loss_of(net, x, y)
                param[ix] = orig - h
                down = _loss_of(net, x, y)
                param[ix] = orig
                num = (up - down) / (2 * h)
                ana = grads[key][ix]
                rel = abs(num - ana) / max(abs(num) + abs(ana), 1e-8)
                worst = max(worst, rel)
                assert rel < 1e-4, (key, ix, num, ana)
                it.iternext()
        assert worst < 1e-4

    def test_gradcheck_without_batchnorm(self):
        rng = np.random.default_rng(7)
        net = mlp.MlpNet(3, (4, 4, 3), 2, (False, False), 0.0, rng)
        _jitter_params(net, rng)
        x = rng.normal(size=(3, 3))
        y = np.zeros((3, 2))
        y[np.arange(3), [1, 0, 1]] = 1.0
        _, grads = net.loss_and_grads(x, y, dropout_mask=None)
        h = 1e-5
        for key, param in net.params.items():
            it = np.nditer(param, flags=["multi_index"])
            while not it.finished:
                ix = it.multi_index
                orig = param[ix]
                param[ix] = orig + h
                up = _loss_of(net, x, y)
                param[ix] = orig - h
                down = _loss_of(net, x, y)
                param[ix] = orig
                num = (up - down) / (2 * h)
                rel = abs(num - grads[key][ix]) / max(abs(num) + abs(grads[key][ix]), 1e-8)
                assert rel < 1e-4, (key, ix)
                it.iternext()


class TestMlpTraining:
    def test_memorizes_small_fixture(self):
        ds = kd.synth_fixture(4, 5, seed=9)  # 20 records
        cfg = MlpConfig(widths=(32, 16, 8), dropout=0.0, learning_rate=0.01,
                        batch_size=20, epochs=300, seed=0)
        model = mlp.fit(ds, cfg)
        assert model.loss_history[-1] < 0.01

    def test_rows_sum_to_one(self):
        ds = kd.synth_fixture(3, 10, seed=4)
        cfg = MlpConfig(widths=(16, 8, 8), dropout=0.2, learning_rate=0.005,
                        batch_size=16, epochs=20, seed=1)
        model = mlp.fit(ds, cfg)
        probs = model.predict_proba(np.random.default_rng(0).normal(size=(7, 31)))
        assert np.all(probs >= 0)
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-9)

    def test_deterministic(self):
        ds = kd.synth_fixture(3, 8, seed=5)
        cfg = MlpConfig(widths=(8, 8, 8), dropout=0.1, learning_rate=0.01,
                        batch_size=8, epochs=15, seed=7)
        q = ds.features[:5]
        a = mlp.fit(ds, cfg).predict_proba(q)
        b = mlp.fit(ds, cfg).predict_proba(q)
        assert np.array_equal(a, b)

    def test_non_finite_loss_reports_epoch(self):
        ds = kd.synth_fixture(2, 5, seed=0)
        bad = ds.features.copy()
        bad[0, 0] = np.inf
        broken = kd.Dataset(ds.subjects, ds.sessions, ds.reps, bad, ds.columns, roster=ds.roster)
        cfg = MlpConfig(widths=(4, 4, 4), dropout=0.0, learning_rate=0.01,
                        batch_size=10, epochs=3, seed=0)
        with pytest.raises(TrainingError, match="epoch 0"):
            mlp.fit(broken, cfg)

    def test_save_load_roundtrip(self, tmp_path):
        ds = kd.synth_fixture(3, 6, seed=2)
        cfg = MlpConfig(widths=(8, 8, 8), dropout=0.2, learning_rate=0.01,
                        batch_size=9, epochs=10, seed=3)
        model = mlp.fit(ds, cfg)
        path = tmp_path / "mlp.npz"
        base.save_model(model, path)
        loaded = base.load_model(path)
        assert loaded.family == "mlp"
        q = ds.features[:4]
        assert np.array_equal(loaded.predict_proba(q), model.predict_proba(q))

    def test_inference_uses_running_stats(self):
        # eval-mode output must not depend on batch composition
        ds = kd.synth_fixture(3, 10, seed=6)
        cfg = MlpConfig(widths=(8, 8, 8), dropout=0.0, learning_rate=0.01,
                        batch_size=10, epochs=10, seed=2)
        model = mlp.fit(ds, cfg)
        q = ds.features[:6]
        together = model.predict_proba(q)
        singles = np.vstack([model.predict_proba(q[i : i + 1]) for i in range(6)])
        assert np.allclose(together, singles, atol=1e-12)
