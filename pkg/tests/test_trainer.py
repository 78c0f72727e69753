import numpy as np
import pytest

from multilabel_imbalance.losses import softmax_probs
from multilabel_imbalance.schedule import BALANCED, Phase, TrainPlan, hybrid_plan, one_x_schedule
from multilabel_imbalance.synth import SynthConfig, generate
from multilabel_imbalance.trainer import (
    SGD,
    LossSpec,
    Model,
    forward,
    init_model,
    load_checkpoint,
    loss_and_grads,
    predict,
    save_checkpoint,
    train,
)


@pytest.fixture(scope="module")
def data():
    return generate(SynthConfig(num_leaf=6, num_parents=2, depth=2, images=400, feature_dim=5,
                                separation=4.0, seed=2))


def plan(epochs=2, base=0.00125, **kw):
    return TrainPlan((Phase("sequential", epochs),), base_lr_per_sample=base, **kw)


class TestForward:
    def test_zero_model(self):
        m = Model(np.zeros((3, 4)), np.zeros(3))
        np.testing.assert_array_equal(forward(m, np.ones((2, 4))), 0.0)

    def test_scalar(self):
        assert forward(Model(np.array([[2.0]]), np.array([1.0])), [[3.0]])[0, 0] == 7.0

    def test_matches_loops(self):
        rng = np.random.default_rng(0)
        m = Model(rng.normal(size=(3, 4)), rng.normal(size=3))
        x = rng.normal(size=(5, 4))
        z = forward(m, x)
        for b in range(5):
            for c in range(3):
                assert z[b, c] == pytest.approx(sum(m.weights[c, k] * x[b, k] for k in range(4)) + m.bias[c])

    def test_hidden_layer(self):
        m = init_model(3, 4, hidden=6, seed=1)
        x = np.random.default_rng(2).normal(size=(2, 4))
        h = np.maximum(x @ m.hidden_weights + m.hidden_bias, 0)
        np.testing.assert_allclose(forward(m, x), h @ m.weights.T + m.bias)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            forward(Model(np.zeros((2, 3)), np.zeros(2)), np.zeros((1, 4)))


class TestGradients:
    @pytest.mark.parametrize("name", ["softmax", "concurrent", "bce", "focal"])
    @pytest.mark.parametrize("hidden", [0, 5])
    def test_parameter_gradients(self, name, hidden):
        rng = np.random.default_rng(3)
        m = init_model(4, 3, hidden=hidden, seed=0, scale=0.5)
        x = rng.normal(size=(6, 3))
        y = np.zeros((6, 4))
        y[np.arange(6), rng.integers(0, 4, 6)] = 1
        y[0, 1] = 1
        r = np.zeros((4, 4))
        r[0, 2] = 0.5
        loss = LossSpec(name)
        _, grads = loss_and_grads(m, x, y, loss, r)
        eps = 1e-6
        for p, g in zip(m.params(), grads):
            for idx in [(0,) * p.ndim, tuple(s - 1 for s in p.shape)]:
                old = p[idx]
                p[idx] = old + eps
                up = loss_and_grads(m, x, y, loss, r)[0]
                p[idx] = old - eps
                down = loss_and_grads(m, x, y, loss, r)[0]
                p[idx] = old
                assert g[idx] == pytest.approx((up - down) / (2 * eps), rel=1e-5, abs=1e-8)


class TestSGD:
    def test_momentum_and_decay(self):
        m = Model(np.array([[1.0]]), np.array([1.0]))
        opt = SGD(momentum=0.5, weight_decay=0.1)
        g = [np.array([[1.0]]), np.array([1.0])]
        opt.step(m, g, 0.1)
        # weight: v = 1 + 0.1 * 1 = 1.1; bias skips decay: v = 1
        assert m.weights[0, 0] == pytest.approx(1 - 0.11)
        assert m.bias[0] == pytest.approx(0.9)
        opt.step(m, g, 0.1)
        assert m.bias[0] == pytest.approx(0.9 - 0.1 * 1.5)


class TestTrain:
    def test_zero_lr_keeps_model(self, data):
        m0 = init_model(data.observed.num_classes, 5, seed=4)
        res = train(data, plan(base=0.0, weight_decay=0.0), "softmax", model=m0.copy(), seed=4)
        for a, b in zip(res.model.params(), m0.params()):
            np.testing.assert_array_equal(a, b)

    def test_single_class_loss_decreases(self):
        ds = generate(SynthConfig(num_leaf=1, num_parents=0, depth=1, images=64, feature_dim=3))
        losses = []
        m = init_model(2, 3, seed=0)
        for _ in range(5):
            res = train(ds, plan(1, base=1e-4), "bce", model=m, background=True)
            losses.append(res.log[0].train_loss)
        assert all(b < a for a, b in zip(losses, losses[1:]))

    def test_deterministic_logs(self, data):
        val = data.subset(np.arange(300, 400))
        tr = data.subset(np.arange(300))
        p = hybrid_plan(2, 0.7)
        a = train(tr, p, "concurrent", seed=9, val=val)
        b = train(tr, p, "concurrent", seed=9, val=val)
        assert a.metrics_text() == b.metrics_text()
        assert len(a.log) == 9
        assert a.log[-1].phase == "balanced(0.7)"

    def test_learns_separable_data(self, data):
        tr, val = data.subset(np.arange(300)), data.subset(np.arange(300, 400))
        res = train(tr, TrainPlan((one_x_schedule(),)), "softmax", val=val)
        assert res.log[-1].val_map > 0.9

    def test_balanced_epoch_length(self, data):
        p = TrainPlan((Phase(BALANCED, 1, lam=1.0),), batch_size=16)
        res = train(data, p, "softmax")
        assert len(res.log) == 1
        assert np.isfinite(res.log[0].train_loss)

    def test_model_mismatch(self, data):
        with pytest.raises(ValueError):
            train(data, plan(), model=init_model(3, 5))

    def test_unknown_loss(self):
        with pytest.raises(ValueError):
            LossSpec("hinge")


class TestPredict:
    def test_softmax(self):
        m = init_model(3, 2, seed=0, scale=1.0)
        x = np.ones((1, 2))
        np.testing.assert_allclose(predict(m, x), softmax_probs(forward(m, x)))

    def test_hierarchy_pair_unsuppressed(self):
        # outputs 0 (parent) and 1 (leaf) each normalized only against class 2
        m = Model(np.eye(3), np.zeros(3))
        r = np.zeros((3, 3))
        r[0, 1] = r[1, 0] = 1.0
        x = np.array([[1.0, 2.0, 0.5]])
        s = predict(m, x, "concurrent", r)[0]
        assert s[0] == pytest.approx(np.exp(1) / (np.exp(1) + np.exp(0.5)))
        assert s[1] == pytest.approx(np.exp(2) / (np.exp(2) + np.exp(0.5)))

    def test_background_dropped(self):
        m = init_model(4, 2, seed=0)
        assert predict(m, np.zeros((3, 2)), num_classes=3).shape == (3, 3)

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            predict(init_model(2, 2), np.zeros((1, 2)), "argmax")


class TestCheckpoint:
    @pytest.mark.parametrize("hidden", [0, 4])
    def test_round_trip(self, tmp_path, hidden):
        m = init_model(3, 5, hidden=hidden, seed=1, scale=0.3)
        save_checkpoint(m, tmp_path / "model.bin")
        back = load_checkpoint(tmp_path / "model.bin")
        for a, b in zip(back.params(), m.params()):
            np.testing.assert_allclose(a, b, rtol=1e-7)
        assert back.hidden == hidden

    def test_wrong_magic(self, tmp_path):
        (tmp_path / "m.bin").write_bytes(b"XXXX" + bytes(12))
        with pytest.raises(ValueError, match="checkpoint"):
            load_checkpoint(tmp_path / "m.bin")

    def test_truncated(self, tmp_path):
        save_checkpoint(init_model(3, 5), tmp_path / "m.bin")
        data = (tmp_path / "m.bin").read_bytes()
        (tmp_path / "m.bin").write_bytes(data[:-4])
        with pytest.raises(ValueError, match="parameters"):
            load_checkpoint(tmp_path / "m.bin")
