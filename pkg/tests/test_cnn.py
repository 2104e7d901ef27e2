import numpy as np
import pytest

from grid_surrogate import cnn
from grid_surrogate.cnn import CnnArch, CnnModel, TrainSettings
from grid_surrogate.cnn.layers import maxpool1d_backward
from grid_surrogate.errors import ContractError

SMALL = CnnArch(window=8, n_inputs=2, filters=(4, 4, 4), dense_units=4)


def test_identity_kernel_is_identity():
    x = np.random.default_rng(0).normal(size=(2, 6, 3))
    k = np.zeros((3, 3, 3))
    k[1] = np.eye(3)
    out, _ = cnn.conv1d_forward(x, k, np.zeros(3))
    assert np.array_equal(out, x)


def test_conv_same_padding_example():
    out, _ = cnn.conv1d_forward(np.ones((4, 1)), np.ones((3, 1, 1)), np.zeros(1))
    assert out[..., 0].ravel().tolist() == [2.0, 3.0, 3.0, 2.0]


def test_conv_bias_only():
    out, _ = cnn.conv1d_forward(np.random.default_rng(1).normal(size=(1, 5, 2)), np.zeros((3, 2, 4)),
                                np.arange(4.0))
    assert np.array_equal(out, np.broadcast_to(np.arange(4.0), (1, 5, 4)))


def test_conv_rejects_even_kernel_and_channel_mismatch():
    with pytest.raises(ContractError):
        cnn.conv1d_forward(np.ones((1, 4, 1)), np.ones((2, 1, 1)), np.zeros(1))
    with pytest.raises(ContractError):
        cnn.conv1d_forward(np.ones((1, 4, 2)), np.ones((3, 1, 1)), np.zeros(1))


def test_pooling_examples():
    out, _ = cnn.maxpool1d(np.array([1.0, 3.0, 2.0, 0.0])[None, :, None])
    assert out.ravel().tolist() == [3.0, 2.0]
    out, _ = cnn.maxpool1d(np.array([1.0, 3.0, 2.0, 0.0, 9.0])[None, :, None])
    assert out.ravel().tolist() == [3.0, 2.0]
    assert cnn.global_avg_pool(np.array([1.0, 2.0, 3.0, 4.0])[None, :, None]).ravel().tolist() == [2.5]


def test_maxpool_gradient_goes_to_first_maximum():
    x = np.array([2.0, 2.0, 1.0, 5.0, 7.0])[None, :, None]
    _, first = cnn.maxpool1d(x)
    dx = maxpool1d_backward(np.array([1.0, 10.0])[None, :, None], first, 5)
    assert dx.ravel().tolist() == [1.0, 0.0, 0.0, 10.0, 0.0]


def test_default_architecture_shapes_and_size():
    arch = CnnArch()
    assert arch.n_params == 26465
    assert arch.layer_shapes() == [("conv1", (100, 32)), ("conv2", (100, 64)), ("maxpool", (50, 64)),
                                   ("conv3", (50, 64)), ("global_avg_pool", (64,)), ("dense", (64,)),
                                   ("output", (1,))]
    model = CnnModel.create(arch)
    assert sum(p.size for p in model.params.values()) == 26465
    assert cnn.forward(model, np.zeros((3, 100, 38))).shape == (3, 1)


def test_zero_weights_give_zero_output():
    model = CnnModel.create(SMALL)
    model.params = {k: np.zeros_like(v) for k, v in model.params.items()}
    x = np.random.default_rng(2).normal(size=(5, 8, 2))
    assert np.all(cnn.forward(model, x) == 0.0)


def test_batch_rows_are_independent():
    model = CnnModel.create(SMALL, seed=3)
    x = np.random.default_rng(3).normal(size=(6, 8, 2))
    full = cnn.forward(model, x)
    for i in range(6):
        assert np.allclose(cnn.forward(model, x[i:i + 1]), full[i:i + 1], rtol=1e-12, atol=1e-15)


def test_wrong_window_shape_is_rejected():
    model = CnnModel.create(SMALL)
    with pytest.raises(ContractError):
        cnn.forward(model, np.zeros((2, 7, 2)))


def test_perfect_prediction_has_zero_gradient_and_bias_gradient_formula():
    model = CnnModel.create(SMALL, seed=4)
    x = np.random.default_rng(4).normal(size=(7, 8, 2))
    y = cnn.forward(model, x).ravel()
    loss, grads = cnn.backward(model, x, y)
    assert loss == 0.0
    assert all(np.all(g == 0.0) for g in grads.values())
    target = y - 0.3 * np.arange(7)
    _, grads = cnn.backward(model, x, target)
    assert grads["out_b"][0] == pytest.approx(2 * np.mean(y - target), rel=1e-12)


def test_gradients_match_central_differences():
    rng = np.random.default_rng(5)
    model = CnnModel.create(SMALL, seed=5)
    # nudge biases off zero so ReLU kinks are not sitting on the probe points
    for k in model.params:
        if k.endswith("_b"):
            model.params[k] = rng.normal(scale=0.1, size=model.params[k].shape)
    x = rng.normal(size=(4, 8, 2))
    y = rng.normal(size=4)
    _, grads = cnn.backward(model, x, y)
    h = 1e-6
    worst = 0.0
    for name, p in model.params.items():
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            lp = float(np.mean((cnn.forward(model, x).ravel() - y) ** 2))
            p[idx] = old - h
            lm = float(np.mean((cnn.forward(model, x).ravel() - y) ** 2))
            p[idx] = old
            num = (lp - lm) / (2 * h)
            g = grads[name][idx]
            worst = max(worst, abs(num - g) / max(abs(num), abs(g), 1e-8))
    assert worst < 1e-5


def small_data(n, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 8, 2))
    return x, x[:, :, 0].mean(axis=1)


def test_training_is_deterministic_and_order_invariant():
    x, y = small_data(120, 6)
    vx, vy = small_data(40, 7)
    s = TrainSettings(epochs=3, batch_size=16, seed=9)
    a = cnn.train(SMALL, x, y, vx, vy, s)
    b = cnn.train(SMALL, x, y, vx, vy, s)
    perm = np.random.default_rng(0).permutation(120)
    c = cnn.train(SMALL, x[perm], y[perm], vx, vy, s)
    for k in a.params:
        assert np.array_equal(a.params[k], b.params[k])
        assert np.array_equal(a.params[k], c.params[k])


def test_constant_target_is_fit_exactly_from_zero_output():
    x, _ = small_data(64, 8)
    y = np.zeros(64)
    model = cnn.train(SMALL, x, y, x[:16], y[:16], TrainSettings(epochs=2, batch_size=16), zero_output=True)
    assert np.all(cnn.predict(model, x) == 0.0)


def test_learns_channel_mean():
    x, y = small_data(500, 10)
    vx, vy = small_data(200, 11)
    arch = CnnArch(window=8, n_inputs=2, filters=(8, 8, 8), dense_units=8)
    model = cnn.train(arch, x, y, vx, vy, TrainSettings(epochs=80, batch_size=32, learning_rate=3e-3,
                                                          patience=15))
    pred = cnn.predict(model, vx)
    r2 = 1 - np.sum((vy - pred) ** 2) / np.sum((vy - vy.mean()) ** 2)
    assert r2 > 0.95
    assert model.history["val_mse"][model.best_epoch] == min(model.history["val_mse"])


def test_non_finite_training_data_is_rejected():
    x, y = small_data(20, 12)
    x[3, 2, 1] = np.nan
    with pytest.raises(ContractError):
        cnn.train(SMALL, x, y, x, y, TrainSettings(epochs=1))


def test_save_and_load_are_exact(tmp_path):
    x, y = small_data(64, 13)
    model = cnn.train(SMALL, x, y, x[:16], y[:16], TrainSettings(epochs=2, batch_size=16))
    model.metadata["config_hash"] = "h"
    cnn.save_model(model, tmp_path / "m.npz")
    again = cnn.load_model(tmp_path / "m.npz")
    assert again.arch == model.arch and again.opt_step == model.opt_step
    assert again.history == model.history and again.metadata == model.metadata
    for k in model.params:
        assert np.array_equal(again.params[k], model.params[k])
        assert np.array_equal(again.opt_m[k], model.opt_m[k])
    assert np.array_equal(cnn.predict(again, x), cnn.predict(model, x))
