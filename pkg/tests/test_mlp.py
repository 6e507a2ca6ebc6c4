import numpy as np
import pytest

from ddstlab.errors import ConfigError, DimensionError, FormatError
from ddstlab.mlp import (
    AdamOptimizer,
    MlpArchitecture,
    MlpModel,
    TrainingConfig,
    channel_refiner_architecture,
    detection_refiner_architecture,
    load_checkpoint,
    save_checkpoint,
    train,
)


def toy_architecture(sizes=(6, 8, 6), batch_norm=True):
    acts = ("none",) + ("relu",) * (len(sizes) - 2) + ("linear",)
    return MlpArchitecture(sizes, acts, input_batch_norm=batch_norm)


def finite_difference_gradients(model, x, y, alpha, eps=1e-5):
    """Central differences over every parameter entry (training-mode loss)."""
    grads_w, grads_b = [], []
    for w in model.weights:
        g = np.zeros_like(w)
        for idx in np.ndindex(w.shape):
            orig = w[idx]
            w[idx] = orig + eps
            plus = model.loss(x, y, alpha, training=True)
            w[idx] = orig - eps
            minus = model.loss(x, y, alpha, training=True)
            w[idx] = orig
            g[idx] = (plus - minus) / (2 * eps)
        grads_w.append(g)
    for b in model.biases:
        g = np.zeros_like(b)
        for idx in np.ndindex(b.shape):
            orig = b[idx]
            b[idx] = orig + eps
            plus = model.loss(x, y, alpha, training=True)
            b[idx] = orig - eps
            minus = model.loss(x, y, alpha, training=True)
            b[idx] = orig
            g[idx] = (plus - minus) / (2 * eps)
        grads_b.append(g)
    return grads_w, grads_b


# ---- architectures and initialization ----------------------------------------


def test_refiner_presets_match_expected_shapes():
    ce = channel_refiner_architecture(240)
    assert ce.layer_sizes == (480, 480, 480, 480)
    assert ce.activations == ("none", "relu", "relu", "linear")
    sd = detection_refiner_architecture(240)
    assert sd.layer_sizes == (480, 480, 2880, 1440, 480)
    assert sd.activations == ("none", "relu", "relu", "relu", "linear")
    assert ce.input_batch_norm and sd.input_batch_norm


def test_architecture_validation():
    with pytest.raises(ConfigError):
        MlpArchitecture((4,), ("none",))
    with pytest.raises(ConfigError):
        MlpArchitecture((4, 4), ("none", "sigmoid"))
    with pytest.raises(ConfigError):
        MlpArchitecture((4, 4), ("none",))


def test_glorot_bounds_and_zero_biases():
    model = MlpModel.glorot_init(channel_refiner_architecture(240), seed=0)
    limit = np.sqrt(6.0 / 960.0)
    for w in model.weights:
        assert w.shape == (480, 480)
        assert np.max(np.abs(w)) <= limit
    for b in model.biases:
        np.testing.assert_array_equal(b, 0.0)
    np.testing.assert_array_equal(model.bn_mean, 0.0)
    np.testing.assert_array_equal(model.bn_var, 1.0)


def test_glorot_deterministic():
    a = MlpModel.glorot_init(toy_architecture(), seed=3)
    b = MlpModel.glorot_init(toy_architecture(), seed=3)
    for wa, wb in zip(a.weights, b.weights):
        np.testing.assert_array_equal(wa, wb)


# ---- forward pass --------------------------------------------------------------


def test_forward_hand_computed_affine_stack():
    arch = MlpArchitecture((2, 2, 2), ("none", "relu", "linear"), input_batch_norm=False)
    model = MlpModel.glorot_init(arch, seed=0)
    model.weights[0][:] = [[1.0, -1.0], [0.5, 2.0]]
    model.biases[0][:] = [0.1, -0.2]
    model.weights[1][:] = [[2.0, 0.0], [1.0, 1.0]]
    model.biases[1][:] = [0.0, 0.5]
    x = np.array([1.0, 2.0])
    hidden = np.maximum([1.0 * 1 + 0.5 * 2 + 0.1, -1.0 * 1 + 2.0 * 2 - 0.2], 0.0)
    expected = np.array(
        [2.0 * hidden[0] + 1.0 * hidden[1], 0.0 * hidden[0] + 1.0 * hidden[1] + 0.5]
    )
    np.testing.assert_allclose(model.forward(x), expected)


def test_relu_clips_negative_preactivations():
    arch = MlpArchitecture((1, 1, 1), ("none", "relu", "linear"), input_batch_norm=False)
    model = MlpModel.glorot_init(arch, seed=0)
    model.weights[0][:] = [[1.0]]
    model.weights[1][:] = [[1.0]]
    assert model.forward(np.array([-3.0]))[0] == 0.0
    assert model.forward(np.array([3.0]))[0] == 3.0


def test_zero_model_maps_zero_to_zero():
    arch = toy_architecture(batch_norm=False)
    model = MlpModel.glorot_init(arch, seed=0)
    for w in model.weights:
        w[:] = 0.0
    np.testing.assert_array_equal(model.forward(np.zeros(6)), np.zeros(6))


def test_forward_width_checked():
    model = MlpModel.glorot_init(toy_architecture(), seed=1)
    with pytest.raises(DimensionError):
        model.forward(np.ones(7))


def test_batchnorm_normalizes_training_batches():
    arch = toy_architecture()
    model = MlpModel.glorot_init(arch, seed=2)
    rng = np.random.default_rng(0)
    x = 3.0 + 2.5 * rng.standard_normal((64, 6))
    normed, _ = model._forward_cached(x, training=True)[1]["bn"]
    np.testing.assert_allclose(normed.mean(axis=0), 0.0, atol=1e-10)
    np.testing.assert_allclose(normed.var(axis=0), 1.0, atol=1e-6)


def test_inference_forward_is_pure():
    model = MlpModel.glorot_init(toy_architecture(), seed=4)
    rng = np.random.default_rng(1)
    x = rng.standard_normal((5, 6))
    first = model.forward(x, training=False)
    second = model.forward(x, training=False)
    np.testing.assert_array_equal(first, second)


# ---- loss ------------------------------------------------------------------------


def test_loss_zero_when_outputs_match_labels():
    arch = MlpArchitecture((2, 2), ("none", "linear"), input_batch_norm=False)
    model = MlpModel.glorot_init(arch, seed=0)
    model.weights[0][:] = np.eye(2)
    x = np.array([[0.3, -0.7]])
    assert model.loss(x, x, l2_coeff=0.0) == 0.0


def test_loss_unit_error_vector():
    arch = MlpArchitecture((2, 2), ("none", "linear"), input_batch_norm=False)
    model = MlpModel.glorot_init(arch, seed=0)
    model.weights[0][:] = np.eye(2)
    x = np.array([[1.0, 0.0]])
    labels = x + np.array([[0.6, 0.8]])  # unit-norm offset
    np.testing.assert_allclose(model.loss(x, labels, l2_coeff=0.0), 1.0)


def test_loss_regularization_decomposition():
    arch = MlpArchitecture((2, 2), ("none", "linear"), input_batch_norm=False)
    model = MlpModel.glorot_init(arch, seed=0)
    model.weights[0][:] = np.eye(2)
    x = np.array([[1.0, 2.0]])
    alpha = 0.37
    np.testing.assert_allclose(model.loss(x, x, alpha), alpha * 2.0)


# ---- gradients ----------------------------------------------------------------------


def random_smooth_instance(seed):
    """Random toy net and batch, resampled until no ReLU preactivation sits
    near its kink (finite differences are meaningless across the kink)."""
    rng = np.random.default_rng(seed)
    for _ in range(20):
        sizes = tuple(int(s) for s in rng.integers(2, 7, size=rng.integers(2, 5)))
        model = MlpModel.glorot_init(toy_architecture(sizes), seed=seed)
        for b in model.biases:
            b[:] = 0.2 * rng.standard_normal(b.shape)
        x = rng.standard_normal((4, sizes[0]))
        y = rng.standard_normal((4, sizes[-1]))
        preacts = model._forward_cached(x, training=True)[1]["preacts"]
        if all(np.min(np.abs(z)) > 1e-3 for z in preacts[:-1]) or len(sizes) == 2:
            return model, x, y, rng
    raise AssertionError("could not find a kink-free random instance")


@pytest.mark.parametrize("seed", range(8))
def test_gradients_match_finite_differences(seed):
    model, x, y, rng = random_smooth_instance(seed)
    alpha = float(rng.uniform(0.0, 1e-2))
    _, grad_w, grad_b, _ = model.gradients(x, y, alpha)
    fd_w, fd_b = finite_difference_gradients(model, x, y, alpha)
    for analytic, numeric in zip(grad_w + grad_b, fd_w + fd_b):
        denom = np.maximum(np.abs(numeric), 1e-6)
        assert np.max(np.abs(analytic - numeric) / denom) < 1e-4


def test_input_gradient_includes_batchnorm_path():
    rng = np.random.default_rng(11)
    model = MlpModel.glorot_init(toy_architecture((5, 7, 5)), seed=11)
    x = rng.standard_normal((6, 5))
    y = rng.standard_normal((6, 5))
    _, _, _, grad_x = model.gradients(x, y, 1e-3)
    eps = 1e-5
    for idx in [(0, 0), (2, 3), (5, 4)]:
        orig = x[idx]
        x[idx] = orig + eps
        plus = model.loss(x, y, 1e-3, training=True)
        x[idx] = orig - eps
        minus = model.loss(x, y, 1e-3, training=True)
        x[idx] = orig
        numeric = (plus - minus) / (2 * eps)
        assert abs(grad_x[idx] - numeric) / max(abs(numeric), 1e-8) < 1e-4


def test_pure_weight_decay_shrinks_weights():
    arch = MlpArchitecture((3, 3), ("none", "linear"), input_batch_norm=False)
    model = MlpModel.glorot_init(arch, seed=5)
    model.weights[0][:] = np.eye(3)
    x = np.zeros((4, 3))
    optimizer = AdamOptimizer(1e-2)
    norms = [np.linalg.norm(model.weights[0])]
    for _ in range(20):
        _, gw, gb, _ = model.gradients(x, x, l2_coeff=1.0)
        optimizer.step(model.weights + model.biases, gw + gb)
        norms.append(np.linalg.norm(model.weights[0]))
    assert np.all(np.diff(norms) < 0)


# ---- Adam ------------------------------------------------------------------------------


def test_adam_matches_hand_recurrence():
    lr, b1, b2, eps = 1e-3, 0.99, 0.999, 1e-8
    optimizer = AdamOptimizer(lr, b1, b2, eps)
    param = np.array([0.7])
    reference = 0.7
    m = v = 0.0
    grads = [0.4, -0.1, 0.25, 0.05, -0.3]
    for t, g in enumerate(grads, start=1):
        optimizer.step([param], [np.array([g])])
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        reference -= lr * m_hat / (np.sqrt(v_hat) + eps)
        assert abs(param[0] - reference) < 1e-12


def test_adam_first_step_uses_raw_gradient_direction():
    optimizer = AdamOptimizer(1e-2, 0.9, 0.999, 1e-8)
    param = np.array([1.0])
    optimizer.step([param], [np.array([2.0])])
    # t=1: m_hat = g, v_hat = g^2 -> update = -lr * g/(|g| + eps)
    np.testing.assert_allclose(param[0], 1.0 - 1e-2 * 2.0 / (2.0 + 1e-8), atol=1e-15)


# ---- training loop ----------------------------------------------------------------------


def test_training_fits_identity_toy_task():
    # identity map on a 2-4-2 net must be learnable within 2000 steps
    rng = np.random.default_rng(12)
    arch = toy_architecture((2, 4, 2))
    model = MlpModel.glorot_init(arch, seed=12)
    x = rng.standard_normal((400, 2))
    config = TrainingConfig(
        learning_rate=1e-2, batch_size=20, l2_coeff=0.0, epochs=100, shuffle_seed=1
    )
    best, history = train(model, x, x, x[:50], x[:50], config)
    assert history.best_val_loss < 1e-3
    assert len(history.train_loss) == 100


def test_best_snapshot_not_worse_than_final_epoch():
    rng = np.random.default_rng(13)
    model = MlpModel.glorot_init(toy_architecture((3, 5, 3)), seed=13)
    x = rng.standard_normal((200, 3))
    config = TrainingConfig(learning_rate=1e-3, batch_size=20, l2_coeff=1e-4, epochs=8)
    _, history = train(model, x, x, x[:40], x[:40], config)
    assert history.best_val_loss <= history.val_loss[-1] + 1e-15


def test_training_deterministic_given_seeds():
    rng = np.random.default_rng(14)
    x = rng.standard_normal((120, 3))
    config = TrainingConfig(learning_rate=1e-3, batch_size=16, epochs=3, shuffle_seed=9)
    outs = []
    for _ in range(2):
        model = MlpModel.glorot_init(toy_architecture((3, 4, 3)), seed=2)
        best, _ = train(model, x, x, x[:30], x[:30], config)
        outs.append(best.forward(x[:10]))
    np.testing.assert_array_equal(outs[0], outs[1])


def test_training_config_validation():
    with pytest.raises(ConfigError):
        TrainingConfig(learning_rate=0.0)
    with pytest.raises(ConfigError):
        TrainingConfig(beta1=1.0)
    with pytest.raises(ConfigError):
        TrainingConfig(batch_size=1)


# ---- checkpoints ---------------------------------------------------------------------------


def test_checkpoint_round_trip(tmp_path):
    model = MlpModel.glorot_init(toy_architecture((4, 6, 4)), seed=15)
    model.step_count = 137
    rng = np.random.default_rng(15)
    probe = rng.standard_normal((8, 4))
    before = model.forward(probe)
    path = tmp_path / "model.npz"
    save_checkpoint(model, path, config_hash="abc123")
    loaded = load_checkpoint(path)
    assert loaded.step_count == 137
    np.testing.assert_array_equal(loaded.forward(probe), before)
    for w0, w1 in zip(model.weights, loaded.weights):
        np.testing.assert_array_equal(w0, w1)


def test_checkpoint_architecture_mismatch_rejected(tmp_path):
    model = MlpModel.glorot_init(channel_refiner_architecture(8), seed=16)
    path = tmp_path / "ce.npz"
    save_checkpoint(model, path)
    with pytest.raises(FormatError, match="layer sizes"):
        load_checkpoint(path, expected_architecture=detection_refiner_architecture(8))


def test_truncated_checkpoint_rejected(tmp_path):
    model = MlpModel.glorot_init(toy_architecture((4, 4)), seed=17)
    path = tmp_path / "model.npz"
    save_checkpoint(model, path)
    data = path.read_bytes()
    path.write_bytes(data[: len(data) // 2])
    with pytest.raises(FormatError):
        load_checkpoint(path)
