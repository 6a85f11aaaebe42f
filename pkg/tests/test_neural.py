import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from siim.neural import (
    AdamState,
    MLPParams,
    ModelFormatError,
    ModelVersionError,
    TrainConfig,
    adam_step,
    backward,
    fit_input_scaling,
    forward,
    init_params,
    load_model,
    nll_loss,
    save_model,
    train,
)

from oracles import fd_gradient, max_rel_error


def test_init_shapes():
    p = init_params((4, 8, 4), np.random.default_rng(0))
    assert p.weights[0].shape == (8, 4)
    assert p.weights[1].shape == (4, 8)
    assert all(np.all(b == 0) for b in p.biases)


def test_init_determinism_and_diversity():
    a = init_params((4, 8, 4), np.random.default_rng(1))
    b = init_params((4, 8, 4), np.random.default_rng(1))
    c = init_params((4, 8, 4), np.random.default_rng(2))
    assert a == b
    assert a != c


def test_params_reject_inconsistent_shapes():
    with pytest.raises(ValueError):
        MLPParams((4, 8, 4), [np.zeros((8, 4)), np.zeros((4, 7))], [np.zeros(8), np.zeros(4)])


def test_forward_zero_weights_closed_form():
    p = init_params((4, 8, 4), np.random.default_rng(0))
    p = p.with_arrays([np.zeros_like(a) for a in p.arrays()])
    mu, s2 = forward(p, np.ones(4))
    np.testing.assert_allclose(mu, 0.5)
    np.testing.assert_allclose(s2, math.log(2) + 1e-6, rtol=1e-15)


def test_forward_dimension_mismatch():
    p = init_params((4, 8, 4), np.random.default_rng(0))
    with pytest.raises(ValueError):
        forward(p, np.ones(5))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 100.0))
def test_forward_output_ranges(seed, scale):
    rng = np.random.default_rng(seed)
    p = init_params((9, 16, 16, 6), rng)
    x = rng.normal(scale=scale, size=(20, 9))
    mu, s2 = forward(p, x)
    assert np.all((mu >= 0) & (mu <= 1))
    assert np.all(s2 >= 1e-6)
    assert mu.shape == s2.shape == (20, 3)


def test_nll_examples():
    assert nll_loss([0.3], [1.0], [0.3]) == 0.0
    assert nll_loss([0.0], [1.0], [1.0]) == 0.5
    assert math.isclose(nll_loss([0.4], [math.e], [0.4]), 0.5, rel_tol=1e-15)
    assert nll_loss([0.3], [1.0], [0.3], c=2.0) == 2.0


def test_nll_rejects_nonpositive_variance():
    with pytest.raises(ValueError):
        nll_loss([0.1], [0.0], [0.1])


def test_gradient_matches_finite_differences():
    for seed in range(5):
        rng = np.random.default_rng(seed)
        p = init_params((4, 8, 4), rng)
        p = p.with_arrays([a + rng.normal(scale=0.1, size=a.shape) for a in p.arrays()])
        x = rng.normal(size=(5, 4))
        y = rng.uniform(size=(5, 2))
        _, grads = backward(p, x, y)
        assert max_rel_error(grads, fd_gradient(p, x, y)) < 1e-4


def test_gradient_with_input_scaling():
    rng = np.random.default_rng(42)
    p = fit_input_scaling(init_params((4, 6, 5, 4), rng), rng.normal(3, 2, size=(50, 4)))
    x = rng.normal(3, 2, size=(6, 4))
    y = rng.uniform(size=(6, 2))
    _, grads = backward(p, x, y)
    assert max_rel_error(grads, fd_gradient(p, x, y)) < 1e-4


def test_gradient_is_descent_direction():
    rng = np.random.default_rng(3)
    p = init_params((4, 8, 4), rng)
    x, y = rng.normal(size=(10, 4)), rng.uniform(size=(10, 2))
    loss, grads = backward(p, x, y)
    stepped = p.with_arrays([a - 1e-4 * g for a, g in zip(p.arrays(), grads)])
    assert nll_loss(*forward(stepped, x), y) < loss


def test_duplicated_sample_same_gradient():
    rng = np.random.default_rng(4)
    p = init_params((4, 8, 4), rng)
    x, y = rng.normal(size=(1, 4)), rng.uniform(size=(1, 2))
    _, g1 = backward(p, x, y)
    _, g2 = backward(p, np.repeat(x, 2, axis=0), np.repeat(y, 2, axis=0))
    for a, b in zip(g1, g2):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)


def test_adam_zero_gradient_no_change():
    p = init_params((4, 8, 4), np.random.default_rng(0))
    state = AdamState.zeros_like(p)
    q, _ = adam_step(p, [np.zeros_like(a) for a in p.arrays()], state, TrainConfig())
    assert q == p


def test_adam_first_step_magnitude():
    p = init_params((4, 8, 4), np.random.default_rng(0))
    cfg = TrainConfig(learning_rate=1e-3)
    grads = [np.full_like(a, 0.37) for a in p.arrays()]
    q, state = adam_step(p, grads, AdamState.zeros_like(p), cfg)
    for a, b in zip(p.arrays(), q.arrays()):
        np.testing.assert_allclose(a - b, 1e-3, rtol=1e-6)
    assert state.t == 1


def test_loss_decreases_over_first_steps():
    rng = np.random.default_rng(8)
    p = init_params((9, 32, 32, 6), rng)
    x, y = rng.normal(size=(64, 9)), rng.uniform(size=(64, 3))
    state = AdamState.zeros_like(p)
    losses = []
    for _ in range(11):
        loss, grads = backward(p, x, y)
        losses.append(loss)
        p, state = adam_step(p, grads, state, TrainConfig(learning_rate=1e-3))
    assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))


def test_train_zero_epochs_identity():
    p = init_params((4, 8, 4), np.random.default_rng(0))
    q, hist = train(p, np.ones((5, 4)), np.ones((5, 2)) * 0.5, TrainConfig(epochs=0))
    assert q == p and hist.train_loss == []


def test_train_empty_dataset():
    p = init_params((4, 8, 4), np.random.default_rng(0))
    with pytest.raises(ValueError):
        train(p, np.zeros((0, 4)), np.zeros((0, 2)), TrainConfig())


def test_train_deterministic():
    rng = np.random.default_rng(0)
    x, y = rng.normal(size=(50, 4)), rng.uniform(size=(50, 2))
    p = init_params((4, 8, 4), np.random.default_rng(1))
    cfg = TrainConfig(epochs=3, batch_size=10, seed=5)
    a, _ = train(p, x, y, cfg)
    b, _ = train(p, x, y, cfg)
    assert a == b


def test_train_constant_target():
    rng = np.random.default_rng(10)
    x = rng.normal(size=(500, 4))
    y = np.full((500, 2), 0.7)
    p = init_params((4, 16, 16, 4), np.random.default_rng(11))
    cfg = TrainConfig(learning_rate=1e-2, batch_size=50, epochs=150, patience=150, seed=1)
    p, _ = train(p, x, y, cfg)
    mu, s2 = forward(p, rng.normal(size=(200, 4)))
    assert np.all(np.abs(mu - 0.7) <= 0.02)
    assert np.median(s2) < 0.05


def test_train_recovers_heteroscedastic_noise():
    rng = np.random.default_rng(12)
    x = rng.uniform(-1, 1, size=(3000, 4))
    clean = 0.5 + 0.2 * np.tanh(x[:, :2])
    y = clean + rng.normal(scale=0.1, size=clean.shape)
    p = init_params((4, 32, 32, 4), np.random.default_rng(13))
    cfg = TrainConfig(learning_rate=3e-3, batch_size=100, epochs=60, seed=2)
    p, hist = train(p, x, y, cfg)
    _, s2 = forward(p, rng.uniform(-1, 1, size=(500, 4)))
    assert 0.05 <= np.median(np.sqrt(s2)) <= 0.2
    assert len(hist.val_loss) == len(hist.train_loss)


def test_save_load_round_trip():
    rng = np.random.default_rng(0)
    p = fit_input_scaling(init_params((4, 8, 4), rng), rng.normal(size=(10, 4)))
    assert load_model(save_model(p, "abc")) == p


def test_load_truncated_stream():
    data = save_model(init_params((4, 8, 4), np.random.default_rng(0)))
    with pytest.raises(ModelFormatError):
        load_model(data[: len(data) // 2])


def test_load_version_mismatch():
    import json

    obj = json.loads(save_model(init_params((4, 8, 4), np.random.default_rng(0))))
    obj["version"] = 99
    with pytest.raises(ModelVersionError):
        load_model(json.dumps(obj).encode())
