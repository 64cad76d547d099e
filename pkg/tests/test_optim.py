"""Tests for cfql.optim"""
import numpy as np
import pytest

from cfql.mlp import init_mlp
from cfql.optim import adam_step, apply_adam, init_adam


def test_first_step_moves_by_learning_rate():
    params = [np.array([1.0, -2.0, 0.5])]
    grads = [np.array([0.3, -40.0, 1e-3])]
    state = init_adam(params, lr=0.01)
    new_params, state = adam_step(state, params, grads)
    # bias-corrected first step is lr * sign(g) up to eps
    expected = params[0] - 0.01 * grads[0] / (np.abs(grads[0]) + 1e-8)
    assert np.allclose(new_params[0], expected, rtol=0, atol=1e-12)
    assert state.step == 1
    assert np.allclose(state.m[0], 0.1 * grads[0])
    assert np.allclose(state.v[0], 0.001 * grads[0] ** 2)


def test_constant_gradient_closed_form():
    params = [np.array([0.0])]
    grad = [np.array([2.0])]
    state = init_adam(params, lr=0.1, eps=0.0)
    for _ in range(5):
        params, state = adam_step(state, params, grad)
    assert params[0] == pytest.approx([-0.5], abs=1e-12)
    assert state.step == 5


def test_inputs_not_modified():
    params = [np.ones((2, 2))]
    grads = [np.ones((2, 2))]
    state = init_adam(params)
    adam_step(state, params, grads)
    assert np.array_equal(params[0], np.ones((2, 2)))
    assert state.step == 0
    assert not np.any(state.m[0])


def test_shape_mismatch():
    state = init_adam([np.zeros(3)])
    with pytest.raises(ValueError):
        adam_step(state, [np.zeros(3)], [np.zeros(4)])
    with pytest.raises(ValueError):
        adam_step(state, [np.zeros(3), np.zeros(1)],
                  [np.zeros(3), np.zeros(1)])


def test_apply_adam_on_network():
    rng = np.random.default_rng(0)
    params = init_mlp([2, 4, 1], rng=rng)
    state = init_adam(params, lr=1e-3)
    grads = params.with_tensors([np.ones_like(t) for t in params.tensors()])
    new_params, state = apply_adam(state, params, grads)
    for old, new in zip(params.tensors(), new_params.tensors()):
        assert np.allclose(old - new, 1e-3, atol=1e-9)
    assert new_params.layer_sizes == params.layer_sizes
    assert state.step == 1


def test_quadratic_descent():
    target = np.array([2.0, -3.0, 4.0])
    params = [np.zeros(3)]
    state = init_adam(params, lr=0.01)
    losses = []
    for _ in range(100):
        losses.append(0.5 * np.sum((params[0] - target) ** 2))
        params, state = adam_step(state, params, [params[0] - target])
    losses.append(0.5 * np.sum((params[0] - target) ** 2))
    assert np.all(np.diff(losses[5:]) < 0)
    assert losses[-1] < losses[0]


def test_zero_gradient():
    params = [np.array([1.0, -1.0])]
    state = init_adam(params, lr=0.1)
    new_params, state = adam_step(state, params, [np.zeros(2)])
    assert np.array_equal(new_params[0], params[0])
    assert not np.any(state.m[0]) and not np.any(state.v[0])

    # accumulated moments decay geometrically
    params, state = adam_step(state, params, [np.array([1.0, 1.0])])
    m, v = state.m[0], state.v[0]
    _, state = adam_step(state, params, [np.zeros(2)])
    assert np.allclose(state.m[0], 0.9 * m)
    assert np.allclose(state.v[0], 0.999 * v)
