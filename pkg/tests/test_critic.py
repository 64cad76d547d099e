"""Tests for cfql.critic"""
import numpy as np
import pytest

from cfql.C import *
from cfql.critic import (CriticEnsemble, combine_robust_q,
                         critic_action_grad, critic_loss, critic_values,
                         init_critic_ensemble, polyak_update, robust_q)
from cfql.dataset import Batch
from cfql.discriminator import Discriminator
from cfql.flow import init_one_step_policy, policy_action
from cfql.mlp import MlpParams, init_mlp, zeros_like_params


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def self_loop_batch(n: int, reward: float, done: float) -> Batch:
    obs = np.full((n, 1), 0.5)
    return Batch(obs=obs, actions=np.zeros((n, 1)),
                 rewards=np.full(n, reward), next_obs=obs.copy(),
                 dones=np.full(n, done))


def test_bellman_fixed_point_of_self_loop(rng):
    critics = init_critic_ensemble(1, 1, [], 2, rng, tau=1.0)
    # the zero policy always acts 0, the action stored in the batch
    policy = zeros_like_params(init_one_step_policy(1, 1, [4], rng))
    batch = self_loop_batch(4, reward=1.0, done=0.0)
    for _ in range(500):
        _, grads = critic_loss(critics, batch, policy, 0.5, rng)
        members = [m.with_tensors([p - 0.1 * g for p, g in
                                   zip(m.tensors(), grad.tensors())])
                   for m, grad in zip(critics.members, grads)]
        critics = polyak_update(critics.with_members(members))
    q = critic_values(critics.members, batch.obs, batch.actions)
    assert np.allclose(q, 2.0, atol=1e-6)


def test_terminal_transitions_do_not_bootstrap(rng):
    critics = init_critic_ensemble(1, 1, [8], 3, rng)
    policy = init_one_step_policy(1, 1, [4], rng)
    batch = self_loop_batch(5, reward=0.0, done=1.0)
    losses, grads = critic_loss(critics, batch, policy, 0.99, rng)
    q = critic_values(critics.members, batch.obs, batch.actions)
    assert losses.shape == (3,)
    assert np.allclose(losses, np.mean(q ** 2, axis=1))
    assert len(grads) == 3


def test_combine_robust_q():
    q = np.array([[1.0, 4.0, -2.0],
                  [3.0, 0.0, -1.0]])
    mean = q.mean(axis=0)

    robust, _ = combine_robust_q(q, np.ones(3))
    assert np.allclose(robust, mean)

    robust, _ = combine_robust_q(q, np.zeros(3))
    assert np.allclose(robust, q.min(axis=0))

    robust, _ = combine_robust_q(q, np.zeros(3), WORST_CASE_BATCH)
    assert np.allclose(robust, mean.min())

    weights = np.array([0.2, 0.5, 0.9])
    robust, _ = combine_robust_q(q, weights)
    assert np.allclose(robust,
                       weights * mean + (1 - weights) * q.min(axis=0))

    with pytest.raises(ValueError):
        combine_robust_q(q, weights, 'median')


@pytest.mark.parametrize('worst_case', WORST_CASE_MODES)
def test_combine_robust_q_gradient(worst_case, rng):
    q = rng.standard_normal((3, 5))
    weights = rng.random(5)
    _, grad = combine_robust_q(q, weights, worst_case)
    h = 1e-7
    for index in np.ndindex(*q.shape):
        plus, minus = q.copy(), q.copy()
        plus[index] += h
        minus[index] -= h
        numeric = (combine_robust_q(plus, weights, worst_case)[0].sum()
                   - combine_robust_q(minus, weights, worst_case)[0].sum()) \
            / (2 * h)
        assert grad[index] == pytest.approx(numeric, abs=1e-6)


def test_critic_action_grad(rng):
    networks = [init_mlp([3, 6, 1], RELU, IDENTITY, rng) for _ in range(2)]
    obs = rng.standard_normal((4, 2))
    actions = rng.uniform(-1, 1, (4, 1))
    upstream = rng.standard_normal((2, 4))
    grad = critic_action_grad(networks, obs, actions, upstream)

    h = 1e-7

    def objective(a):
        return np.sum(upstream * critic_values(networks, obs, a))

    for j in range(4):
        plus, minus = actions.copy(), actions.copy()
        plus[j, 0] += h
        minus[j, 0] -= h
        numeric = (objective(plus) - objective(minus)) / (2 * h)
        assert grad[j, 0] == pytest.approx(numeric, rel=1e-4, abs=1e-6)


def test_polyak_update(rng):
    critics = init_critic_ensemble(2, 1, [4], 2, rng, tau=0.25)
    moved = critics.with_members([m.with_tensors([t + 1.0 for t in
                                                  m.tensors()])
                                  for m in critics.members])
    updated = polyak_update(moved)
    for target, before in zip(updated.targets, critics.targets):
        for t_new, t_old in zip(target.tensors(), before.tensors()):
            assert np.allclose(t_new, t_old + 0.25)
    # online networks are untouched
    for member, before in zip(updated.members, moved.members):
        for t_new, t_old in zip(member.tensors(), before.tensors()):
            assert np.array_equal(t_new, t_old)

    copied = polyak_update(moved, tau=1.0)
    for target, member in zip(copied.targets, moved.members):
        for t_new, t_member in zip(target.tensors(), member.tensors()):
            assert np.array_equal(t_new, t_member)

    with pytest.raises(ValueError):
        polyak_update(moved, tau=0.0)


def test_ensemble_validation(rng):
    member = init_mlp([2, 4, 1], rng=rng)
    with pytest.raises(ValueError):
        CriticEnsemble(members=[member], targets=[member])
    with pytest.raises(ValueError):
        CriticEnsemble(members=[member, member], targets=[member])
    with pytest.raises(ValueError):
        CriticEnsemble(members=[member, member], targets=[member, member],
                       tau=1.5)


def test_robust_q_with_discriminator(rng):
    critics = init_critic_ensemble(1, 1, [8], 2, rng, final_scale=1.0)
    obs = rng.standard_normal((6, 1))
    actions = rng.uniform(-1, 1, (6, 1))
    q = critic_values(critics.members, obs, actions)

    assert np.allclose(robust_q(critics, None, obs, actions),
                       q.mean(axis=0))

    # a constant logit of -1000 gives factual weight 0
    d = Discriminator(params=MlpParams(weights=[np.zeros((2, 1))],
                                       biases=[np.array([-1000.0])]))
    assert np.allclose(robust_q(critics, d, obs, actions), q.min(axis=0))


def test_members_share_one_bootstrap_target(rng):
    critics = init_critic_ensemble(2, 1, [8], 3, rng, final_scale=1.0)
    policy = init_one_step_policy(2, 1, [8], rng)
    batch = Batch(obs=rng.standard_normal((16, 2)),
                  actions=rng.uniform(-1, 1, (16, 1)),
                  rewards=rng.standard_normal(16),
                  next_obs=rng.standard_normal((16, 2)),
                  dones=(rng.random(16) < 0.3).astype(float))
    losses, _ = critic_loss(critics, batch, policy, 0.9,
                            np.random.default_rng(7))

    # a single noise draw for the whole batch
    z = np.random.default_rng(7).standard_normal((16, 1))
    next_actions = policy_action(policy, batch.next_obs, z)
    target = batch.rewards + 0.9 * (1 - batch.dones) * critic_values(
        critics.targets, batch.next_obs, next_actions).mean(axis=0)
    q = critic_values(critics.members, batch.obs, batch.actions)
    assert np.allclose(losses, np.mean((q - target) ** 2, axis=1))


def test_bellman_fixed_point_of_chain(rng):
    # s0 -> s1 -> s2 -> s3 -> end, reward 1 per step, one-hot observations
    gamma = 0.9
    obs = np.eye(4)
    batch = Batch(obs=obs, actions=np.zeros((4, 1)), rewards=np.ones(4),
                  next_obs=np.vstack([obs[1:], np.zeros((1, 4))]),
                  dones=np.array([0.0, 0.0, 0.0, 1.0]))
    critics = init_critic_ensemble(4, 1, [], 2, rng, tau=1.0)
    policy = zeros_like_params(init_one_step_policy(4, 1, [4], rng))
    for _ in range(3000):
        _, grads = critic_loss(critics, batch, policy, gamma, rng)
        members = [m.with_tensors([p - 0.1 * g for p, g in
                                   zip(m.tensors(), grad.tensors())])
                   for m, grad in zip(critics.members, grads)]
        critics = polyak_update(critics.with_members(members))
    q = critic_values(critics.members, batch.obs, batch.actions).mean(axis=0)
    expected = [sum(gamma ** k for k in range(4 - s)) for s in range(4)]
    assert q == pytest.approx(expected, rel=0.01)


def test_robust_q_of_constant_critics():
    def constant(value):
        return MlpParams(weights=[np.zeros((2, 1))],
                         biases=[np.array([value])])

    assert combine_robust_q(np.array([[3.0], [1.0]]),
                            np.array([0.25]))[0] == pytest.approx([1.25])

    critics = CriticEnsemble(members=[constant(3.0), constant(1.0)],
                             targets=[constant(3.0), constant(1.0)])
    # logit log(1/3) gives factual weight 0.25
    d = Discriminator(params=constant(np.log(1.0 / 3.0)))
    obs, actions = np.zeros((5, 1)), np.linspace(-1, 1, 5)[:, np.newaxis]
    assert robust_q(critics, d, obs, actions) \
        == pytest.approx(np.full(5, 1.25))


def test_pessimism_ordering(rng):
    q = rng.standard_normal((4, 10_000))
    weights = rng.random(10_000)
    robust, _ = combine_robust_q(q, weights)
    assert np.all(robust >= q.min(axis=0) - 1e-12)
    assert np.all(robust <= q.mean(axis=0) + 1e-12)

    # more factual weight never lowers the value
    more = np.minimum(weights + rng.random(10_000), 1.0)
    robust_more, _ = combine_robust_q(q, more)
    assert np.all(robust_more >= robust - 1e-12)
