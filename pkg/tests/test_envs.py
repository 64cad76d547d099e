"""Tests for cfql.envs"""
import numpy as np
import pandas as pd
import pytest

from cfql.C import *
from cfql.cmdp import ContinuousCmdpEnv, TabularCmdp, sample_trajectories
from cfql.envs import (ENV_REGISTRY, ConfoundedBanditEnv, expert_actor,
                       get_env_spec, list_envs, make_env, random_actor,
                       random_cmdp, rollout)

CONTINUOUS_ENVS = [env_id for env_id, spec in ENV_REGISTRY.items()
                   if spec.kind == 'continuous']


def test_registry():
    assert set(ENV_REGISTRY) == {CONFOUNDED_BANDIT, TWO_GOAL_REACHER,
                                 TABULAR_CHAIN}
    for env_id, spec in ENV_REGISTRY.items():
        env = make_env(env_id, seed=3)
        if spec.kind == 'continuous':
            assert isinstance(env, ContinuousCmdpEnv)
            assert env.env_id == env_id
            assert (env.obs_dim, env.action_dim, env.horizon) \
                == (spec.obs_dim, spec.action_dim, spec.horizon)
            assert env.reward_bounds == spec.reward_bounds
        else:
            assert isinstance(env, TabularCmdp)

    with pytest.raises(ValueError, match='Unknown environment'):
        get_env_spec('cartpole-v1')
    with pytest.raises(ValueError):
        make_env('cartpole-v1')


def test_list_envs():
    df = list_envs()
    assert isinstance(df, pd.DataFrame)
    assert len(df) == len(ENV_REGISTRY)
    assert {ENV_ID, 'kind', OBS_DIM, ACTION_DIM, 'horizon',
            'random_success_max', 'expert_success_min'} <= set(df.columns)


@pytest.mark.parametrize('env_id', CONTINUOUS_ENVS)
def test_success_witnesses(env_id):
    spec = get_env_spec(env_id)
    env = make_env(env_id)
    expert_success, _ = rollout(env, expert_actor(env), 2000, seed=0)
    random_success, _ = rollout(env, random_actor(env), 2000, seed=0)
    assert expert_success.mean() >= spec.expert_success_min
    assert random_success.mean() <= spec.random_success_max


def test_rollout():
    env = make_env(TWO_GOAL_REACHER)
    success, returns = rollout(env, expert_actor(env), 50, seed=1)
    assert success.shape == returns.shape == (50,)
    assert np.all((returns <= 0) & (returns >= -env.horizon))
    # a successful episode stops paying the step cost
    assert np.all(returns[success] > -env.horizon)

    again, _ = rollout(env, expert_actor(env), 50, seed=1)
    np.testing.assert_array_equal(success, again)

    with pytest.raises(ValueError):
        rollout(env, expert_actor(env), 0, seed=1)


def test_step_clips_and_validates():
    env = make_env(TWO_GOAL_REACHER)
    states = np.zeros((1, 2))
    confounders = np.array([1.0])
    next_states, rewards, dones, _ = env.step(states, np.array([[5.0, 0.0]]),
                                              confounders)
    np.testing.assert_allclose(next_states, [[0.1, 0.0]])
    assert rewards[0] == -1.0 and not dones[0]

    with pytest.raises(ValueError, match='shape'):
        env.step(states, np.zeros((1, 3)), confounders)


def test_confounded_bandit():
    env = ConfoundedBanditEnv()
    rng = np.random.default_rng(0)
    confounders = env.sample_confounder(rng, 10000)
    assert set(np.unique(confounders)) == {-1.0, 1.0}
    assert abs(np.mean(confounders > 0) - 0.3) < 0.02

    # the observed reward of the right arm exceeds its interventional value
    data = sample_trajectories(env, episodes=2000, seed=0)
    right = data.actions[:, 0] > 0.4
    observed = data.rewards[right].mean()
    interventional = np.mean(env.mean_reward(np.full(10000, 0.8),
                                             confounders))
    assert observed > 0.8
    assert interventional < 0.4
    assert np.all(data.dones == 1.0)

    model = env.discretize()
    np.testing.assert_allclose(model.noise_probs, [0.7, 0.3])
    np.testing.assert_array_equal(model.behavior, [[0, 2]])
    assert model.gamma == 0.0
    assert model.reward[0, 2, 1] == pytest.approx(1.0)
    assert model.reward[0, 0, 0] == pytest.approx(0.7)


def test_reacher_data_hides_confounder():
    env = make_env(TWO_GOAL_REACHER)
    data = sample_trajectories(env, episodes=20, seed=0)
    assert data.obs_dim == 2 and data.action_dim == 2
    assert data.metadata[ENV_ID] == TWO_GOAL_REACHER
    assert np.all(np.isin(data.rewards, [-1.0, 0.0]))
    # every demonstration reaches a goal
    assert data.dones.sum() == 20
    assert np.all(np.abs(data.actions) <= 1.0)


def test_confounded_chain():
    model = make_env(TABULAR_CHAIN)
    assert (model.n_states, model.n_actions, model.n_noise) == (4, 2, 2)
    assert model.gamma == 0.9
    np.testing.assert_array_equal(model.behavior[:, 1], 1)
    # observationally every step moves up
    for s in range(4):
        for u in range(2):
            x = model.behavior[s, u]
            assert model.transition[s, x, u] == min(s + 1, 3)
    assert model.reward.sum() == 2.0


def test_random_cmdp():
    model = random_cmdp((5, 3, 2), seed=4, reward_bounds=(-1.0, 2.0),
                        gamma=0.5)
    assert (model.n_states, model.n_actions, model.n_noise) == (5, 3, 2)
    assert model.reward.min() >= -1.0 and model.reward.max() <= 2.0
    other = random_cmdp((5, 3, 2), seed=4, reward_bounds=(-1.0, 2.0),
                        gamma=0.5)
    np.testing.assert_array_equal(model.transition, other.transition)
    np.testing.assert_array_equal(model.noise_probs, other.noise_probs)

    with pytest.raises(ValueError):
        random_cmdp((0, 3, 2), seed=0)


def test_reacher_actions_are_bimodal_at_fixed_observation():
    env = make_env(TWO_GOAL_REACHER)
    rng = np.random.default_rng(2)
    n = 10_000
    states = np.zeros((n, 2))
    confounders = env.sample_confounder(rng, n)
    actions = env.expert_action(states, confounders, rng)
    # the observation is the same for all draws, only u differs
    assert np.allclose(env.observe(states), env.observe(states[:1]))
    assert np.all(np.abs(actions[:, 0]) > 0.9)
    assert np.all(np.abs(actions[:, 1]) < 0.6)
    positive = np.mean(actions[:, 0] > 0)
    assert abs(positive - 0.5) <= 3 * np.sqrt(0.25 / n)
    # the mode matches the goal side chosen by the confounder
    assert np.array_equal(np.sign(actions[:, 0]),
                          np.sign(env.goals(confounders)[:, 0]))
