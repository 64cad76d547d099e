"""Tests for cfql.cmdp"""
import tempfile
from pathlib import Path

import numpy as np
import pytest

from cfql.C import *
from cfql.cmdp import (TabularCmdp, check_policy_table, get_cmdp,
                       monte_carlo_policy_value, sample_categorical,
                       sample_trajectories, true_policy_value, write_cmdp)
from cfql.envs import confounded_chain


@pytest.fixture
def matching_bandit():
    """One state, the demonstrator always plays the paying action"""
    return TabularCmdp(
        noise_probs=[0.3, 0.7],
        behavior=[[0, 1]],
        transition=np.zeros((1, 2, 2), dtype=int),
        reward=[[[1.0, 0.0], [0.0, 1.0]]],
        reward_bounds=(0.0, 1.0),
        initial=[1.0],
        gamma=0.5,
    )


def test_interventional_quantities(matching_bandit):
    model = matching_bandit
    assert model.n_states == 1
    assert model.n_actions == 2
    assert model.n_noise == 2
    assert np.allclose(model.behavior_policy(), [[0.3, 0.7]])
    assert np.allclose(model.interventional_reward(), [[0.3, 0.7]])
    assert np.allclose(model.interventional_transition(), [[[1.0], [1.0]]])

    uniform = np.full((1, 2), 0.5)
    assert true_policy_value(model, uniform) == pytest.approx([1.0])
    assert true_policy_value(model, np.array([[1.0, 0.0]])) \
        == pytest.approx([0.6])


def test_observational_data_hides_confounding(matching_bandit):
    dataset = sample_trajectories(matching_bandit, episodes=5, seed=1,
                                  horizon=20)
    assert len(dataset) == 100
    assert dataset.observations.shape == (100, 1)
    assert dataset.actions.shape == (100, 1)
    # the demonstrator always matches the noise
    assert np.all(dataset.rewards == 1.0)
    assert set(np.unique(dataset.actions)) == {0.0, 1.0}
    assert dataset.metadata[N_STATES] == 1
    assert dataset.metadata[N_ACTIONS] == 2
    assert dataset.metadata[REWARD_BOUNDS] == [0.0, 1.0]
    assert np.array_equal(np.unique(dataset.episodes), np.arange(5))


def test_invalid_cmdps(matching_bandit):
    data = matching_bandit.to_dict()

    with pytest.raises(ValueError):
        TabularCmdp.from_dict({**data, 'noise_probs': [0.5, 0.6]})
    with pytest.raises(ValueError):
        TabularCmdp.from_dict({**data, 'behavior': [[0, 2]]})
    with pytest.raises(ValueError):
        TabularCmdp.from_dict({**data, 'gamma': 1.0})
    with pytest.raises(ValueError):
        TabularCmdp.from_dict({**data, REWARD_BOUNDS: [0.0, 0.5]})
    with pytest.raises(ValueError):
        TabularCmdp.from_dict({**data, 'transition': [[[0, 1], [0, 0]]]})
    missing = dict(data)
    del missing['initial']
    with pytest.raises(ValueError, match='initial'):
        TabularCmdp.from_dict(missing)


def test_write_read_cmdp(matching_bandit):
    with tempfile.TemporaryDirectory() as tmpdir:
        filename = Path(tmpdir, 'cmdp.json')
        write_cmdp(matching_bandit, filename)
        model = get_cmdp(filename)
    assert model.to_dict() == matching_bandit.to_dict()


def test_sampling_is_reproducible(monkeypatch):
    model = confounded_chain()
    first = sample_trajectories(model, episodes=4, seed=3, horizon=10)
    second = sample_trajectories(model, episodes=4, seed=3, horizon=10)
    other = sample_trajectories(model, episodes=4, seed=4, horizon=10)
    assert np.array_equal(first.actions, second.actions)
    assert not np.array_equal(first.actions, other.actions)

    monkeypatch.setenv('CFQL_THREADS', '3')
    threaded = sample_trajectories(model, episodes=4, seed=3, horizon=10)
    assert np.array_equal(first.actions, threaded.actions)
    assert np.array_equal(first.next_observations,
                          threaded.next_observations)


def test_sampling_needs_episodes():
    with pytest.raises(ValueError):
        sample_trajectories(confounded_chain(), episodes=0, seed=0)


def test_monte_carlo_agrees_with_exact_value():
    model = confounded_chain()
    policy = np.full((model.n_states, model.n_actions), 0.5)
    exact = true_policy_value(model, policy)
    estimate, se = monte_carlo_policy_value(model, policy, episodes=2000,
                                            seed=0, start_state=0)
    assert abs(estimate - exact[0]) <= 4 * se + 1e-9


def test_check_policy_table():
    assert check_policy_table([[0.2, 0.8]], 1, 2).shape == (1, 2)
    with pytest.raises(ValueError):
        check_policy_table([[0.2, 0.7]], 1, 2)
    with pytest.raises(ValueError):
        check_policy_table([[1.0]], 1, 2)
    with pytest.raises(ValueError):
        check_policy_table([[1.5, -0.5]], 1, 2)


def test_sample_categorical():
    rng = np.random.default_rng(0)
    draws = sample_categorical(rng, np.tile([0.2, 0.0, 0.8], (5000, 1)))
    assert 1 not in draws
    assert np.mean(draws == 0) == pytest.approx(0.2, abs=0.03)


def test_empirical_behavior_matches_noise_marginal():
    # the next state is the current noise value, so both states recur
    model = TabularCmdp(
        noise_probs=[0.35, 0.65],
        behavior=[[0, 1], [1, 0]],
        transition=np.tile(np.arange(2), (2, 2, 1)),
        reward=np.zeros((2, 2, 2)),
        reward_bounds=(0.0, 1.0),
        initial=[0.5, 0.5],
        gamma=0.9,
    )
    dataset = sample_trajectories(model, episodes=100, seed=3, horizon=100)
    assert len(dataset) == 10_000
    states = dataset.observations[:, 0].astype(int)
    actions = dataset.actions[:, 0].astype(int)
    expected = model.behavior_policy()
    assert np.allclose(expected, [[0.35, 0.65], [0.65, 0.35]])
    for s in range(2):
        visits = np.sum(states == s)
        p = expected[s, 1]
        empirical = np.mean(actions[states == s] == 1)
        assert abs(empirical - p) <= 3 * np.sqrt(p * (1 - p) / visits)
