"""Tests for cfql.nominal"""
import numpy as np
import pytest

from cfql.C import *
from cfql.cmdp import sample_trajectories
from cfql.dataset import TransitionDataset
from cfql.envs import confounded_chain, random_cmdp
from cfql.nominal import estimate_nominal, nominal_from_cmdp


def test_nominal_of_confounded_chain():
    model = confounded_chain()
    nominal = nominal_from_cmdp(model)

    assert np.allclose(nominal.behavior, np.tile([0.4, 0.6], (4, 1)))
    # observationally every action moves up
    for s in range(4):
        for x in range(2):
            expected = np.zeros(4)
            expected[min(s + 1, 3)] = 1.0
            assert np.allclose(nominal.transition[s, x], expected)
    assert np.allclose(nominal.reward[:3], 0.0)
    assert np.allclose(nominal.reward[3], 1.0)

    # while under intervention the chain moves down with positive probability
    interventional = model.interventional_transition()
    assert interventional[1, 0, 0] == pytest.approx(0.6)


def test_estimate_matches_infinite_data_limit():
    model = confounded_chain()
    data = sample_trajectories(model, episodes=50, seed=0, horizon=40)
    estimate = estimate_nominal(data, model.n_states, model.n_actions)
    limit = nominal_from_cmdp(model)

    assert np.all(estimate.visited == limit.visited)
    assert np.allclose(estimate.transition, limit.transition)
    assert np.allclose(estimate.reward, limit.reward)
    # the top state collects most visits
    assert np.allclose(estimate.behavior[3], limit.behavior[3], atol=0.05)
    assert estimate.visits.sum() == len(data)
    assert estimate.reward_bounds == (0.0, 1.0)


def test_unvisited_pairs():
    data = TransitionDataset(
        observations=[[0], [0], [1]],
        actions=[[0], [0], [1]],
        rewards=[1.0, 0.0, 0.5],
        next_observations=[[1], [0], [0]],
        dones=[0, 0, 0],
        episodes=[0, 0, 0],
        metadata={REWARD_BOUNDS: [0.0, 1.0]},
    )
    nominal = estimate_nominal(data, n_states=3, n_actions=2)

    assert np.allclose(nominal.behavior, [[1, 0], [0, 1], [0, 0]])
    assert np.allclose(nominal.transition[0, 0], [0.5, 0.5, 0.0])
    assert nominal.reward[0, 0] == pytest.approx(0.5)
    assert np.isnan(nominal.reward[0, 1])
    assert np.all(np.isnan(nominal.transition[2]))
    assert np.array_equal(nominal.unvisited_states, [2])

    df = nominal.to_df()
    assert len(df) == 6
    assert df['visits'].sum() == 3


def test_invalid_datasets():
    data = TransitionDataset(observations=[[0.5]], actions=[[0]],
                             rewards=[0.0], next_observations=[[0]],
                             dones=[0], episodes=[0])
    with pytest.raises(ValueError):
        estimate_nominal(data, 2, 2)

    data = TransitionDataset(observations=[[3]], actions=[[0]],
                             rewards=[0.0], next_observations=[[0]],
                             dones=[0], episodes=[0])
    with pytest.raises(ValueError):
        estimate_nominal(data, 2, 2)

    empty = TransitionDataset(observations=np.zeros((0, 1)),
                              actions=np.zeros((0, 1)), rewards=[],
                              next_observations=np.zeros((0, 1)), dones=[],
                              episodes=[])
    with pytest.raises(ValueError):
        estimate_nominal(empty, 2, 2)


def test_random_cmdp_nominal_is_consistent():
    model = random_cmdp((4, 3, 3), seed=7)
    nominal = nominal_from_cmdp(model)
    visited = nominal.visited
    assert np.allclose(nominal.behavior.sum(axis=1), 1.0)
    assert np.allclose(nominal.transition[visited].sum(axis=1), 1.0)
    assert np.all(nominal.reward[visited] >= 0.0)
    assert np.all(nominal.reward[visited] <= 1.0)
