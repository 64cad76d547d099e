"""Tests for cfql.dataset"""
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from cfql.C import *
from cfql.dataset import (ReplayBuffer, TransitionDataset, concat_batches,
                          get_dataset, sample_balanced_batch, write_dataset,
                          write_dataset_csv)


@pytest.fixture
def dataset():
    rng = np.random.default_rng(0)
    n = 30
    return TransitionDataset(
        observations=rng.standard_normal((n, 2)),
        actions=rng.uniform(-1, 1, (n, 2)),
        rewards=-np.ones(n),
        next_observations=rng.standard_normal((n, 2)),
        dones=(np.arange(n) % 10 == 9).astype(float),
        episodes=np.arange(n) // 10,
        metadata={ENV_ID: TWO_GOAL_REACHER, REWARD_BOUNDS: [-1.0, 0.0],
                  SEED: 0},
    )


def test_metadata(dataset):
    assert len(dataset) == 30
    assert dataset.obs_dim == 2
    assert dataset.action_dim == 2
    assert dataset.metadata[N_RECORDS] == 30
    assert dataset.metadata[TERMINAL_BOOTSTRAP_MASKED] is True
    assert dataset.reward_bounds == (-1.0, 0.0)


def test_inconsistent_fields():
    with pytest.raises(ValueError, match='actions'):
        TransitionDataset(observations=np.zeros((3, 1)),
                          actions=np.zeros((2, 1)), rewards=np.zeros(3),
                          next_observations=np.zeros((3, 1)),
                          dones=np.zeros(3), episodes=np.zeros(3))


def test_write_read(dataset):
    with tempfile.TemporaryDirectory() as tmpdir:
        filename = Path(tmpdir, 'data.bin')
        write_dataset(dataset, filename)
        actual = get_dataset(filename)

        csv_file = Path(tmpdir, 'data.csv')
        write_dataset_csv(dataset, csv_file)
        df = pd.read_csv(csv_file)

    for name in ('observations', 'actions', 'rewards', 'next_observations',
                 'dones', 'episodes'):
        assert np.array_equal(getattr(actual, name), getattr(dataset, name))
    assert actual.metadata == dataset.metadata

    assert list(df.columns) == ['obs_0', 'obs_1', 'action_0', 'action_1',
                                REWARD, 'next_obs_0', 'next_obs_1', DONE,
                                EPISODE]
    assert len(df) == 30


def test_read_invalid(dataset):
    with tempfile.TemporaryDirectory() as tmpdir:
        filename = Path(tmpdir, 'data.bin')
        write_dataset(dataset, filename)
        data = filename.read_bytes()

        filename.write_bytes(data[:-8])
        with pytest.raises(ValueError):
            get_dataset(filename)

        filename.write_bytes(b'no header')
        with pytest.raises(ValueError):
            get_dataset(filename)

        with pytest.raises(FileNotFoundError):
            get_dataset(Path(tmpdir, 'missing.bin'))


def test_sample_batch(dataset):
    rng = np.random.default_rng(1)
    batch = dataset.sample_batch(rng, 64)
    assert len(batch) == 64
    assert batch.obs.shape == (64, 2)
    assert batch.actions.shape == (64, 2)
    # every sampled row is a record of the dataset
    for obs in batch.obs[:5]:
        assert np.any(np.all(dataset.observations == obs, axis=1))


def test_replay_buffer_evicts_oldest():
    buffer = ReplayBuffer(obs_dim=1, action_dim=1, capacity=3)
    for i in range(5):
        buffer.add(np.array([[i]]), np.array([[0.0]]), np.array([float(i)]),
                   np.array([[i + 1]]), np.array([0.0]), np.array([0]))
    assert len(buffer) == 3
    assert np.array_equal(buffer.as_dataset().rewards, [2.0, 3.0, 4.0])

    batch = buffer.sample_batch(np.random.default_rng(0), 50)
    assert set(batch.rewards) <= {2.0, 3.0, 4.0}

    with pytest.raises(ValueError):
        ReplayBuffer(1, 1, 0)
    with pytest.raises(ValueError):
        ReplayBuffer(1, 1, 2).sample_batch(np.random.default_rng(0), 1)


def test_balanced_batch(dataset):
    online = ReplayBuffer(obs_dim=2, action_dim=2, capacity=10)
    online.add(np.full((4, 2), 9.0), np.zeros((4, 2)), np.zeros(4),
               np.zeros((4, 2)), np.zeros(4), np.zeros(4, dtype=int))
    rng = np.random.default_rng(0)
    offline_half, online_half = sample_balanced_batch(dataset, online, rng,
                                                      7)
    assert len(offline_half) == 4
    assert len(online_half) == 3
    assert np.all(online_half.obs == 9.0)
    assert not np.any(offline_half.obs == 9.0)

    batch = concat_batches(offline_half, online_half)
    assert len(batch) == 7
    assert np.all(batch.obs[4:] == 9.0)
