"""Offline transition datasets and replay buffers"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, NamedTuple, Optional, Tuple, Union

import numpy as np
import pandas as pd

from .C import *  # noqa: F403
from .format_version import __format_version__

logger = logging.getLogger(__name__)
__all__ = ['Batch', 'TransitionDataset', 'ReplayBuffer', 'get_dataset',
           'write_dataset', 'write_dataset_csv', 'sample_balanced_batch',
           'concat_batches']


class Batch(NamedTuple):
    """A minibatch of transitions"""
    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_obs: np.ndarray
    dones: np.ndarray

    def __len__(self) -> int:
        return self.rewards.shape[0]


def concat_batches(*batches: Batch) -> Batch:
    """Stack batches along the record axis"""
    return Batch(*(np.concatenate(parts) for parts in zip(*batches)))


def _as_records(values) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        return values[:, np.newaxis]
    return values


@dataclass
class TransitionDataset:
    """Learner-visible offline data

    Records are ``(s, x, y, s', done)`` with an episode index. Exogenous
    noise and confounders are never stored.

    Attributes:
        observations: ``(n, obs_dim)``
        actions: ``(n, action_dim)``
        rewards: ``(n,)``
        next_observations: ``(n, obs_dim)``
        dones: ``(n,)`` terminal flags; bootstrapping stops at ``done = 1``.
        episodes: ``(n,)`` episode index per record.
        metadata: Environment id, seed, reward bounds and dimensions.
    """
    observations: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_observations: np.ndarray
    dones: np.ndarray
    episodes: np.ndarray
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.rewards)
        self.observations = _as_records(self.observations)
        self.actions = _as_records(self.actions)
        self.next_observations = _as_records(self.next_observations)
        for name in ('observations', 'actions', 'next_observations',
                     'dones', 'episodes'):
            if len(getattr(self, name)) != n:
                raise ValueError(f"Dataset field '{name}' has "
                                 f"{len(getattr(self, name))} records, "
                                 f"expected {n}.")
        self.rewards = np.asarray(self.rewards, dtype=float)
        self.dones = np.asarray(self.dones, dtype=float)
        self.episodes = np.asarray(self.episodes, dtype=int)
        self.metadata = {
            **self.metadata,
            OBS_DIM: self.obs_dim,
            ACTION_DIM: self.action_dim,
            N_RECORDS: n,
            TERMINAL_BOOTSTRAP_MASKED: True,
            FORMAT_VERSION: __format_version__,
        }

    def __len__(self) -> int:
        return len(self.rewards)

    @property
    def obs_dim(self) -> int:
        return self.observations.shape[1]

    @property
    def action_dim(self) -> int:
        return self.actions.shape[1]

    @property
    def reward_bounds(self) -> Tuple[float, float]:
        if REWARD_BOUNDS in self.metadata:
            low, high = self.metadata[REWARD_BOUNDS]
            return float(low), float(high)
        return float(self.rewards.min()), float(self.rewards.max())

    def batch(self, index: np.ndarray) -> Batch:
        """Records at the given positions"""
        return Batch(self.observations[index], self.actions[index],
                     self.rewards[index], self.next_observations[index],
                     self.dones[index])

    def sample_batch(self, rng: np.random.Generator, size: int) -> Batch:
        """Uniformly sample ``size`` records with replacement"""
        if not len(self):
            raise ValueError("Cannot sample from an empty dataset.")
        return self.batch(rng.integers(len(self), size=size))

    def to_df(self) -> pd.DataFrame:
        """One row per record with one column per vector component"""
        columns = {}
        for prefix, values in ((OBSERVATION, self.observations),
                               (ACTION, self.actions)):
            for i in range(values.shape[1]):
                columns[f'{prefix}_{i}'] = values[:, i]
        columns[REWARD] = self.rewards
        for i in range(self.obs_dim):
            columns[f'{NEXT_OBSERVATION}_{i}'] = self.next_observations[:, i]
        columns[DONE] = self.dones
        columns[EPISODE] = self.episodes
        return pd.DataFrame(columns)


def write_dataset(dataset: TransitionDataset,
                  filename: Union[str, Path]) -> None:
    """Write a dataset as JSON header line plus binary records

    Each record is the little-endian float64 sequence
    ``obs, action, reward, next_obs, done, episode``.

    Arguments:
        dataset: Dataset to write.
        filename: Destination file.
    """
    records = np.column_stack([
        dataset.observations, dataset.actions, dataset.rewards,
        dataset.next_observations, dataset.dones,
        dataset.episodes.astype(float)]).astype('<f8')
    header = json.dumps(dataset.metadata, sort_keys=True).encode('utf-8')
    with open(filename, 'wb') as f:
        f.write(header + b'\n')
        f.write(records.tobytes())


def get_dataset(filename: Union[str, Path]) -> TransitionDataset:
    """Read a dataset written by :func:`write_dataset`

    Arguments:
        filename: Dataset file.

    Raises:
        FileNotFoundError: if the file does not exist.
        ValueError: if header and payload are inconsistent.
    """
    data = Path(filename).read_bytes()
    header_end = data.find(b'\n')
    if header_end < 0:
        raise ValueError(f"{filename} lacks a dataset header.")
    metadata = json.loads(data[:header_end].decode('utf-8'))
    if metadata.get(FORMAT_VERSION) != __format_version__:
        raise ValueError(f"{filename} has unsupported format version "
                         f"{metadata.get(FORMAT_VERSION)}.")
    obs_dim, action_dim = metadata[OBS_DIM], metadata[ACTION_DIM]
    width = 2 * obs_dim + action_dim + 3
    payload = data[header_end + 1:]
    if len(payload) != 8 * width * metadata[N_RECORDS]:
        raise ValueError(f"{filename}: payload does not hold "
                         f"{metadata[N_RECORDS]} records of width {width}.")
    records = np.frombuffer(payload, dtype='<f8').reshape(-1, width) \
        .astype(float)
    columns = np.cumsum([0, obs_dim, action_dim, 1, obs_dim, 1, 1])
    return TransitionDataset(
        observations=records[:, columns[0]:columns[1]],
        actions=records[:, columns[1]:columns[2]],
        rewards=records[:, columns[2]],
        next_observations=records[:, columns[3]:columns[4]],
        dones=records[:, columns[4]],
        episodes=records[:, columns[5]].astype(int),
        metadata=metadata,
    )


def write_dataset_csv(dataset: TransitionDataset,
                      filename: Union[str, Path]) -> None:
    """Write a dataset as CSV for inspection"""
    dataset.to_df().to_csv(filename, index=False)


class ReplayBuffer:
    """Bounded first-in first-out buffer of online transitions

    Arguments:
        obs_dim: Observation dimension.
        action_dim: Action dimension.
        capacity: Maximum number of stored transitions.
    """

    def __init__(self, obs_dim: int, action_dim: int, capacity: int):
        if capacity < 1:
            raise ValueError(f"Invalid buffer capacity {capacity}.")
        self.capacity = capacity
        self._obs = np.zeros((capacity, obs_dim))
        self._actions = np.zeros((capacity, action_dim))
        self._rewards = np.zeros(capacity)
        self._next_obs = np.zeros((capacity, obs_dim))
        self._dones = np.zeros(capacity)
        self._episodes = np.zeros(capacity, dtype=int)
        self._size = 0
        self._next = 0

    def __len__(self) -> int:
        return self._size

    def add(self, obs: np.ndarray, actions: np.ndarray, rewards: np.ndarray,
            next_obs: np.ndarray, dones: np.ndarray,
            episodes: np.ndarray) -> None:
        """Append a batch of transitions, evicting the oldest if full"""
        for i in range(len(rewards)):
            j = self._next
            self._obs[j] = obs[i]
            self._actions[j] = actions[i]
            self._rewards[j] = rewards[i]
            self._next_obs[j] = next_obs[i]
            self._dones[j] = dones[i]
            self._episodes[j] = episodes[i]
            self._next = (j + 1) % self.capacity
            self._size = min(self._size + 1, self.capacity)

    def sample_batch(self, rng: np.random.Generator, size: int) -> Batch:
        if not self._size:
            raise ValueError("Cannot sample from an empty replay buffer.")
        index = rng.integers(self._size, size=size)
        return Batch(self._obs[index], self._actions[index],
                     self._rewards[index], self._next_obs[index],
                     self._dones[index])

    def as_dataset(self, metadata: Optional[Dict[str, Any]] = None
                   ) -> TransitionDataset:
        """Stored transitions, oldest first"""
        order = (np.arange(self._size) + (self._next if self._size ==
                                          self.capacity else 0)) \
            % self.capacity
        return TransitionDataset(
            observations=self._obs[order], actions=self._actions[order],
            rewards=self._rewards[order],
            next_observations=self._next_obs[order],
            dones=self._dones[order], episodes=self._episodes[order],
            metadata=metadata or {})


def sample_balanced_batch(
        offline: Union[TransitionDataset, ReplayBuffer],
        online: Union[TransitionDataset, ReplayBuffer],
        rng: np.random.Generator,
        size: int
) -> Tuple[Batch, Batch]:
    """Half batch from each source

    Returns:
        ``ceil(size / 2)`` offline records and ``floor(size / 2)`` online
        records.
    """
    n_online = size // 2
    return (offline.sample_batch(rng, size - n_online),
            online.sample_batch(rng, n_online))
