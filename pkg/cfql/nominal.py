"""Nominal observational model of tabular datasets"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
import pandas as pd

from .C import *  # noqa: F403
from .cmdp import TabularCmdp
from .dataset import TransitionDataset

logger = logging.getLogger(__name__)
__all__ = ['NominalModel', 'estimate_nominal', 'nominal_from_cmdp']


@dataclass(frozen=True)
class NominalModel:
    """Observational transition, reward and behavior tables

    Entries of ``transition`` and ``reward`` at pairs ``(s, x)`` with
    ``behavior[s, x] == 0`` are NaN. States never visited carry an all-zero
    behavior row.

    Attributes:
        transition: ``T~(s, x, s')``, shape ``(S, X, S)``.
        reward: ``R~(s, x)``, shape ``(S, X)``.
        behavior: ``mu(x|s)``, shape ``(S, X)``.
        visits: Visit counts per ``(s, x)``.
        reward_bounds: Interval ``[a, b]`` of rewards.
    """
    transition: np.ndarray
    reward: np.ndarray
    behavior: np.ndarray
    visits: np.ndarray
    reward_bounds: Tuple[float, float]

    @property
    def n_states(self) -> int:
        return self.reward.shape[0]

    @property
    def n_actions(self) -> int:
        return self.reward.shape[1]

    @property
    def visited(self) -> np.ndarray:
        """Mask of ``(s, x)`` pairs with positive behavior probability"""
        return self.behavior > 0

    @property
    def unvisited_states(self) -> np.ndarray:
        """Indices of states without any observed action"""
        return np.flatnonzero(~self.visited.any(axis=1))

    def to_df(self) -> pd.DataFrame:
        """One row per ``(s, x)`` with behavior, reward and visit counts"""
        s, x = np.meshgrid(np.arange(self.n_states),
                           np.arange(self.n_actions), indexing='ij')
        return pd.DataFrame({
            STATE: s.ravel(),
            ACTION: x.ravel(),
            'behavior': self.behavior.ravel(),
            REWARD: self.reward.ravel(),
            'visits': self.visits.ravel(),
        })

    def with_rewards(self, reward: np.ndarray,
                     reward_bounds: Tuple[float, float]) -> 'NominalModel':
        """Copy with replaced reward table and bounds"""
        return NominalModel(self.transition, np.asarray(reward, dtype=float),
                            self.behavior, self.visits, reward_bounds)


def _discrete_column(values: np.ndarray, size: int, name: str) -> np.ndarray:
    if values.shape[1] != 1:
        raise ValueError(f"Tabular {name}s must be scalars, got dimension "
                         f"{values.shape[1]}.")
    index = values[:, 0].astype(int)
    if np.any(index != values[:, 0]) or np.any(index < 0) \
            or np.any(index >= size):
        raise ValueError(f"Tabular {name}s must be integers in "
                         f"[0, {size}).")
    return index


def estimate_nominal(
        data: TransitionDataset,
        n_states: int,
        n_actions: int
) -> NominalModel:
    """Maximum-likelihood nominal model

    Arguments:
        data: Discrete-encoded dataset.
        n_states: Number of states.
        n_actions: Number of actions.

    Returns:
        Frequency estimates of ``T~`` and ``mu`` and the conditional mean
        reward ``R~``.

    Raises:
        ValueError: if the dataset is empty or not discrete-encoded.
    """
    if not len(data):
        raise ValueError("Cannot estimate a nominal model from an empty "
                         "dataset.")
    s = _discrete_column(data.observations, n_states, 'state')
    x = _discrete_column(data.actions, n_actions, 'action')
    s_next = _discrete_column(data.next_observations, n_states, 'state')

    visits = np.zeros((n_states, n_actions), dtype=int)
    np.add.at(visits, (s, x), 1)
    counts = np.zeros((n_states, n_actions, n_states))
    np.add.at(counts, (s, x, s_next), 1.0)
    reward_sums = np.zeros((n_states, n_actions))
    np.add.at(reward_sums, (s, x), data.rewards)

    visited = visits > 0
    with np.errstate(invalid='ignore', divide='ignore'):
        transition = np.where(visited[:, :, np.newaxis],
                              counts / visits[:, :, np.newaxis], np.nan)
        reward = np.where(visited, reward_sums / visits, np.nan)
        state_visits = visits.sum(axis=1, keepdims=True)
        behavior = np.where(state_visits > 0, visits / state_visits, 0.0)

    n_unvisited = int(np.sum(state_visits == 0))
    if n_unvisited:
        logger.info(f"{n_unvisited} of {n_states} states are never visited "
                    "and get an all-zero behavior row.")
    return NominalModel(transition=transition, reward=reward,
                        behavior=behavior, visits=visits,
                        reward_bounds=data.reward_bounds)


def nominal_from_cmdp(model: TabularCmdp) -> NominalModel:
    """Infinite-data limit of :func:`estimate_nominal`

    Arguments:
        model: Ground-truth CMDP.

    Returns:
        Nominal model computed from the observational conditionals given
        the behavior mechanism. ``visits`` holds no counts and is zero.
    """
    n_s, n_x = model.n_states, model.n_actions
    joint_transition = np.zeros((n_s, n_x, n_s))
    joint_reward = np.zeros((n_s, n_x))
    states = np.arange(n_s)
    for u, p_u in enumerate(model.noise_probs):
        x = model.behavior[:, u]
        np.add.at(joint_transition,
                  (states, x, model.transition[states, x, u]), p_u)
        np.add.at(joint_reward, (states, x),
                  p_u * model.reward[states, x, u])

    behavior = model.behavior_policy()
    visited = behavior > 0
    with np.errstate(invalid='ignore', divide='ignore'):
        transition = np.where(visited[:, :, np.newaxis],
                              joint_transition / behavior[:, :, np.newaxis],
                              np.nan)
        reward = np.where(visited, joint_reward / behavior, np.nan)
    return NominalModel(transition=transition, reward=reward,
                        behavior=behavior,
                        visits=np.zeros((n_s, n_x), dtype=int),
                        reward_bounds=model.reward_bounds)
