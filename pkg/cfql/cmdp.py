"""Confounded Markov decision processes and trajectory sampling"""

import abc
import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from . import ENV_NUM_THREADS
from .C import *  # noqa: F403
from .dataset import TransitionDataset
from .yaml import load_yaml

logger = logging.getLogger(__name__)
__all__ = ['TabularCmdp', 'ContinuousCmdpEnv', 'sample_trajectories',
           'true_policy_value', 'monte_carlo_policy_value',
           'sample_categorical', 'get_cmdp', 'write_cmdp',
           'check_policy_table']

#: Episode length used when sampling tabular CMDPs
DEFAULT_TABULAR_HORIZON = 100


def sample_categorical(
        rng: np.random.Generator, probabilities: np.ndarray) -> np.ndarray:
    """Draw one index per row of a row-stochastic matrix"""
    probabilities = np.atleast_2d(probabilities)
    cumulative = np.cumsum(probabilities, axis=1)
    draws = rng.random(probabilities.shape[0])
    index = (draws[:, np.newaxis] >= cumulative).sum(axis=1)
    return np.minimum(index, probabilities.shape[1] - 1)


@dataclass
class TabularCmdp:
    """Finite confounded MDP given by its structural mechanisms

    Each step draws fresh exogenous noise ``u ~ P(U)``; the behavior
    mechanism, transition mechanism and reward mechanism all read ``u``.

    Attributes:
        noise_probs: ``P(U)``, shape ``(n_noise,)``.
        behavior: Behavioral action ``f_X(s, u)``, shape
            ``(n_states, n_noise)``.
        transition: Next state ``f_S(s, x, u)``, shape
            ``(n_states, n_actions, n_noise)``.
        reward: Reward ``f_Y(s, x, u)``, shape
            ``(n_states, n_actions, n_noise)``.
        reward_bounds: Interval ``[a, b]`` containing every reward.
        initial: Initial state distribution.
        gamma: Discount factor in ``[0, 1)``.
    """
    noise_probs: np.ndarray
    behavior: np.ndarray
    transition: np.ndarray
    reward: np.ndarray
    reward_bounds: Tuple[float, float]
    initial: np.ndarray
    gamma: float

    def __post_init__(self):
        self.noise_probs = np.asarray(self.noise_probs, dtype=float)
        self.behavior = np.asarray(self.behavior, dtype=int)
        self.transition = np.asarray(self.transition, dtype=int)
        self.reward = np.asarray(self.reward, dtype=float)
        self.initial = np.asarray(self.initial, dtype=float)
        self.reward_bounds = (float(self.reward_bounds[0]),
                              float(self.reward_bounds[1]))
        self.gamma = float(self.gamma)
        self.check()

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def n_noise(self) -> int:
        return self.noise_probs.shape[0]

    def check(self) -> None:
        """Verify shapes, probabilities and mechanism ranges

        Raises:
            ValueError: on any violated invariant.
        """
        if self.transition.ndim != 3:
            raise ValueError("Transition mechanism must be indexed by "
                             "(state, action, noise).")
        n_s, n_x, n_u = self.transition.shape
        if self.reward.shape != (n_s, n_x, n_u):
            raise ValueError(f"Reward mechanism has shape "
                             f"{self.reward.shape}, expected "
                             f"{(n_s, n_x, n_u)}.")
        if self.behavior.shape != (n_s, n_u):
            raise ValueError(f"Behavior mechanism has shape "
                             f"{self.behavior.shape}, expected {(n_s, n_u)}.")
        if self.noise_probs.shape != (n_u,) or np.any(self.noise_probs < 0) \
                or abs(self.noise_probs.sum() - 1.0) > 1e-12:
            raise ValueError("Noise distribution must be a probability "
                             f"vector of length {n_u}.")
        if self.initial.shape != (n_s,) or np.any(self.initial < 0) \
                or abs(self.initial.sum() - 1.0) > 1e-12:
            raise ValueError("Initial distribution must be a probability "
                             f"vector of length {n_s}.")
        if np.any((self.behavior < 0) | (self.behavior >= n_x)):
            raise ValueError("Behavior mechanism produces invalid actions.")
        if np.any((self.transition < 0) | (self.transition >= n_s)):
            raise ValueError("Transition mechanism produces invalid states.")
        low, high = self.reward_bounds
        if low > high:
            raise ValueError(f"Invalid reward bounds {self.reward_bounds}.")
        if np.any(self.reward < low) or np.any(self.reward > high):
            raise ValueError(f"Rewards outside of bounds "
                             f"{self.reward_bounds}.")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"Discount {self.gamma} not in [0, 1).")

    def behavior_policy(self) -> np.ndarray:
        """Observational behavior ``mu(x|s) = sum_u P(u) [f_X(s, u) = x]``"""
        mu = np.zeros((self.n_states, self.n_actions))
        for u, p_u in enumerate(self.noise_probs):
            mu[np.arange(self.n_states), self.behavior[:, u]] += p_u
        return mu

    def interventional_transition(self) -> np.ndarray:
        """Transition probabilities under ``do(x)``, shape ``(S, X, S)``"""
        result = np.zeros((self.n_states, self.n_actions, self.n_states))
        s, x = np.meshgrid(np.arange(self.n_states),
                           np.arange(self.n_actions), indexing='ij')
        for u, p_u in enumerate(self.noise_probs):
            np.add.at(result, (s, x, self.transition[:, :, u]), p_u)
        return result

    def interventional_reward(self) -> np.ndarray:
        """Expected reward under ``do(x)``, shape ``(S, X)``"""
        return self.reward @ self.noise_probs

    def to_dict(self) -> Dict[str, Any]:
        return {
            N_STATES: self.n_states,
            N_ACTIONS: self.n_actions,
            'n_noise': self.n_noise,
            'noise_probs': self.noise_probs.tolist(),
            'behavior': self.behavior.tolist(),
            'transition': self.transition.tolist(),
            'reward': self.reward.tolist(),
            REWARD_BOUNDS: list(self.reward_bounds),
            'initial': self.initial.tolist(),
            'gamma': self.gamma,
        }

    @staticmethod
    def from_dict(data: Dict[str, Any]) -> 'TabularCmdp':
        try:
            return TabularCmdp(
                noise_probs=data['noise_probs'],
                behavior=data['behavior'],
                transition=data['transition'],
                reward=data['reward'],
                reward_bounds=data[REWARD_BOUNDS],
                initial=data['initial'],
                gamma=data['gamma'],
            )
        except KeyError as e:
            raise ValueError(f"CMDP description lacks field {e}.") from e


def get_cmdp(cmdp_file: Union[str, Path, Dict]) -> TabularCmdp:
    """Read a tabular CMDP from a JSON or YAML file

    Arguments:
        cmdp_file: File name or already parsed dictionary.
    """
    return TabularCmdp.from_dict(load_yaml(cmdp_file))


def write_cmdp(cmdp: TabularCmdp, filename: Union[str, Path]) -> None:
    """Write a tabular CMDP as JSON"""
    with open(filename, 'w') as f:
        json.dump(cmdp.to_dict(), f, indent=2)


class ContinuousCmdpEnv(abc.ABC):
    """Base class of confounded environments with continuous actions

    States are batched as rows; every method is vectorized over episodes.
    The confounder is drawn once per episode, read by the demonstrator and
    by the dynamics, and never part of the learner's observation.

    Attributes:
        env_id: Registry identifier.
        obs_dim: Observation dimension.
        action_dim: Action dimension; actions live in ``[-1, 1]^d``.
        horizon: Maximum episode length.
        reward_bounds: Interval ``[a, b]`` containing every reward.
        seed: Seed the instance was created with.
    """
    env_id: str = ''
    obs_dim: int = 0
    action_dim: int = 0
    horizon: int = 1
    reward_bounds: Tuple[float, float] = (0.0, 1.0)

    def __init__(self, seed: int = 0):
        self.seed = seed

    @abc.abstractmethod
    def sample_confounder(
            self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw hidden confounders for ``n`` episodes"""
        raise NotImplementedError

    @abc.abstractmethod
    def reset(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Initial states of ``n`` episodes"""
        raise NotImplementedError

    def observe(self, states: np.ndarray) -> np.ndarray:
        """Learner observation of the given states"""
        return np.array(states, dtype=float)

    @abc.abstractmethod
    def expert_action(
            self,
            states: np.ndarray,
            confounders: np.ndarray,
            rng: np.random.Generator
    ) -> np.ndarray:
        """Demonstrator actions, which may read the confounder"""
        raise NotImplementedError

    @abc.abstractmethod
    def transition(
            self,
            states: np.ndarray,
            actions: np.ndarray,
            confounders: np.ndarray
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Dynamics on clipped actions

        Returns:
            Next states, rewards, terminal flags and success flags.
        """
        raise NotImplementedError

    def step(
            self,
            states: np.ndarray,
            actions: np.ndarray,
            confounders: np.ndarray
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Clip actions to ``[-1, 1]^d`` and advance the dynamics"""
        actions = np.clip(np.asarray(actions, dtype=float), -1.0, 1.0)
        if actions.shape != (len(states), self.action_dim):
            raise ValueError(
                f"{self.env_id}: expected actions of shape "
                f"{(len(states), self.action_dim)}, got {actions.shape}.")
        return self.transition(states, actions, confounders)


def _sample_tabular_episode(model: TabularCmdp, seed: int, episode: int,
                            horizon: int):
    rng = np.random.default_rng([seed, episode])
    s = int(sample_categorical(rng, model.initial)[0])
    rows = []
    for _ in range(horizon):
        u = int(sample_categorical(rng, model.noise_probs)[0])
        x = int(model.behavior[s, u])
        y = float(model.reward[s, x, u])
        s_next = int(model.transition[s, x, u])
        rows.append(([s], [x], y, [s_next], 0.0))
        s = s_next
    return rows


def _sample_continuous_episode(env: ContinuousCmdpEnv, seed: int,
                               episode: int, horizon: int):
    rng = np.random.default_rng([seed, episode])
    confounders = env.sample_confounder(rng, 1)
    states = env.reset(rng, 1)
    rows = []
    for _ in range(horizon):
        actions = np.clip(env.expert_action(states, confounders, rng),
                          -1.0, 1.0)
        next_states, rewards, dones, _ = env.step(
            states, actions, confounders)
        rows.append((env.observe(states)[0], actions[0], float(rewards[0]),
                     env.observe(next_states)[0], float(dones[0])))
        states = next_states
        if dones[0]:
            break
    return rows


def sample_trajectories(
        model: Union[TabularCmdp, ContinuousCmdpEnv],
        episodes: int,
        seed: int,
        horizon: Optional[int] = None
) -> TransitionDataset:
    """Roll out the behavioral policy and record the learner-visible data

    Every episode uses its own random stream derived from
    ``(seed, episode)``, so the result does not depend on the number of
    worker threads (see :py:data:`cfql.ENV_NUM_THREADS`). Exogenous noise
    and confounders are never recorded.

    Arguments:
        model: Tabular CMDP or continuous environment.
        episodes: Number of episodes.
        seed: Base seed.
        horizon: Episode length. Defaults to the environment horizon, or
            :py:data:`DEFAULT_TABULAR_HORIZON` for tabular CMDPs.

    Returns:
        The offline dataset. Tabular states and actions are stored as
        one-dimensional integer-valued vectors.
    """
    if episodes < 1:
        raise ValueError(f"Need at least one episode, got {episodes}.")

    metadata = {SEED: int(seed),
                REWARD_BOUNDS: list(model.reward_bounds)}
    if isinstance(model, TabularCmdp):
        horizon = horizon or DEFAULT_TABULAR_HORIZON
        metadata.update({ENV_ID: 'tabular', N_STATES: model.n_states,
                         N_ACTIONS: model.n_actions})

        def run(episode):
            return _sample_tabular_episode(model, seed, episode, horizon)
    else:
        horizon = horizon or model.horizon
        metadata[ENV_ID] = model.env_id

        def run(episode):
            return _sample_continuous_episode(model, seed, episode, horizon)

    num_threads = int(os.environ.get(ENV_NUM_THREADS, 1))
    if num_threads == 1:
        per_episode = list(map(run, range(episodes)))
    else:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=num_threads) as executor:
            per_episode = list(executor.map(run, range(episodes)))

    rows = [row for rows in per_episode for row in rows]
    episode_index = np.concatenate(
        [np.full(len(rows), i) for i, rows in enumerate(per_episode)])
    obs, actions, rewards, next_obs, dones = zip(*rows)
    dataset = TransitionDataset(
        observations=np.array(obs, dtype=float),
        actions=np.array(actions, dtype=float),
        rewards=np.array(rewards, dtype=float),
        next_observations=np.array(next_obs, dtype=float),
        dones=np.array(dones, dtype=float),
        episodes=episode_index.astype(int),
        metadata=metadata,
    )
    logger.debug(f"Sampled {len(dataset)} transitions in {episodes} "
                 "episodes.")
    return dataset


def check_policy_table(policy: np.ndarray, n_states: int,
                       n_actions: int) -> np.ndarray:
    """Validate a row-stochastic policy table

    Raises:
        ValueError: if the table has the wrong shape or rows that are not
            probability vectors.
    """
    policy = np.asarray(policy, dtype=float)
    if policy.shape != (n_states, n_actions):
        raise ValueError(f"Policy table has shape {policy.shape}, expected "
                         f"{(n_states, n_actions)}.")
    if np.any(policy < 0) or np.any(np.abs(policy.sum(axis=1) - 1) > 1e-9):
        raise ValueError("Policy rows must be probability vectors.")
    return policy


def true_policy_value(model: TabularCmdp, policy: np.ndarray) -> np.ndarray:
    """Exact value of ``do(policy)`` from the interventional model

    Arguments:
        model: Ground-truth CMDP.
        policy: Row-stochastic ``(S, X)`` policy table.

    Returns:
        Value per state.

    Raises:
        ValueError: on an invalid policy table.
        FloatingPointError: if the Bellman system is singular.
    """
    policy = check_policy_table(policy, model.n_states, model.n_actions)
    p_pi = np.einsum('sx,sxt->st', policy,
                     model.interventional_transition())
    r_pi = np.sum(policy * model.interventional_reward(), axis=1)
    try:
        return np.linalg.solve(np.eye(model.n_states) - model.gamma * p_pi,
                               r_pi)
    except np.linalg.LinAlgError as e:
        raise FloatingPointError(
            f"Singular policy evaluation system: {e}") from e


def monte_carlo_policy_value(
        model: TabularCmdp,
        policy: np.ndarray,
        episodes: int,
        seed: int,
        start_state: Optional[int] = None,
        horizon: Optional[int] = None
) -> Tuple[float, float]:
    """Monte-Carlo estimate of the discounted return of ``do(policy)``

    Arguments:
        model: Ground-truth CMDP.
        policy: Row-stochastic ``(S, X)`` policy table.
        episodes: Number of simulated episodes.
        seed: Seed.
        start_state: Fixed start state. Drawn from the initial
            distribution if not provided.
        horizon: Truncation. Defaults to where ``gamma^t < 1e-12``.

    Returns:
        Mean discounted return and its standard error.
    """
    policy = check_policy_table(policy, model.n_states, model.n_actions)
    rng = np.random.default_rng(seed)
    if horizon is None:
        horizon = 1 if model.gamma == 0 else \
            int(np.ceil(np.log(1e-12) / np.log(model.gamma)))
    if start_state is None:
        states = sample_categorical(
            rng, np.tile(model.initial, (episodes, 1)))
    else:
        states = np.full(episodes, start_state)
    noise = np.tile(model.noise_probs, (episodes, 1))
    returns = np.zeros(episodes)
    discount = 1.0
    for _ in range(horizon):
        actions = sample_categorical(rng, policy[states])
        u = sample_categorical(rng, noise)
        returns += discount * model.reward[states, actions, u]
        states = model.transition[states, actions, u]
        discount *= model.gamma
    return float(returns.mean()), float(returns.std(ddof=1)
                                        / np.sqrt(episodes))
