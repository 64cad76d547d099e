"""Benchmark environments with hidden confounders"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .C import *  # noqa: F403
from .cmdp import ContinuousCmdpEnv, TabularCmdp

logger = logging.getLogger(__name__)
__all__ = ['EnvSpec', 'ConfoundedBanditEnv', 'TwoGoalReacherEnv',
           'confounded_chain', 'random_cmdp', 'make_env', 'get_env_spec',
           'list_envs', 'rollout', 'expert_actor', 'random_actor',
           'ENV_REGISTRY']

#: ``actor(observations, states, confounders, rng) -> actions``
Actor = Callable[[np.ndarray, np.ndarray, np.ndarray, np.random.Generator],
                 np.ndarray]


class ConfoundedBanditEnv(ContinuousCmdpEnv):
    """One-step bandit whose paying arm region is chosen by a hidden sign

    The confounder ``u`` is ``+1`` with probability 0.3 and ``-1``
    otherwise. The reward is a Gaussian bump around ``0.8 u``, scaled by
    1 for ``u = +1`` and 0.7 for ``u = -1``. The demonstrator sees ``u``
    and plays ``0.8 u`` plus jitter, so the observed reward of the right
    arm is high although its interventional value is low.
    """
    env_id = CONFOUNDED_BANDIT
    obs_dim = 1
    action_dim = 1
    horizon = 1
    reward_bounds = (0.0, 1.0)

    #: Probability of ``u = +1``
    p_positive = 0.3
    #: Center of the paying region, times ``u``
    arm = 0.8
    #: Squared width of the reward bump
    width = 0.08
    #: Reward scale for ``u = +1`` and ``u = -1``
    scales = (1.0, 0.7)
    #: Demonstrator jitter
    expert_noise = 0.1

    def sample_confounder(self, rng, n):
        return np.where(rng.random(n) < self.p_positive, 1.0, -1.0)

    def reset(self, rng, n):
        return np.zeros((n, 1))

    def expert_action(self, states, confounders, rng):
        noise = self.expert_noise * rng.standard_normal(len(states))
        return np.clip(self.arm * confounders + noise, -1.0, 1.0)[:, None]

    def bump(self, actions: np.ndarray, confounders: np.ndarray) -> np.ndarray:
        return np.exp(-(actions - self.arm * confounders) ** 2 / self.width)

    def mean_reward(self, actions: np.ndarray,
                    confounders: np.ndarray) -> np.ndarray:
        scale = np.where(confounders > 0, self.scales[0], self.scales[1])
        return scale * self.bump(actions, confounders)

    def transition(self, states, actions, confounders):
        x = actions[:, 0]
        bump = self.bump(x, confounders)
        rewards = self.mean_reward(x, confounders)
        n = len(states)
        return states.copy(), rewards, np.ones(n, dtype=bool), bump >= 0.5

    def discretize(self, arms: Sequence[float] = (-0.8, 0.0, 0.8)
                   ) -> TabularCmdp:
        """Single-state tabular version with the given arms

        Noise index 0 is ``u = -1``, index 1 is ``u = +1``. The
        demonstrator plays the arm closest to ``0.8 u``.
        """
        arms = np.asarray(arms, dtype=float)
        confounders = np.array([-1.0, 1.0])
        behavior = [int(np.argmin(np.abs(arms - self.arm * u)))
                    for u in confounders]
        reward = self.mean_reward(arms[:, None], confounders[None, :])
        return TabularCmdp(
            noise_probs=[1.0 - self.p_positive, self.p_positive],
            behavior=[behavior],
            transition=np.zeros((1, len(arms), 2), dtype=int),
            reward=reward[np.newaxis, :, :],
            reward_bounds=self.reward_bounds,
            initial=[1.0],
            gamma=0.0,
        )


class TwoGoalReacherEnv(ContinuousCmdpEnv):
    """2-D point mass, hidden confounder selects one of two goals

    Goals are at ``(0.7 u, 0)`` with ``u = +-1`` equally likely. The
    position moves by ``0.1 * action`` per step. Episodes end on reaching
    the selected goal (distance below 0.15) with reward 0; every other
    step costs -1. The horizon is too short to visit both goals.
    """
    env_id = TWO_GOAL_REACHER
    obs_dim = 2
    action_dim = 2
    horizon = 12
    reward_bounds = (-1.0, 0.0)

    goal_x = 0.7
    step_size = 0.1
    goal_radius = 0.15
    expert_gain = 10.0
    expert_noise = 0.1
    start_jitter = 0.05

    def sample_confounder(self, rng, n):
        return np.where(rng.random(n) < 0.5, 1.0, -1.0)

    def reset(self, rng, n):
        return rng.uniform(-self.start_jitter, self.start_jitter, (n, 2))

    def goals(self, confounders: np.ndarray) -> np.ndarray:
        return np.column_stack([self.goal_x * confounders,
                                np.zeros(len(confounders))])

    def expert_action(self, states, confounders, rng):
        direction = self.expert_gain * (self.goals(confounders) - states)
        noise = self.expert_noise * rng.standard_normal(states.shape)
        return np.clip(direction + noise, -1.0, 1.0)

    def transition(self, states, actions, confounders):
        next_states = np.clip(states + self.step_size * actions, -1.0, 1.0)
        distance = np.linalg.norm(next_states - self.goals(confounders),
                                  axis=1)
        success = distance < self.goal_radius
        rewards = np.where(success, 0.0, -1.0)
        return next_states, rewards, success, success


def confounded_chain() -> TabularCmdp:
    """Four-state chain where the demonstrator's action matches the noise

    ``u ~ (0.4, 0.6)``, the demonstrator plays ``x = u``. Matching the
    noise moves one state up, otherwise one state down; reward 1 for a
    match in the top state. Observationally every action moves up, so the
    nominal transition differs from the interventional one.
    """
    n_s, n_x, n_u = 4, 2, 2
    transition = np.zeros((n_s, n_x, n_u), dtype=int)
    reward = np.zeros((n_s, n_x, n_u))
    for s in range(n_s):
        for x in range(n_x):
            for u in range(n_u):
                match = x == u
                transition[s, x, u] = min(s + 1, n_s - 1) if match \
                    else max(s - 1, 0)
                reward[s, x, u] = float(match and s == n_s - 1)
    return TabularCmdp(
        noise_probs=[0.4, 0.6],
        behavior=np.tile(np.arange(n_u), (n_s, 1)),
        transition=transition,
        reward=reward,
        reward_bounds=(0.0, 1.0),
        initial=[1.0, 0.0, 0.0, 0.0],
        gamma=0.9,
    )


def random_cmdp(
        sizes: Tuple[int, int, int],
        seed: int,
        reward_bounds: Tuple[float, float] = (0.0, 1.0),
        gamma: float = 0.9
) -> TabularCmdp:
    """Random tabular CMDP for property tests

    Mechanisms are uniformly random deterministic function tables,
    ``P(U)`` is Dirichlet(1), rewards are uniform in ``reward_bounds`` and
    the initial distribution is uniform.

    Arguments:
        sizes: ``(n_states, n_actions, n_noise)``, each at least 1.
        seed: Seed.
        reward_bounds: Reward interval.
        gamma: Discount.
    """
    n_s, n_x, n_u = (int(n) for n in sizes)
    if min(n_s, n_x, n_u) < 1:
        raise ValueError(f"All sizes must be positive, got {sizes}.")
    rng = np.random.default_rng(seed)
    noise_probs = rng.dirichlet(np.ones(n_u))
    noise_probs /= noise_probs.sum()
    low, high = reward_bounds
    return TabularCmdp(
        noise_probs=noise_probs,
        behavior=rng.integers(n_x, size=(n_s, n_u)),
        transition=rng.integers(n_s, size=(n_s, n_x, n_u)),
        reward=rng.uniform(low, high, size=(n_s, n_x, n_u)),
        reward_bounds=reward_bounds,
        initial=np.full(n_s, 1.0 / n_s),
        gamma=gamma,
    )


@dataclass(frozen=True)
class EnvSpec:
    """Registry entry of a benchmark environment

    Attributes:
        env_id: Identifier.
        kind: ``continuous`` or ``tabular``.
        obs_dim: Observation dimension (1 for tabular state indices).
        action_dim: Action dimension (1 for tabular action indices).
        horizon: Episode length.
        reward_bounds: Reward interval.
        confounder: What the hidden confounder does.
        expert: What the demonstrator does.
        success: Success predicate.
        default_episodes: Default dataset size in episodes.
        random_success_max: Floor witness, random actions succeed less
            often than this.
        expert_success_min: Ceiling witness, the demonstrator succeeds at
            least this often.
        factory: Builds the instance from a seed.
    """
    env_id: str
    kind: str
    obs_dim: int
    action_dim: int
    horizon: int
    reward_bounds: Tuple[float, float]
    confounder: str
    expert: str
    success: str
    default_episodes: int
    random_success_max: float
    expert_success_min: float
    factory: Callable[[int], Union[ContinuousCmdpEnv, TabularCmdp]]


ENV_REGISTRY: Dict[str, EnvSpec] = {
    CONFOUNDED_BANDIT: EnvSpec(
        env_id=CONFOUNDED_BANDIT, kind='continuous', obs_dim=1,
        action_dim=1, horizon=1, reward_bounds=(0.0, 1.0),
        confounder='sign u, P(u=+1)=0.3, selects the paying arm region',
        expert='plays 0.8 u with Gaussian jitter 0.1',
        success='reward bump at the action is at least 0.5',
        default_episodes=2000, random_success_max=0.35,
        expert_success_min=0.95, factory=ConfoundedBanditEnv),
    TWO_GOAL_REACHER: EnvSpec(
        env_id=TWO_GOAL_REACHER, kind='continuous', obs_dim=2,
        action_dim=2, horizon=12, reward_bounds=(-1.0, 0.0),
        confounder='sign u, equally likely, selects goal (0.7 u, 0)',
        expert='moves toward its goal with Gaussian jitter 0.1',
        success='distance to the selected goal below 0.15',
        default_episodes=500, random_success_max=0.1,
        expert_success_min=0.95, factory=TwoGoalReacherEnv),
    TABULAR_CHAIN: EnvSpec(
        env_id=TABULAR_CHAIN, kind='tabular', obs_dim=1, action_dim=1,
        horizon=100, reward_bounds=(0.0, 1.0),
        confounder='u ~ (0.4, 0.6) decides which action moves up',
        expert='plays x = u and always moves up',
        success='reward collected in the top state',
        default_episodes=100, random_success_max=1.0,
        expert_success_min=0.0, factory=lambda seed: confounded_chain()),
}


def get_env_spec(env_id: str) -> EnvSpec:
    """Registry entry of ``env_id``

    Raises:
        ValueError: for unknown ids.
    """
    try:
        return ENV_REGISTRY[env_id]
    except KeyError:
        raise ValueError(f"Unknown environment '{env_id}'. Known: "
                         f"{sorted(ENV_REGISTRY)}.") from None


def make_env(env_id: str,
             seed: int = 0) -> Union[ContinuousCmdpEnv, TabularCmdp]:
    """Instantiate a registered environment

    Same ``(env_id, seed)`` yields identical instances.

    Raises:
        ValueError: for unknown ids.
    """
    return get_env_spec(env_id).factory(seed)


def list_envs() -> pd.DataFrame:
    """Registry as a table, one row per environment"""
    rows = []
    for spec in ENV_REGISTRY.values():
        rows.append({
            ENV_ID: spec.env_id, 'kind': spec.kind, OBS_DIM: spec.obs_dim,
            ACTION_DIM: spec.action_dim, 'horizon': spec.horizon,
            REWARD_BOUNDS: f"[{spec.reward_bounds[0]}, "
                           f"{spec.reward_bounds[1]}]",
            'confounder': spec.confounder, 'expert': spec.expert,
            'success': spec.success,
            'default_episodes': spec.default_episodes,
            'random_success_max': spec.random_success_max,
            'expert_success_min': spec.expert_success_min,
        })
    return pd.DataFrame(rows)


def expert_actor(env: ContinuousCmdpEnv) -> Actor:
    """Demonstrator with access to the confounder"""
    def act(obs, states, confounders, rng):
        return env.expert_action(states, confounders, rng)
    return act


def random_actor(env: ContinuousCmdpEnv) -> Actor:
    """Uniformly random actions"""
    def act(obs, states, confounders, rng):
        return rng.uniform(-1.0, 1.0, (len(obs), env.action_dim))
    return act


def rollout(
        env: ContinuousCmdpEnv,
        actor: Actor,
        episodes: int,
        seed: int
) -> Tuple[np.ndarray, np.ndarray]:
    """Run ``episodes`` episodes side by side

    Arguments:
        env: Environment.
        actor: Action callable.
        episodes: Number of episodes.
        seed: Seed of confounders, starts and actor noise.

    Returns:
        Success flag and undiscounted return per episode.

    Raises:
        ValueError: if ``episodes < 1``.
    """
    if episodes < 1:
        raise ValueError(f"Need at least one evaluation episode, got "
                         f"{episodes}.")
    rng = np.random.default_rng(seed)
    confounders = env.sample_confounder(rng, episodes)
    states = env.reset(rng, episodes)
    active = np.ones(episodes, dtype=bool)
    success = np.zeros(episodes, dtype=bool)
    returns = np.zeros(episodes)
    for _ in range(env.horizon):
        actions = actor(env.observe(states), states, confounders, rng)
        next_states, rewards, dones, reached = env.step(
            states, actions, confounders)
        returns += np.where(active, rewards, 0.0)
        success |= active & reached
        states = np.where(active[:, np.newaxis], next_states, states)
        active &= ~np.asarray(dones, dtype=bool)
        if not active.any():
            break
    return success, returns
