"""Critic ensemble and confounding-robust Q combination"""

import logging
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .C import *  # noqa: F403
from .dataset import Batch
from .discriminator import Discriminator, factual_weight
from .flow import policy_action
from .mlp import MlpParams, backward, forward, init_mlp

logger = logging.getLogger(__name__)
__all__ = ['CriticEnsemble', 'init_critic_ensemble', 'critic_values',
           'critic_action_grad', 'critic_loss', 'polyak_update',
           'combine_robust_q', 'robust_q']


@dataclass(frozen=True)
class CriticEnsemble:
    """Q networks with Polyak-averaged target copies

    Attributes:
        members: Online networks ``(s, x) -> Q``.
        targets: Target networks, same architecture as ``members``.
        tau: Polyak rate.
    """
    members: Tuple[MlpParams, ...]
    targets: Tuple[MlpParams, ...]
    tau: float = 0.005

    def __post_init__(self):
        object.__setattr__(self, 'members', tuple(self.members))
        object.__setattr__(self, 'targets', tuple(self.targets))
        if len(self.members) < 2:
            raise ValueError(f"Critic ensemble needs at least 2 members, "
                             f"got {len(self.members)}.")
        if len(self.targets) != len(self.members):
            raise ValueError("Need one target network per member.")
        for i, (member, target) in enumerate(zip(self.members,
                                                 self.targets)):
            if member.layer_sizes != target.layer_sizes:
                raise ValueError(f"Critic {i}: target shape "
                                 f"{target.layer_sizes} differs from "
                                 f"{member.layer_sizes}.")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError(f"Polyak rate {self.tau} not in (0, 1].")

    @property
    def size(self) -> int:
        return len(self.members)

    def with_members(self, members: Sequence[MlpParams]) -> 'CriticEnsemble':
        return replace(self, members=tuple(members))


def init_critic_ensemble(
        obs_dim: int,
        action_dim: int,
        hidden: Sequence[int],
        n_members: int,
        rng: np.random.Generator,
        tau: float = 0.005,
        final_scale: float = 1e-2
) -> CriticEnsemble:
    """Independently initialized critics with near-zero output layer"""
    members = [init_mlp([obs_dim + action_dim, *hidden, 1],
                        CRITIC_ACTIVATION, IDENTITY, rng, final_scale)
               for _ in range(n_members)]
    return CriticEnsemble(members=members,
                          targets=[m.copy() for m in members], tau=tau)


def critic_values(
        networks: Sequence[MlpParams],
        obs: np.ndarray,
        actions: np.ndarray
) -> np.ndarray:
    """Q values of every network, shape ``(N, n)``"""
    inputs = np.column_stack([obs, actions])
    return np.stack([forward(q, inputs)[:, 0] for q in networks])


def critic_action_grad(
        networks: Sequence[MlpParams],
        obs: np.ndarray,
        actions: np.ndarray,
        upstream: np.ndarray
) -> np.ndarray:
    """Gradient of ``sum_i sum_j upstream[i, j] Q_i(s_j, x_j)`` by actions"""
    inputs = np.column_stack([obs, actions])
    obs_dim = inputs.shape[1] - np.shape(actions)[1]
    grad = np.zeros(np.shape(actions))
    for q, up in zip(networks, upstream):
        _, input_grad = backward(q, inputs, up[:, np.newaxis])
        grad += input_grad[:, obs_dim:]
    return grad


def critic_loss(
        ensemble: CriticEnsemble,
        batch: Batch,
        policy: MlpParams,
        gamma: float,
        rng: np.random.Generator
) -> Tuple[np.ndarray, List[MlpParams]]:
    """One-step Bellman regression of every member

    One noise draw per batch gives ``x' = pi(s', z)``, and all members
    regress onto the same constant target
    ``y + gamma (1 - done) mean_i Q_target_i(s', x')``.

    Arguments:
        ensemble: Critics.
        batch: Transitions.
        policy: One-step policy.
        gamma: Discount.
        rng: Random generator for the noise.

    Returns:
        Mean squared error per member and gradient per member.
    """
    losses, grads = [], []
    inputs = np.column_stack([batch.obs, batch.actions])
    n = len(batch)
    z = rng.standard_normal((n, policy.n_outputs))
    next_actions = policy_action(policy, batch.next_obs, z)
    next_q = critic_values(ensemble.targets, batch.next_obs,
                           next_actions).mean(axis=0)
    target = batch.rewards + gamma * (1.0 - batch.dones) * next_q
    for member in ensemble.members:
        residual = forward(member, inputs)[:, 0] - target
        losses.append(float(np.mean(residual ** 2)))
        grad, _ = backward(member, inputs,
                           (2.0 * residual / n)[:, np.newaxis])
        grads.append(grad)
    return np.array(losses), grads


def polyak_update(ensemble: CriticEnsemble,
                  tau: Optional[float] = None) -> CriticEnsemble:
    """``target <- (1 - tau) target + tau online``, element-wise"""
    tau = ensemble.tau if tau is None else tau
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"Polyak rate {tau} not in (0, 1].")
    if tau == 1.0:
        targets = [m.copy() for m in ensemble.members]
    else:
        targets = [
            target.with_tensors([(1.0 - tau) * t + tau * m for t, m in
                                 zip(target.tensors(), member.tensors())])
            for target, member in zip(ensemble.targets, ensemble.members)]
    return replace(ensemble, targets=tuple(targets))


def combine_robust_q(
        q_values: np.ndarray,
        weights: np.ndarray,
        worst_case: str = WORST_CASE_ENSEMBLE
) -> Tuple[np.ndarray, np.ndarray]:
    """Mix the ensemble mean and a worst-case value by factual weight

    ``robust = w mean_i Q_i + (1 - w) worst``, where ``worst`` is the
    ensemble minimum per input or, for ``worst_case='batch'``, the
    minimum of the ensemble mean over the whole batch.

    Arguments:
        q_values: ``(N, n)`` member values.
        weights: ``(n,)`` factual weights in ``[0, 1]``.
        worst_case: Worst-case surrogate.

    Returns:
        Robust values ``(n,)`` and the gradient of their sum with respect
        to ``q_values``.
    """
    q_values = np.atleast_2d(q_values)
    weights = np.broadcast_to(np.asarray(weights, dtype=float),
                              q_values.shape[1:])
    n_members, n = q_values.shape
    mean = q_values.mean(axis=0)
    grad = np.broadcast_to(weights / n_members, q_values.shape).copy()
    if worst_case == WORST_CASE_ENSEMBLE:
        argmin = np.argmin(q_values, axis=0)
        worst = q_values[argmin, np.arange(n)]
        grad[argmin, np.arange(n)] += 1.0 - weights
    elif worst_case == WORST_CASE_BATCH:
        j_min = int(np.argmin(mean))
        worst = np.full(n, mean[j_min])
        grad[:, j_min] += np.sum(1.0 - weights) / n_members
    else:
        raise ValueError(f"Unknown worst case '{worst_case}'. Must be one "
                         f"of {WORST_CASE_MODES}.")
    return weights * mean + (1.0 - weights) * worst, grad


def robust_q(
        ensemble: CriticEnsemble,
        d: Optional[Discriminator],
        obs: np.ndarray,
        actions: np.ndarray,
        worst_case: str = WORST_CASE_ENSEMBLE
) -> np.ndarray:
    """Confounding-robust value of ``(s, x)``

    ``D(s, x) mean_i Q_i(s, x) + (1 - D(s, x)) min_i Q_i(s, x)``. Without a
    discriminator the factual weight is 1 and the result is the ensemble
    mean.
    """
    q = critic_values(ensemble.members, obs, actions)
    weights = np.ones(q.shape[1]) if d is None else \
        factual_weight(d, obs, actions)
    value, _ = combine_robust_q(q, weights, worst_case)
    return value
