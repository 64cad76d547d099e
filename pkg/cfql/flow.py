"""Flow-matching behavior cloning and the one-step policy"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.stats import wasserstein_distance

from .C import *  # noqa: F403
from .mlp import MlpParams, backward, forward, init_mlp

logger = logging.getLogger(__name__)
__all__ = ['FlowConfig', 'init_velocity_field', 'init_one_step_policy',
           'velocity', 'flow_matching_loss', 'euler_sample', 'policy_action',
           'policy_action_backward', 'distill_loss', 'sample_distance']


@dataclass(frozen=True)
class FlowConfig:
    """Flow sampler settings

    Attributes:
        steps: Euler steps ``M`` of the sampler.
        noise_dim: Dimension of the noise, equal to the action dimension.
        alpha: Distillation coefficient of the one-step policy.
    """
    steps: int = 10
    noise_dim: int = 1
    alpha: float = 10.0

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError(f"Need at least one Euler step, got "
                             f"{self.steps}.")
        if self.alpha < 0:
            raise ValueError(f"Distillation coefficient must be "
                             f"non-negative, got {self.alpha}.")


def init_velocity_field(
        obs_dim: int,
        action_dim: int,
        hidden: Sequence[int],
        rng: np.random.Generator
) -> MlpParams:
    """Velocity network ``(t, s, x_t) -> v`` with GELU activations"""
    return init_mlp([1 + obs_dim + action_dim, *hidden, action_dim],
                    VELOCITY_ACTIVATION, IDENTITY, rng)


def init_one_step_policy(
        obs_dim: int,
        action_dim: int,
        hidden: Sequence[int],
        rng: np.random.Generator
) -> MlpParams:
    """Policy network ``(s, z) -> x`` with tanh-squashed output"""
    return init_mlp([obs_dim + action_dim, *hidden, action_dim],
                    POLICY_ACTIVATION, POLICY_FINAL_ACTIVATION, rng)


def _velocity_inputs(t: np.ndarray, obs: np.ndarray,
                     x: np.ndarray) -> np.ndarray:
    t = np.broadcast_to(np.asarray(t, dtype=float), (len(x),))
    return np.column_stack([t, obs, x])


def velocity(v: MlpParams, t, obs: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Evaluate the velocity field at time(s) ``t``"""
    return forward(v, _velocity_inputs(t, obs, x))


def flow_matching_loss(
        v: MlpParams,
        obs: np.ndarray,
        actions: np.ndarray,
        rng: Optional[np.random.Generator] = None,
        x0: Optional[np.ndarray] = None,
        t: Optional[np.ndarray] = None
) -> Tuple[float, MlpParams]:
    """Conditional flow-matching regression loss

    Interpolates ``x_t = (1 - t) x0 + t x1`` between Gaussian noise ``x0``
    and dataset actions ``x1`` and regresses the velocity onto
    ``x1 - x0``.

    Arguments:
        v: Velocity field.
        obs: Observations ``(n, obs_dim)``.
        actions: Dataset actions ``(n, d)`` in ``[-1, 1]``.
        rng: Random generator for ``x0`` and ``t``.
        x0: Fixed noise, drawn from ``rng`` if not provided.
        t: Fixed times, drawn from ``rng`` if not provided.

    Returns:
        Mean squared error and its gradient with respect to ``v``.
    """
    x1 = np.asarray(actions, dtype=float)
    n = len(x1)
    if x0 is None:
        x0 = rng.standard_normal(x1.shape)
    if t is None:
        t = rng.random(n)
    t = np.asarray(t, dtype=float)
    x_t = (1.0 - t)[:, np.newaxis] * x0 + t[:, np.newaxis] * x1
    inputs = _velocity_inputs(t, obs, x_t)
    residual = forward(v, inputs) - (x1 - x0)
    loss = float(np.mean(np.sum(residual ** 2, axis=1)))
    grads, _ = backward(v, inputs, 2.0 * residual / n)
    return loss, grads


def euler_sample(
        v: MlpParams,
        obs: np.ndarray,
        z: np.ndarray,
        steps: int = 10
) -> np.ndarray:
    """Integrate the velocity field from noise with explicit Euler steps

    Evaluates the field at times ``0, 1/M, ..., (M - 1)/M`` with the
    pre-update state and clips the result to ``[-1, 1]``.

    Arguments:
        v: Velocity field.
        obs: Observations ``(n, obs_dim)``.
        z: Noise ``(n, d)``.
        steps: Number of steps ``M``.

    Returns:
        Actions ``(n, d)``.
    """
    if steps < 1:
        raise ValueError(f"Need at least one Euler step, got {steps}.")
    x = np.array(z, dtype=float)
    for k in range(steps):
        x = x + velocity(v, k / steps, obs, x) / steps
    return np.clip(x, -1.0, 1.0)


def policy_action(pi: MlpParams, obs: np.ndarray,
                  z: np.ndarray) -> np.ndarray:
    """One-step policy action ``pi(s, z)``"""
    return forward(pi, np.column_stack([obs, z]))


def policy_action_backward(
        pi: MlpParams,
        obs: np.ndarray,
        z: np.ndarray,
        upstream: np.ndarray
) -> MlpParams:
    """Policy parameter gradient for an upstream gradient on the actions"""
    grads, _ = backward(pi, np.column_stack([obs, z]), upstream)
    return grads


def distill_loss(
        pi: MlpParams,
        v: MlpParams,
        obs: np.ndarray,
        z: np.ndarray,
        steps: int = 10,
        target: Optional[np.ndarray] = None
) -> Tuple[float, MlpParams]:
    """Squared distance between one-step and flow actions on shared noise

    The flow sample is a constant target; gradients flow to ``pi`` only.

    Arguments:
        pi: One-step policy.
        v: Velocity field of the flow policy.
        obs: Observations.
        z: Noise shared by both policies.
        steps: Euler steps of the flow sampler.
        target: Precomputed flow actions for ``(obs, z)``.

    Returns:
        Mean squared distance and its gradient with respect to ``pi``.
    """
    if target is None:
        target = euler_sample(v, obs, z, steps)
    diff = policy_action(pi, obs, z) - target
    loss = float(np.mean(np.sum(diff ** 2, axis=1)))
    grads = policy_action_backward(pi, obs, z, 2.0 * diff / len(diff))
    return loss, grads


def sample_distance(
        v: MlpParams,
        obs: np.ndarray,
        actions: np.ndarray,
        rng: np.random.Generator,
        steps: int = 10
) -> float:
    """1-Wasserstein distance between flow samples and dataset actions

    Draws one Euler sample per observation and averages the distance of
    the per-dimension marginals.

    Arguments:
        v: Velocity field.
        obs: Observations ``(n, obs_dim)``.
        actions: Dataset actions ``(n, d)`` at ``obs``.
        rng: Random generator for the noise.
        steps: Euler steps of the sampler.
    """
    actions = np.asarray(actions, dtype=float)
    samples = euler_sample(v, obs, rng.standard_normal(actions.shape), steps)
    return float(np.mean([wasserstein_distance(samples[:, i], actions[:, i])
                          for i in range(actions.shape[1])]))
