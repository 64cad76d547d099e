"""Offline and online training of the (causal) flow Q-learning agent

One gradient step runs four update blocks in a fixed order: critic
ensemble, behavior-cloning flow, discriminator and one-step policy.
``mode='fql'`` pins the factual weight to 1 and skips the discriminator,
``mode='bc'`` runs the flow block only.
"""

import logging
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import (Any, Dict, Iterable, List, NamedTuple, Optional, Tuple,
                    Union)

import numpy as np
import pandas as pd

from . import yaml
from .bundle import NetworkBundle, init_bundle, params_checksum, save_bundle
from .C import *  # noqa: F403
from .cmdp import ContinuousCmdpEnv, sample_trajectories, true_policy_value
from .critic import (CriticEnsemble, combine_robust_q, critic_action_grad,
                     critic_loss, critic_values, polyak_update)
from .dataset import (Batch, ReplayBuffer, TransitionDataset, concat_batches,
                      sample_balanced_batch)
from .discriminator import Discriminator, discriminator_loss, factual_weight
from .envs import ENV_REGISTRY, make_env, rollout
from .flow import (euler_sample, flow_matching_loss, policy_action,
                   policy_action_backward)
from .format_version import __format_version__
from .mlp import MlpParams
from .optim import apply_adam

logger = logging.getLogger(__name__)
__all__ = ['TrainConfig', 'RunMetrics', 'TrainRngs', 'make_rngs',
           'policy_loss', 'train_step', 'train_offline', 'train_online',
           'evaluate', 'check_dataset_dims', 'arm_values',
           'confounding_witness', 'DEFAULT_LEARNING_RATES',
           'DEFAULT_HIDDEN_SIZES', 'DEFAULT_ONLINE', 'WITNESS_CONFIG']

#: Learning rate per component
DEFAULT_LEARNING_RATES = {component: 3e-4 for component in CONFIG_COMPONENTS}

#: Hidden layer extents per component
DEFAULT_HIDDEN_SIZES = {component: [64, 64]
                        for component in CONFIG_COMPONENTS}

#: Fine-tuning settings
DEFAULT_ONLINE = {
    'steps': 0,
    'objective': ONLINE_FQL,
    'buffer_size': 100_000,
    'updates_per_step': 1,
}

#: Training setup of :func:`confounding_witness`
WITNESS_CONFIG = {
    'env': CONFOUNDED_BANDIT,
    'gamma': 0.0,
    'batch_size': 256,
    'gradient_steps': 3000,
    'eval_episodes': 100,
    'log_interval': 100,
    'learning_rates': {component: 3e-3 for component in CONFIG_COMPONENTS},
    'hidden_sizes': {component: [64, 64] for component in CONFIG_COMPONENTS},
}

#: Networks each update block may modify
_BLOCK_OUTPUTS = {
    CRITIC: (CRITIC, TARGET),
    VELOCITY: (VELOCITY,),
    DISCRIMINATOR: (DISCRIMINATOR,),
    POLICY: (POLICY,),
}

#: Lower bound of the Q-term normalizer denominator
_MIN_Q_SCALE = 1e-6


@dataclass
class TrainConfig:
    """Every hyperparameter of a training run

    Values not given fall back to the desk-scale defaults below. Partial
    ``learning_rates``, ``hidden_sizes`` and ``online`` sections are merged
    over :py:data:`DEFAULT_LEARNING_RATES`, :py:data:`DEFAULT_HIDDEN_SIZES`
    and :py:data:`DEFAULT_ONLINE`.

    Attributes:
        mode: ``cfql``, ``fql`` or ``bc``.
        env: Registered environment id for data and evaluation.
        dataset: Dataset file. Generated from ``env`` if not given.
        dataset_episodes: Episodes of a generated dataset. Defaults to the
            environment's default size.
        seed: Seed of everything random in the run.
        gamma: Discount.
        alpha: Distillation coefficient of the one-step policy.
        disc_coef: Discriminator loss coefficient.
        disc_decay: Exponential decay rate of ``disc_coef`` per step.
        num_critics: Ensemble size.
        flow_steps: Euler steps of the flow sampler.
        batch_size: Transitions per gradient step.
        gradient_steps: Offline gradient steps.
        tau: Polyak rate of the target critics.
        normalize_q_loss: Divide the policy's Q term by its mean magnitude.
        worst_case: Worst-case surrogate, ``ensemble`` or ``batch``.
        eval_interval: Steps between evaluations, 0 evaluates once at the
            end.
        eval_episodes: Episodes per evaluation.
        log_interval: Steps between recorded loss rows.
        checkpoint_interval: Steps between checkpoints, 0 disables.
        check_isolation: Verify after every update block that no other
            component's parameters changed.
        learning_rates: Learning rate per component.
        hidden_sizes: Hidden layer extents per component.
        online: Fine-tuning settings (``steps``, ``objective``,
            ``buffer_size``, ``updates_per_step``).
    """
    mode: str = MODE_CFQL
    env: str = TWO_GOAL_REACHER
    dataset: Optional[str] = None
    dataset_episodes: Optional[int] = None
    seed: int = 0
    gamma: float = 0.99
    alpha: float = 10.0
    disc_coef: float = 10.0
    disc_decay: float = 0.0
    num_critics: int = 2
    flow_steps: int = 10
    batch_size: int = 256
    gradient_steps: int = 1000
    tau: float = 0.005
    normalize_q_loss: bool = False
    worst_case: str = WORST_CASE_ENSEMBLE
    eval_interval: int = 0
    eval_episodes: int = 50
    log_interval: int = 1
    checkpoint_interval: int = 0
    check_isolation: bool = False
    learning_rates: Dict[str, float] = field(default_factory=dict)
    hidden_sizes: Dict[str, List[int]] = field(default_factory=dict)
    online: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.learning_rates = {**DEFAULT_LEARNING_RATES,
                               **self.learning_rates}
        self.hidden_sizes = {key: list(value) for key, value in
                             {**DEFAULT_HIDDEN_SIZES,
                              **self.hidden_sizes}.items()}
        self.online = {**DEFAULT_ONLINE, **self.online}

        if self.mode not in MODES:
            raise ValueError(f"Unknown mode '{self.mode}'. Must be one of "
                             f"{MODES}.")
        if self.worst_case not in WORST_CASE_MODES:
            raise ValueError(f"Unknown worst case '{self.worst_case}'. Must "
                             f"be one of {WORST_CASE_MODES}.")
        if self.online['objective'] not in ONLINE_OBJECTIVES:
            raise ValueError(
                f"Unknown online objective '{self.online['objective']}'. "
                f"Must be one of {ONLINE_OBJECTIVES}.")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"Discount gamma={self.gamma} not in [0, 1).")
        for name, minimum in (('num_critics', 2), ('flow_steps', 1),
                              ('batch_size', 1), ('log_interval', 1),
                              ('eval_episodes', 1)):
            if getattr(self, name) < minimum:
                raise ValueError(f"Config field '{name}' must be at least "
                                 f"{minimum}, got {getattr(self, name)}.")
        for name in ('alpha', 'disc_coef', 'disc_decay', 'gradient_steps',
                     'eval_interval', 'checkpoint_interval'):
            if getattr(self, name) < 0:
                raise ValueError(f"Config field '{name}' must be "
                                 f"non-negative, got {getattr(self, name)}.")

    @staticmethod
    def from_yaml(config: Union[str, Path, Dict],
                  base_path: Union[None, str, Path] = None) -> 'TrainConfig':
        """Load and validate a YAML (or JSON) config

        Arguments:
            config: File name or parsed dictionary.
            base_path: Directory relative dataset paths are resolved
                against. Defaults to the directory of the config file.

        Raises:
            FileNotFoundError: if the config file does not exist.
            jsonschema.exceptions.ValidationError: on invalid content.
        """
        if base_path is None and not isinstance(config, dict):
            base_path = Path(config).parent
        data = yaml.load_yaml(config)
        if data is None:
            data = {}
        yaml.validate_config(data)
        data = {key: value for key, value in data.items()
                if key != FORMAT_VERSION}
        if data.get('dataset') is not None and base_path is not None:
            data['dataset'] = str(Path(base_path, data['dataset']).resolve())
        return TrainConfig(**data)

    def to_dict(self) -> Dict[str, Any]:
        """Resolved snapshot, valid against the config schema"""
        result = {FORMAT_VERSION: __format_version__}
        result.update({key: value for key, value in asdict(self).items()
                       if value is not None})
        return result

    def replace(self, **changes) -> 'TrainConfig':
        return TrainConfig(**{**asdict(self), **changes})


class RunMetrics:
    """Loss and evaluation history of a run

    Each row carries the gradient step and the phase (``offline``,
    ``online`` or ``eval``) followed by scalar values.
    """

    def __init__(self, rows: Optional[Iterable[Dict[str, Any]]] = None):
        self.rows: List[Dict[str, Any]] = list(rows or [])

    def __len__(self) -> int:
        return len(self.rows)

    def record(self, step: int, phase: str, values: Dict[str, float]) -> None:
        """Append a row

        Raises:
            FloatingPointError: if any value is not finite.
        """
        for name, value in values.items():
            if not np.isfinite(value):
                raise FloatingPointError(
                    f"Non-finite {name} ({value}) at step {step}.")
        self.rows.append({STEP: step, PHASE: phase,
                          **{name: float(value)
                             for name, value in values.items()}})

    def extend(self, other: 'RunMetrics') -> None:
        self.rows.extend(other.rows)

    def evaluations(self) -> pd.DataFrame:
        """Evaluation rows only"""
        df = self.to_df()
        return df[df[PHASE] == PHASE_EVAL].dropna(axis=1, how='all') \
            .reset_index(drop=True)

    def to_df(self) -> pd.DataFrame:
        if not self.rows:
            return pd.DataFrame(columns=[STEP, PHASE])
        df = pd.DataFrame(self.rows)
        return df[[STEP, PHASE]
                  + [c for c in df.columns if c not in (STEP, PHASE)]]

    def write_csv(self, filename: Union[str, Path]) -> None:
        self.to_df().to_csv(filename, index=False)


class TrainRngs(NamedTuple):
    """Independent random streams of a training phase"""
    init: np.random.Generator
    sample: np.random.Generator
    critic: np.random.Generator
    flow: np.random.Generator
    discriminator: np.random.Generator
    policy: np.random.Generator
    environment: np.random.Generator
    evaluation: np.random.Generator


def make_rngs(seed: int, stream: int = 0) -> TrainRngs:
    """Random streams derived from ``(seed, stream)``

    Each component owns its stream, so skipping the discriminator block
    leaves the draws of every other block unchanged.
    """
    children = np.random.SeedSequence([seed, stream]).spawn(
        len(TrainRngs._fields))
    return TrainRngs(*(np.random.default_rng(child) for child in children))


def policy_loss(
        pi: MlpParams,
        critics: CriticEnsemble,
        d: Optional[Discriminator],
        v: MlpParams,
        obs: np.ndarray,
        alpha: float,
        rng: np.random.Generator,
        flow_steps: int = 10,
        worst_case: str = WORST_CASE_ENSEMBLE,
        normalize_q_loss: bool = False,
        pessimistic: Optional[np.ndarray] = None,
        z: Optional[np.ndarray] = None
) -> Tuple[float, MlpParams, Dict[str, float]]:
    """Robust Q maximization with distillation towards the flow policy

    ``-E[Q*(s, pi(s, z))] + alpha E[|pi(s, z) - mu(s, z)|^2]`` with the same
    noise ``z`` for both terms. Critics, discriminator and flow policy are
    constants.

    Arguments:
        pi: One-step policy.
        critics: Critic ensemble.
        d: Discriminator. ``None`` pins the factual weight to 1.
        v: Velocity field of the flow policy.
        obs: Observations.
        alpha: Distillation coefficient.
        rng: Random generator for ``z``.
        flow_steps: Euler steps of the flow sampler.
        worst_case: Worst-case surrogate of the robust value.
        normalize_q_loss: Divide the Q term by the mean absolute robust
            value.
        pessimistic: Rows whose factual weight comes from ``d``; the
            others use weight 1. Defaults to all rows.
        z: Fixed noise, drawn from ``rng`` if not provided.

    Returns:
        Loss, its gradient with respect to ``pi`` and statistics.
    """
    n = len(obs)
    if z is None:
        z = rng.standard_normal((n, pi.n_outputs))
    actions = policy_action(pi, obs, z)
    q_values = critic_values(critics.members, obs, actions)
    weights = np.ones(n)
    if d is not None:
        weights = factual_weight(d, obs, actions)
        if pessimistic is not None:
            weights = np.where(pessimistic, weights, 1.0)
    robust, robust_grad = combine_robust_q(q_values, weights, worst_case)
    scale = 1.0
    if normalize_q_loss:
        scale = 1.0 / max(float(np.mean(np.abs(robust))), _MIN_Q_SCALE)
    q_loss = -scale * float(np.mean(robust))

    target = euler_sample(v, obs, z, flow_steps)
    diff = actions - target
    distill = float(np.mean(np.sum(diff ** 2, axis=1)))

    upstream = -scale / n * critic_action_grad(critics.members, obs,
                                               actions, robust_grad)
    upstream = upstream + alpha * 2.0 * diff / n
    grads = policy_action_backward(pi, obs, z, upstream)
    stats = {
        POLICY_LOSS: q_loss + alpha * distill,
        DISTILL_LOSS: distill,
        ROBUST_Q: float(np.mean(robust)),
    }
    return q_loss + alpha * distill, grads, stats


@contextmanager
def _component(name: str, step: int):
    try:
        yield
    except FloatingPointError as e:
        raise FloatingPointError(f"{name} update at step {step}: {e}") \
            from e


def _check_finite(value: float) -> None:
    if not np.isfinite(value):
        raise FloatingPointError(f"non-finite loss {value}.")


def _check_isolation(before: NetworkBundle, after: NetworkBundle,
                     block: str, step: int) -> None:
    allowed = _BLOCK_OUTPUTS[block]
    after_networks = after.networks()
    for name, params in before.networks().items():
        if name.startswith(allowed):
            continue
        if params_checksum(params) != params_checksum(after_networks[name]):
            raise RuntimeError(f"{block} update at step {step} modified "
                               f"'{name}'.")


def train_step(
        bundle: NetworkBundle,
        batch: Batch,
        config: TrainConfig,
        rngs: TrainRngs,
        mode: Optional[str] = None,
        pessimistic: Optional[np.ndarray] = None
) -> Tuple[NetworkBundle, Dict[str, float]]:
    """One gradient step of every active component

    Arguments:
        bundle: Current networks.
        batch: Transitions.
        config: Hyperparameters.
        rngs: Random streams.
        mode: Objective, defaults to ``config.mode``.
        pessimistic: Rows that get the robust policy objective, see
            :func:`policy_loss`.

    Returns:
        Updated networks and the step's losses.

    Raises:
        FloatingPointError: on a non-finite loss or gradient, naming the
            component and the step.
    """
    mode = mode or config.mode
    step = bundle.step
    optimizers = dict(bundle.optimizers)
    stats: Dict[str, float] = {}

    def finish(block, updated):
        if config.check_isolation:
            _check_isolation(bundle, updated, block, step)
        return updated.update(optimizers=dict(optimizers))

    if mode != MODE_BC:
        with _component(CRITIC, step):
            losses, grads = critic_loss(bundle.critics, batch, bundle.policy,
                                        config.gamma, rngs.critic)
            _check_finite(float(np.sum(losses)))
            members = []
            for i, (member, grad) in enumerate(zip(bundle.critics.members,
                                                   grads)):
                name = f'{CRITIC}{i}'
                member, optimizers[name] = apply_adam(optimizers[name],
                                                      member, grad)
                members.append(member)
            critics = polyak_update(bundle.critics.with_members(members))
        stats[CRITIC_LOSS] = float(np.mean(losses))
        for i, loss in enumerate(losses):
            stats[f'{CRITIC}{i}_loss'] = float(loss)
        bundle = finish(CRITIC, bundle.update(critics=critics))

    with _component(VELOCITY, step):
        loss, grads = flow_matching_loss(bundle.velocity, batch.obs,
                                         batch.actions, rngs.flow)
        _check_finite(loss)
        velocity, optimizers[VELOCITY] = apply_adam(
            optimizers[VELOCITY], bundle.velocity, grads)
    stats[FLOW_LOSS] = loss
    bundle = finish(VELOCITY, bundle.update(velocity=velocity))

    if mode == MODE_CFQL:
        with _component(DISCRIMINATOR, step):
            loss, grads, d_stats = discriminator_loss(
                bundle.discriminator, bundle.velocity, bundle.policy,
                batch.obs, rngs.discriminator, config.flow_steps, step)
            _check_finite(loss)
            params, optimizers[DISCRIMINATOR] = apply_adam(
                optimizers[DISCRIMINATOR], bundle.discriminator.params, grads)
        stats.update(d_stats)
        bundle = finish(DISCRIMINATOR, bundle.update(
            discriminator=bundle.discriminator.with_params(params)))

    if mode != MODE_BC:
        d = bundle.discriminator if mode == MODE_CFQL else None
        with _component(POLICY, step):
            loss, grads, p_stats = policy_loss(
                bundle.policy, bundle.critics, d, bundle.velocity, batch.obs,
                config.alpha, rngs.policy, config.flow_steps,
                config.worst_case, config.normalize_q_loss, pessimistic)
            _check_finite(loss)
            policy, optimizers[POLICY] = apply_adam(optimizers[POLICY],
                                                    bundle.policy, grads)
        stats.update(p_stats)
        bundle = finish(POLICY, bundle.update(policy=policy))

    return bundle.update(step=step + 1), stats


def evaluate(
        bundle: NetworkBundle,
        env: ContinuousCmdpEnv,
        episodes: int,
        seed: int,
        sampler: str = POLICY,
        flow_steps: int = 10
) -> Dict[str, float]:
    """Success rate and return of frozen networks

    Every step draws ``z ~ N(0, I)`` from the evaluation stream.

    Arguments:
        bundle: Networks.
        env: Continuous environment.
        episodes: Number of episodes.
        seed: Evaluation seed.
        sampler: ``policy`` acts with the one-step policy, ``velocity``
            with the flow sampler.
        flow_steps: Euler steps of the flow sampler.

    Returns:
        Success rate, mean undiscounted return and their standard errors.

    Raises:
        ValueError: for ``episodes < 1``, tabular models or mismatched
            dimensions.
    """
    if not isinstance(env, ContinuousCmdpEnv):
        raise ValueError("Evaluation needs a continuous environment.")
    if (env.obs_dim, env.action_dim) != (bundle.obs_dim, bundle.action_dim):
        raise ValueError(
            f"{env.env_id} has observation/action dimensions "
            f"{(env.obs_dim, env.action_dim)}, networks expect "
            f"{(bundle.obs_dim, bundle.action_dim)}.")

    def act(obs, states, confounders, rng):
        z = rng.standard_normal((len(obs), bundle.action_dim))
        if sampler == VELOCITY:
            return euler_sample(bundle.velocity, obs, z, flow_steps)
        return policy_action(bundle.policy, obs, z)

    success, returns = rollout(env, act, episodes, seed)

    def standard_error(values):
        if len(values) < 2:
            return 0.0
        return float(np.std(values, ddof=1) / np.sqrt(len(values)))

    return {
        SUCCESS_RATE: float(np.mean(success)),
        SUCCESS_SE: standard_error(success.astype(float)),
        MEAN_RETURN: float(np.mean(returns)),
        RETURN_SE: standard_error(returns),
    }


def check_dataset_dims(config: TrainConfig, dataset: TransitionDataset,
                       env: Optional[ContinuousCmdpEnv] = None) -> None:
    """Ensure dataset, config and environment describe the same problem

    Raises:
        ValueError: on empty datasets, mismatched environment ids or
            dimensions.
    """
    if not len(dataset):
        raise ValueError("Cannot train on an empty dataset.")
    data_env = dataset.metadata.get(ENV_ID)
    if data_env in ENV_REGISTRY and config.env in ENV_REGISTRY \
            and data_env != config.env:
        raise ValueError(f"Dataset was generated by '{data_env}', config "
                         f"names '{config.env}'.")
    if env is not None and (env.obs_dim, env.action_dim) != \
            (dataset.obs_dim, dataset.action_dim):
        raise ValueError(
            f"{env.env_id} has observation/action dimensions "
            f"{(env.obs_dim, env.action_dim)}, dataset has "
            f"{(dataset.obs_dim, dataset.action_dim)}.")


def _default_env(config: TrainConfig) -> Optional[ContinuousCmdpEnv]:
    if config.env not in ENV_REGISTRY:
        return None
    env = make_env(config.env, config.seed)
    return env if isinstance(env, ContinuousCmdpEnv) else None


def _log_design_choices(config: TrainConfig) -> None:
    logger.info(f"Training mode={config.mode}, seed={config.seed}, "
                f"{config.num_critics} critics, {config.flow_steps} Euler "
                f"steps.")
    logger.info("Bootstrap targets are masked at terminal transitions; "
                "target critics are Polyak averaged with "
                f"tau={config.tau}.")
    if config.mode == MODE_CFQL:
        logger.info("The factual weight is a constant in the policy "
                    f"update; worst case is the {config.worst_case} "
                    "minimum.")


def _maybe_evaluate(bundle, env, config, eval_seed, metrics, final=False):
    if env is None:
        return
    due = final or (config.eval_interval
                    and bundle.step % config.eval_interval == 0)
    if not due:
        return
    if final and metrics.rows and metrics.rows[-1][PHASE] == PHASE_EVAL \
            and metrics.rows[-1][STEP] == bundle.step:
        return
    sampler = VELOCITY if config.mode == MODE_BC else POLICY
    result = evaluate(bundle, env, config.eval_episodes, eval_seed, sampler,
                      config.flow_steps)
    metrics.record(bundle.step, PHASE_EVAL, result)
    logger.info(f"Step {bundle.step}: success rate "
                f"{result[SUCCESS_RATE]:.3f} +- {result[SUCCESS_SE]:.3f}, "
                f"return {result[MEAN_RETURN]:.3f}.")


def _maybe_checkpoint(bundle, config, checkpoint_dir):
    if checkpoint_dir is None or not config.checkpoint_interval \
            or bundle.step % config.checkpoint_interval:
        return
    Path(checkpoint_dir).mkdir(parents=True, exist_ok=True)
    save_bundle(bundle, Path(checkpoint_dir, f'step_{bundle.step:08d}.cfql'))


def train_offline(
        config: TrainConfig,
        dataset: TransitionDataset,
        env: Optional[ContinuousCmdpEnv] = None,
        checkpoint_dir: Union[None, str, Path] = None
) -> Tuple[NetworkBundle, RunMetrics]:
    """Train fresh networks on a fixed dataset

    Arguments:
        config: Hyperparameters.
        dataset: Offline dataset.
        env: Evaluation environment. Built from ``config.env`` if not given;
            tabular environments are not evaluated.
        checkpoint_dir: Directory for periodic checkpoints.

    Returns:
        Final networks and metric history.

    Raises:
        ValueError: if dataset and config disagree.
        FloatingPointError: on a non-finite loss.
    """
    env = env if env is not None else _default_env(config)
    check_dataset_dims(config, dataset, env)
    _log_design_choices(config)

    rngs = make_rngs(config.seed)
    eval_seed = int(rngs.evaluation.integers(2 ** 31))
    bundle = init_bundle(dataset.obs_dim, dataset.action_dim,
                         config.hidden_sizes, config.learning_rates,
                         config.num_critics, rngs.init, config.tau,
                         config.disc_coef, config.disc_decay)
    metrics = RunMetrics()
    for i_step in range(config.gradient_steps):
        batch = dataset.sample_batch(rngs.sample, config.batch_size)
        bundle, stats = train_step(bundle, batch, config, rngs)
        if i_step % config.log_interval == 0 \
                or i_step == config.gradient_steps - 1:
            metrics.record(bundle.step, PHASE_OFFLINE, stats)
            logger.debug(f"Step {bundle.step}: " + ", ".join(
                f"{key}={value:.4g}" for key, value in stats.items()))
        _maybe_evaluate(bundle, env, config, eval_seed, metrics)
        _maybe_checkpoint(bundle, config, checkpoint_dir)
    _maybe_evaluate(bundle, env, config, eval_seed, metrics, final=True)
    return bundle, metrics


def train_online(
        config: TrainConfig,
        bundle: NetworkBundle,
        env: ContinuousCmdpEnv,
        dataset: TransitionDataset,
        checkpoint_dir: Union[None, str, Path] = None
) -> Tuple[NetworkBundle, RunMetrics]:
    """Fine-tune offline-trained networks with environment interaction

    Collects one environment step with the one-step policy, then runs
    ``online['updates_per_step']`` gradient steps. With objective ``fql``
    batches come from one buffer preloaded with the offline data and the
    factual weight is pinned to 1. With objective ``balanced`` half of
    every batch comes from each source; the offline half keeps the
    configured objective, the online half uses weight 1.

    Arguments:
        config: Hyperparameters, ``online`` section included.
        bundle: Offline-trained networks.
        env: Continuous environment.
        dataset: Offline dataset.
        checkpoint_dir: Directory for periodic checkpoints.

    Returns:
        Fine-tuned networks and the fine-tuning metrics. Zero online steps
        return the input networks and empty metrics.

    Raises:
        ValueError: if environment, dataset and networks disagree.
    """
    metrics = RunMetrics()
    n_steps = config.online['steps']
    if not n_steps:
        return bundle, metrics
    if not isinstance(env, ContinuousCmdpEnv):
        raise ValueError("Fine-tuning needs a continuous environment.")
    check_dataset_dims(config, dataset, env)
    if (env.obs_dim, env.action_dim) != (bundle.obs_dim, bundle.action_dim):
        raise ValueError(
            f"{env.env_id} has observation/action dimensions "
            f"{(env.obs_dim, env.action_dim)}, networks expect "
            f"{(bundle.obs_dim, bundle.action_dim)}.")

    objective = config.online['objective']
    logger.info(f"Fine-tuning for {n_steps} environment steps with the "
                f"{objective} objective.")
    rngs = make_rngs(config.seed, stream=1)
    eval_seed = int(make_rngs(config.seed).evaluation.integers(2 ** 31))
    online = ReplayBuffer(env.obs_dim, env.action_dim,
                          config.online['buffer_size'])
    if objective == ONLINE_FQL:
        mixed = ReplayBuffer(env.obs_dim, env.action_dim,
                             len(dataset) + config.online['buffer_size'])
        mixed.add(dataset.observations, dataset.actions, dataset.rewards,
                  dataset.next_observations, dataset.dones,
                  dataset.episodes)
        mode = MODE_FQL if config.mode == MODE_CFQL else config.mode
    else:
        mode = config.mode

    episode = int(dataset.episodes.max()) + 1 if len(dataset) else 0
    states = confounders = None
    t = 0
    for _ in range(n_steps):
        if states is None:
            confounders = env.sample_confounder(rngs.environment, 1)
            states = env.reset(rngs.environment, 1)
            t = 0
        obs = env.observe(states)
        z = rngs.environment.standard_normal((1, env.action_dim))
        if config.mode == MODE_BC:
            actions = euler_sample(bundle.velocity, obs, z, config.flow_steps)
        else:
            actions = policy_action(bundle.policy, obs, z)
        actions = np.clip(actions, -1.0, 1.0)
        next_states, rewards, dones, _ = env.step(states, actions,
                                                  confounders)
        record = (obs, actions, rewards, env.observe(next_states),
                  dones.astype(float), np.array([episode]))
        online.add(*record)
        if objective == ONLINE_FQL:
            mixed.add(*record)
        t += 1
        if dones[0] or t >= env.horizon:
            states = None
            episode += 1
        else:
            states = next_states

        for _ in range(config.online['updates_per_step']):
            if objective == ONLINE_FQL:
                batch = mixed.sample_batch(rngs.sample, config.batch_size)
                pessimistic = None
            else:
                offline_half, online_half = sample_balanced_batch(
                    dataset, online, rngs.sample, config.batch_size)
                batch = concat_batches(offline_half, online_half)
                pessimistic = np.arange(len(batch)) < len(offline_half)
            bundle, stats = train_step(bundle, batch, config, rngs, mode,
                                       pessimistic)
            if bundle.step % config.log_interval == 0:
                metrics.record(bundle.step, PHASE_ONLINE, stats)
            _maybe_evaluate(bundle, env, config, eval_seed, metrics)
            _maybe_checkpoint(bundle, config, checkpoint_dir)
    _maybe_evaluate(bundle, env, config, eval_seed, metrics, final=True)
    return bundle, metrics


def arm_values(
        bundle: NetworkBundle,
        obs: np.ndarray,
        arms: np.ndarray,
        mode: str,
        reward_floor: float,
        rng: np.random.Generator,
        samples: int = 4000,
        flow_steps: int = 10
) -> pd.DataFrame:
    """Decision values of a finite set of arms in a one-step problem

    ``fql`` scores an arm by its ensemble-mean critic value. ``cfql``
    weighs that value by the arm's factual weight ``w``, the share of
    behavior flow samples that land closest to the arm, and gives the
    remaining mass the reward floor: ``w Q + (1 - w) a``.

    Arguments:
        bundle: Trained networks.
        obs: A single observation.
        arms: Candidate actions, one per row.
        mode: ``fql`` or ``cfql``.
        reward_floor: Lower reward bound ``a``.
        rng: Random generator of the flow noise.
        samples: Flow samples for the factual weights.
        flow_steps: Euler steps of the flow sampler.

    Returns:
        One row per arm with the critic value, the factual weight and the
        decision value.

    Raises:
        ValueError: for other modes.
    """
    arms = np.asarray(arms, dtype=float).reshape(-1, bundle.action_dim)
    obs = np.asarray(obs, dtype=float).reshape(1, bundle.obs_dim)
    n_arms = len(arms)
    q = critic_values(bundle.critics.members, np.repeat(obs, n_arms, axis=0),
                      arms).mean(axis=0)
    if mode == MODE_FQL:
        weights = np.ones(n_arms)
    elif mode == MODE_CFQL:
        z = rng.standard_normal((samples, bundle.action_dim))
        draws = euler_sample(bundle.velocity,
                             np.repeat(obs, samples, axis=0), z, flow_steps)
        distance = np.linalg.norm(draws[:, np.newaxis, :]
                                  - arms[np.newaxis, :, :], axis=2)
        weights = np.bincount(np.argmin(distance, axis=1),
                              minlength=n_arms) / samples
    else:
        raise ValueError(f"Arm values need mode '{MODE_FQL}' or "
                         f"'{MODE_CFQL}', got '{mode}'.")
    return pd.DataFrame({
        ACTION: np.arange(n_arms),
        ARM: arms[:, 0] if bundle.action_dim == 1 else list(map(tuple,
                                                                arms)),
        Q_MEAN: q,
        FACTUAL_WEIGHT: weights,
        VALUE: weights * q + (1.0 - weights) * reward_floor,
    })


def confounding_witness(
        seeds: Iterable[int] = range(8),
        config: Optional[TrainConfig] = None,
        arms: Iterable[float] = WITNESS_ARMS,
        samples: int = 4000
) -> pd.DataFrame:
    """Arm choices of FQL and CFQL agents on the confounded bandit

    Per seed both objectives train on the same generated dataset and pick
    the arm with the highest :func:`arm_values`. The true value of the
    pick comes from the discretized bandit.

    Arguments:
        seeds: Training seeds.
        config: Training setup, :py:data:`WITNESS_CONFIG` if not given.
            ``mode`` and ``seed`` are overridden.
        arms: Candidate arms.
        samples: Flow samples for the factual weights.

    Returns:
        One row per seed and mode with the chosen arm, its factual weight
        and its true value.

    Raises:
        ValueError: if the environment has no discretized version.
    """
    config = config if config is not None else TrainConfig(**WITNESS_CONFIG)
    env = make_env(config.env, config.seed)
    if not hasattr(env, 'discretize'):
        raise ValueError(f"'{config.env}' has no discretized version.")
    arms = tuple(arms)
    model = env.discretize(arms)
    episodes = config.dataset_episodes \
        or ENV_REGISTRY[config.env].default_episodes

    rows = []
    for seed in seeds:
        dataset = sample_trajectories(env, episodes, seed)
        obs = env.observe(env.reset(np.random.default_rng(seed), 1))
        for mode in (MODE_FQL, MODE_CFQL):
            bundle, _ = train_offline(config.replace(mode=mode, seed=seed),
                                      dataset, env)
            values = arm_values(bundle, obs, arms, mode,
                                env.reward_bounds[0],
                                make_rngs(seed, stream=2).evaluation,
                                samples, config.flow_steps)
            best = int(np.argmax(values[VALUE].to_numpy()))
            policy = np.zeros((1, len(arms)))
            policy[0, best] = 1.0
            true_value = float(model.initial
                               @ true_policy_value(model, policy))
            rows.append({SEED: seed, MODE: mode, ACTION: best,
                         ARM: arms[best],
                         FACTUAL_WEIGHT: float(values[FACTUAL_WEIGHT][best]),
                         TRUE_VALUE: true_value})
            logger.info(f"Seed {seed}, {mode}: arm {arms[best]:g} with "
                        f"true value {true_value:.3f}.")
    return pd.DataFrame(rows)
