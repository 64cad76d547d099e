"""Integrity checks of datasets, CMDPs, configs and run directories"""

import json
import logging
from pathlib import Path
from typing import Dict, Union

import jsonschema
import numpy as np
import pandas as pd

from .bundle import load_bundle
from .C import *  # noqa: F403
from .cmdp import TabularCmdp, check_policy_table
from .dataset import TransitionDataset, get_dataset
from .envs import ENV_REGISTRY
from .run import read_manifest, verify_manifest
from .trainer import TrainConfig, check_dataset_dims

logger = logging.getLogger(__name__)
__all__ = ['assert_actions_in_range',
           'assert_dataset_finite',
           'assert_dones_binary',
           'assert_rewards_within_bounds',
           'assert_tabular_dataset',
           'assert_policy_table_valid',
           'assert_config_matches_dataset',
           'check_config',
           'check_dataset',
           'check_metrics_df',
           'check_tabular_cmdp',
           'lint_run']


def assert_dataset_finite(dataset: TransitionDataset) -> None:
    """Check that every stored number is finite

    Raises:
        AssertionError: on NaN or infinite entries
    """
    for name in ('observations', 'actions', 'rewards', 'next_observations',
                 'dones'):
        values = getattr(dataset, name)
        if not np.all(np.isfinite(values)):
            raise AssertionError(
                f"Dataset field '{name}' has "
                f"{np.sum(~np.isfinite(values))} non-finite entries.")


def assert_dones_binary(dataset: TransitionDataset) -> None:
    """Check that terminal flags are 0 or 1"""
    invalid = ~np.isin(dataset.dones, (0.0, 1.0))
    if np.any(invalid):
        raise AssertionError(f"Terminal flags must be 0 or 1, found "
                             f"{np.unique(dataset.dones[invalid])}.")


def assert_rewards_within_bounds(dataset: TransitionDataset) -> None:
    """Check rewards against the declared reward interval"""
    if REWARD_BOUNDS not in dataset.metadata:
        return
    low, high = dataset.metadata[REWARD_BOUNDS]
    outside = (dataset.rewards < low) | (dataset.rewards > high)
    if np.any(outside):
        raise AssertionError(
            f"{np.sum(outside)} rewards lie outside the declared bounds "
            f"[{low}, {high}].")


def assert_actions_in_range(dataset: TransitionDataset) -> None:
    """Check that continuous actions lie in ``[-1, 1]``"""
    if np.any(np.abs(dataset.actions) > 1.0):
        raise AssertionError("Continuous actions must lie in [-1, 1].")


def assert_tabular_dataset(dataset: TransitionDataset) -> None:
    """Check that states and actions are valid integer indices"""
    n_states = dataset.metadata[N_STATES]
    n_actions = dataset.metadata[N_ACTIONS]
    for name, values, size in (
            ('observations', dataset.observations, n_states),
            ('next_observations', dataset.next_observations, n_states),
            ('actions', dataset.actions, n_actions)):
        if np.any(values != np.round(values)) or np.any(values < 0) \
                or np.any(values >= size):
            raise AssertionError(f"Tabular dataset field '{name}' must hold "
                                 f"integers in [0, {size}).")


def check_dataset(dataset: TransitionDataset) -> None:
    """Run all dataset checks

    Raises:
        AssertionError: on the first failed check
    """
    assert_dataset_finite(dataset)
    assert_dones_binary(dataset)
    assert_rewards_within_bounds(dataset)
    if N_STATES in dataset.metadata:
        assert_tabular_dataset(dataset)
    else:
        assert_actions_in_range(dataset)
    if len(dataset) and np.any(np.diff(dataset.episodes) < 0):
        raise AssertionError("Episode indices must be non-decreasing.")


def check_tabular_cmdp(model: Union[Dict, TabularCmdp]) -> None:
    """Check mechanisms, noise distribution, bounds and discount

    Arguments:
        model: CMDP or its dictionary form.

    Raises:
        AssertionError: if the CMDP is invalid
    """
    try:
        if isinstance(model, TabularCmdp):
            model.check()
        else:
            TabularCmdp.from_dict(model)
    except (ValueError, KeyError, TypeError) as e:
        raise AssertionError(f"Invalid tabular CMDP: {e}") from e


def assert_policy_table_valid(policy: np.ndarray, n_states: int,
                              n_actions: int) -> None:
    """Check that a policy table is row-stochastic of the right shape"""
    try:
        check_policy_table(policy, n_states, n_actions)
    except ValueError as e:
        raise AssertionError(str(e)) from e


def check_config(config: Union[Dict, str, Path]) -> None:
    """Check a config against the schema and the config invariants

    Raises:
        AssertionError: on invalid configs
    """
    try:
        TrainConfig.from_yaml(config)
    except (jsonschema.exceptions.ValidationError, ValueError, TypeError) \
            as e:
        raise AssertionError(f"Invalid config: {e}") from e


def assert_config_matches_dataset(config: TrainConfig,
                                  dataset: TransitionDataset) -> None:
    """Check that a dataset fits the environment a config names"""
    spec = ENV_REGISTRY.get(config.env)
    try:
        check_dataset_dims(config, dataset)
    except ValueError as e:
        raise AssertionError(str(e)) from e
    if spec is not None and spec.kind != 'tabular' and \
            (spec.obs_dim, spec.action_dim) != (dataset.obs_dim,
                                                dataset.action_dim):
        raise AssertionError(
            f"{config.env} has observation/action dimensions "
            f"{(spec.obs_dim, spec.action_dim)}, dataset has "
            f"{(dataset.obs_dim, dataset.action_dim)}.")


def check_metrics_df(df: pd.DataFrame) -> None:
    """Check a metrics table

    Raises:
        AssertionError: on missing columns, unknown phases or non-finite
            values
    """
    missing = {STEP, PHASE} - set(df.columns)
    if missing:
        raise AssertionError(f"Metrics table requires the columns "
                             f"{missing}.")
    unknown = set(df[PHASE]) - set(PHASES)
    if unknown:
        raise AssertionError(f"Unknown phases {unknown} in metrics table.")
    values = df.drop(columns=[STEP, PHASE]).to_numpy(dtype=float)
    # blank cells are columns that do not apply to a row
    if np.any(np.isinf(values)):
        raise AssertionError("Metrics table holds infinite values.")


def lint_run(run_dir: Union[str, Path]) -> bool:
    """Validate a run directory

    Arguments:
        run_dir: Directory written by :func:`cfql.run.execute_run`.

    Returns:
        ``True`` if errors occurred, ``False`` otherwise
    """
    run_dir = Path(run_dir)
    errors_occurred = False

    config = None
    logger.info("Checking config...")
    try:
        with open(run_dir / CONFIG_FILE) as f:
            check_config(json.load(f))
        config = TrainConfig.from_yaml(run_dir / CONFIG_FILE)
    except (AssertionError, FileNotFoundError) as e:
        logger.error(e)
        errors_occurred = True

    logger.info("Checking manifest...")
    try:
        manifest = read_manifest(run_dir)
        if not verify_manifest(run_dir):
            errors_occurred = True
        elif config is not None:
            dataset = get_dataset(run_dir / manifest.dataset)
            check_dataset(dataset)
            assert_config_matches_dataset(config, dataset)
        if manifest.finished is None:
            logger.warning("Run did not finish.")
    except (AssertionError, FileNotFoundError, ValueError, TypeError) as e:
        logger.error(e)
        errors_occurred = True

    metrics_file = run_dir / METRICS_FILE
    if metrics_file.exists():
        logger.info("Checking metrics...")
        try:
            check_metrics_df(pd.read_csv(metrics_file))
        except (AssertionError, ValueError) as e:
            logger.error(e)
            errors_occurred = True
    else:
        logger.warning("Metrics table not available. Skipping.")

    checkpoint_dir = run_dir / CHECKPOINT_DIR
    for checkpoint in sorted(checkpoint_dir.glob('*.cfql')):
        try:
            load_bundle(checkpoint)
        except (ValueError, KeyError) as e:
            logger.error(f"Checkpoint {checkpoint}: {e}")
            errors_occurred = True

    if errors_occurred:
        logger.error('Not OK')
    else:
        logger.info('OK')
    return errors_occurred
