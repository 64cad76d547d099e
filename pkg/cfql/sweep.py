"""Hyperparameter sweeps over the discriminator coefficient and ensemble
size, and seed-averaged comparisons of training objectives"""

import logging
import math
import os
from pathlib import Path
from typing import (Any, Callable, Dict, List, Optional, Sequence, Tuple,
                    Union)

import numpy as np
import pandas as pd

from . import ENV_NUM_THREADS
from .C import *  # noqa: F403
from .cmdp import ContinuousCmdpEnv
from .envs import make_env
from .run import execute_run, resolve_dataset
from .trainer import RunMetrics, TrainConfig, train_offline, train_online

logger = logging.getLogger(__name__)
__all__ = ['sweep', 'tail_variance', 'compare_modes', 'success_gap',
           'compare_finetuning', 'AXIS_FIELDS', 'RUNS', 'TAIL_VARIANCE',
           'IMPROVED', 'COMPARISON_CONFIG']

#: Config field varied by each sweep axis
AXIS_FIELDS = {
    AXIS_DISC_COEF: 'disc_coef',
    AXIS_ENSEMBLES: 'num_critics',
}

#: Summary column with the number of runs per value
RUNS = 'runs'

#: Summary column with the late-training variance of the success rate
TAIL_VARIANCE = 'tail_variance'

#: Shipped desk-scale config of the reacher comparison
COMPARISON_CONFIG = Path(__file__).parent / 'configs' \
    / 'reacher_comparison.yaml'

#: Comparison column, fine-tuned success at least the offline success
IMPROVED = 'improved'

#: Share of the evaluations at the end of training used for instability
_TAIL_FRACTION = 0.2

#: Tail variance ratio to the best value above which a value is unstable
_UNSTABLE_RATIO = 2.0


def tail_variance(success_rates: Sequence[float],
                  fraction: float = _TAIL_FRACTION) -> float:
    """Population variance of the last ``fraction`` of evaluations"""
    success_rates = np.asarray(success_rates, dtype=float)
    if not len(success_rates):
        return float('nan')
    n_tail = max(1, math.ceil(fraction * len(success_rates)))
    return float(np.var(success_rates[-n_tail:]))


def _map_jobs(run: Callable[[Any], Any], jobs: Sequence) -> List:
    num_threads = int(os.environ.get(ENV_NUM_THREADS, 1))
    if num_threads == 1:
        return list(map(run, jobs))
    from concurrent.futures import ThreadPoolExecutor
    with ThreadPoolExecutor(max_workers=num_threads) as executor:
        return list(executor.map(run, jobs))


def _final_success(metrics: RunMetrics) -> Optional[float]:
    evaluations = metrics.evaluations()
    if not len(evaluations):
        return None
    return float(evaluations[SUCCESS_RATE].iloc[-1])


def _mean_and_se(values: Sequence[float]) -> Tuple[float, float]:
    values = np.asarray(values, dtype=float)
    if not len(values):
        return float('nan'), 0.0
    se = float(np.std(values, ddof=1) / np.sqrt(len(values))) \
        if len(values) > 1 else 0.0
    return float(np.mean(values)), se


def _run_one(config: TrainConfig,
             run_dir: Optional[Path]) -> RunMetrics:
    if run_dir is not None:
        _, metrics, _ = execute_run(config, run_dir)
        return metrics
    dataset, _ = resolve_dataset(config)
    _, metrics = train_offline(config, dataset)
    return metrics


def sweep(
        template: TrainConfig,
        axis: str,
        values: Optional[Sequence[float]] = None,
        seeds: Sequence[int] = (0,),
        out_dir: Union[None, str, Path] = None
) -> pd.DataFrame:
    """Train one run per axis value and seed and summarize final success

    Runs execute in up to ``CFQL_THREADS`` worker threads (see
    :py:data:`cfql.ENV_NUM_THREADS`); each run is serial.

    Arguments:
        template: Config shared by all runs.
        axis: ``disc_coef`` or ``ensembles``.
        values: Axis values, defaults to :py:data:`cfql.C.SWEEP_AXES`.
        seeds: Seeds per value.
        out_dir: Parent directory of per-run directories
            ``<axis>=<value>/seed=<seed>``. Runs are kept in memory if not
            given.

    Returns:
        One row per value with mean final success rate, its standard error
        over seeds, the late-training variance and an instability flag.
        A value is unstable if its variance over the last 20% of
        evaluations exceeds twice that of the best value.

    Raises:
        ValueError: for unknown axes or empty value lists.
    """
    if axis not in AXIS_FIELDS:
        raise ValueError(f"Unknown sweep axis '{axis}'. Must be one of "
                         f"{list(AXIS_FIELDS)}.")
    values = list(SWEEP_AXES[axis] if values is None else values)
    if not values or not len(seeds):
        raise ValueError("A sweep needs at least one value and one seed.")
    if axis == AXIS_ENSEMBLES:
        values = [int(value) for value in values]

    jobs = [(value, seed) for value in values for seed in seeds]

    def run(job):
        value, seed = job
        config = template.replace(**{AXIS_FIELDS[axis]: value, 'seed': seed})
        run_dir = None if out_dir is None else \
            Path(out_dir, f'{axis}={value}', f'seed={seed}')
        logger.info(f"Sweep run {axis}={value}, seed={seed}.")
        return _run_one(config, run_dir)

    results = _map_jobs(run, jobs)

    finals: Dict[float, List[float]] = {value: [] for value in values}
    tails: Dict[float, List[float]] = {value: [] for value in values}
    for (value, _), metrics in zip(jobs, results):
        evaluations = metrics.evaluations()
        if not len(evaluations):
            continue
        finals[value].append(float(evaluations[SUCCESS_RATE].iloc[-1]))
        tails[value].append(tail_variance(evaluations[SUCCESS_RATE]))

    rows = []
    for value in values:
        mean, se = _mean_and_se(finals[value])
        rows.append({
            AXIS: axis,
            VALUE: value,
            RUNS: len(seeds),
            MEAN_SUCCESS: mean,
            SUCCESS_SE: se,
            TAIL_VARIANCE: float(np.mean(tails[value])) if tails[value]
            else float('nan'),
        })
    summary = pd.DataFrame(rows)
    summary[UNSTABLE] = False
    if summary[MEAN_SUCCESS].notna().any():
        best = summary.loc[summary[MEAN_SUCCESS].idxmax()]
        summary[UNSTABLE] = summary[TAIL_VARIANCE] > \
            _UNSTABLE_RATIO * best[TAIL_VARIANCE]
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        summary.to_csv(Path(out_dir, f'sweep_{axis}.csv'), index=False)
    return summary


def compare_modes(
        template: TrainConfig,
        seeds: Sequence[int] = (0,),
        modes: Sequence[str] = (MODE_FQL, MODE_CFQL),
        out_dir: Union[None, str, Path] = None
) -> pd.DataFrame:
    """Final success of several training objectives over the same seeds

    Arguments:
        template: Config shared by all runs, ``mode`` and ``seed`` vary.
        seeds: Seeds per objective.
        modes: Objectives to compare.
        out_dir: Parent directory of run directories
            ``mode=<mode>/seed=<seed>``. Runs are kept in memory if not
            given.

    Returns:
        One row per objective with mean final success and its standard
        error over seeds.

    Raises:
        ValueError: for empty mode or seed lists.
    """
    if not len(seeds) or not len(modes):
        raise ValueError("A comparison needs at least one mode and seed.")
    jobs = [(mode, seed) for mode in modes for seed in seeds]

    def run(job):
        mode, seed = job
        run_dir = None if out_dir is None else \
            Path(out_dir, f'{MODE}={mode}', f'seed={seed}')
        logger.info(f"Comparison run {mode}, seed={seed}.")
        return _run_one(template.replace(mode=mode, seed=seed), run_dir)

    finals: Dict[str, List[float]] = {mode: [] for mode in modes}
    for (mode, _), metrics in zip(jobs, _map_jobs(run, jobs)):
        final = _final_success(metrics)
        if final is not None:
            finals[mode].append(final)

    rows = []
    for mode in modes:
        mean, se = _mean_and_se(finals[mode])
        rows.append({MODE: mode, RUNS: len(seeds), MEAN_SUCCESS: mean,
                     SUCCESS_SE: se})
    summary = pd.DataFrame(rows)
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        summary.to_csv(Path(out_dir, 'compare_modes.csv'), index=False)
    return summary


def success_gap(
        summary: pd.DataFrame,
        min_ratio: float = 1.2,
        baseline: str = MODE_FQL,
        candidate: str = MODE_CFQL
) -> Dict[str, Any]:
    """Check a :func:`compare_modes` summary for a success gap

    Arguments:
        summary: Output of :func:`compare_modes`.
        min_ratio: Required ratio of candidate to baseline mean success.
        baseline: Reference objective.
        candidate: Compared objective.

    Returns:
        ``ratio`` of the mean successes (NaN for a zero baseline),
        ``ratio_holds`` if the candidate reaches ``min_ratio`` times the
        baseline, and ``not_worse`` if the candidate is at least the
        baseline minus one standard error.
    """
    rows = summary.set_index(MODE)
    base = rows.loc[baseline]
    cand = rows.loc[candidate]
    ratio = cand[MEAN_SUCCESS] / base[MEAN_SUCCESS] \
        if base[MEAN_SUCCESS] > 0 else float('nan')
    return {
        'baseline': baseline,
        'candidate': candidate,
        'ratio': float(ratio),
        'min_ratio': float(min_ratio),
        'ratio_holds': bool(cand[MEAN_SUCCESS]
                            >= min_ratio * base[MEAN_SUCCESS]),
        'not_worse': bool(cand[MEAN_SUCCESS]
                          >= base[MEAN_SUCCESS] - base[SUCCESS_SE]),
    }


def compare_finetuning(
        template: TrainConfig,
        seeds: Sequence[int] = (0,),
        objectives: Sequence[str] = tuple(ONLINE_OBJECTIVES),
        out_dir: Union[None, str, Path] = None
) -> pd.DataFrame:
    """Final success before and after fine-tuning with each objective

    Every seed trains one offline agent, then fine-tunes a copy with each
    objective for ``template.online['steps']`` environment steps.

    Arguments:
        template: Config shared by all runs, ``seed`` varies.
        seeds: Seeds.
        objectives: Fine-tuning objectives.
        out_dir: Directory of the summary CSV, not written if not given.

    Returns:
        One row per objective with the mean offline and fine-tuned
        success, the standard error of the latter and whether
        fine-tuning did not lower the mean.

    Raises:
        ValueError: without online steps or for tabular environments.
    """
    if not template.online['steps']:
        raise ValueError("Fine-tuning comparison needs online steps.")
    if not len(seeds) or not len(objectives):
        raise ValueError("A comparison needs at least one objective and "
                         "seed.")
    if not isinstance(make_env(template.env, template.seed),
                      ContinuousCmdpEnv):
        raise ValueError(f"'{template.env}' cannot be fine-tuned, it is not "
                         "a continuous environment.")

    def run(seed):
        config = template.replace(seed=seed)
        env = make_env(config.env, seed)
        dataset, _ = resolve_dataset(config)
        bundle, metrics = train_offline(config, dataset, env)
        finals = {}
        for objective in objectives:
            logger.info(f"Fine-tuning seed={seed} with {objective}.")
            tuned = config.replace(online={**config.online,
                                           'objective': objective})
            _, online_metrics = train_online(tuned, bundle, env, dataset)
            finals[objective] = _final_success(online_metrics)
        return _final_success(metrics), finals

    results = _map_jobs(run, list(seeds))
    offline = [final for final, _ in results if final is not None]
    offline_mean, _ = _mean_and_se(offline)
    rows = []
    for objective in objectives:
        mean, se = _mean_and_se([finals[objective] for _, finals in results
                                 if finals[objective] is not None])
        rows.append({OBJECTIVE: objective, RUNS: len(seeds),
                     OFFLINE_SUCCESS: offline_mean, ONLINE_SUCCESS: mean,
                     SUCCESS_SE: se, IMPROVED: bool(mean >= offline_mean)})
    summary = pd.DataFrame(rows)
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        summary.to_csv(Path(out_dir, 'compare_finetuning.csv'), index=False)
    return summary
