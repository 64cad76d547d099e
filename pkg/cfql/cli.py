#!/usr/bin/env python3

"""Command line interface of cfql

Subcommands generate datasets, train and fine-tune agents, evaluate
checkpoints, compute tabular bounds, check gradients, list environments,
run sweeps and lint run directories. Exit status is 0 on success, 1 on
failures and 2 on usage errors.
"""

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

import numpy as np
from colorama import Fore
from colorama import init as init_colorama

from .bounds import BoundProblem, solve_lower_bound
from .bundle import load_bundle
from .C import *  # noqa: F403
from .cmdp import (TabularCmdp, get_cmdp, sample_trajectories,
                   true_policy_value)
from .dataset import get_dataset, write_dataset, write_dataset_csv
from .envs import ENV_REGISTRY, get_env_spec, list_envs, make_env
from .lint import lint_run
from .mlp import random_gradient_checks
from .nominal import estimate_nominal, nominal_from_cmdp
from .run import execute_finetune, execute_run, write_json
from .sweep import (AXIS_FIELDS, COMPARISON_CONFIG, IMPROVED,
                    compare_finetuning, compare_modes, success_gap, sweep)
from .trainer import TrainConfig, evaluate
from .yaml import load_yaml

logger = logging.getLogger(__name__)
__all__ = ['CliFormatter', 'run_command', 'main']

#: Validity slack of bound versus true value
BOUND_TOLERANCE = 1e-8


class CliFormatter(logging.Formatter):
    """Custom log formatter"""
    formats = {
        logging.DEBUG: Fore.CYAN + '%(message)s',
        logging.INFO: Fore.GREEN + '%(message)s',
        logging.WARN: Fore.YELLOW + '%(message)s',
        logging.ERROR: Fore.RED + '%(message)s',
    }

    def format(self, record):
        # pylint: disable=protected-access
        format_orig = self._style._fmt
        self._style._fmt = CliFormatter.formats.get(record.levelno,
                                                    self._fmt)
        result = logging.Formatter.format(self, record)
        self._style._fmt = format_orig
        return result


def _setup_logging(verbose: bool) -> None:
    init_colorama(autoreset=True)
    ch = logging.StreamHandler()
    ch.setLevel(logging.DEBUG if verbose else logging.INFO)
    ch.setFormatter(CliFormatter())
    package_logger = logging.getLogger('cfql')
    for handler in list(package_logger.handlers):
        if isinstance(handler.formatter, CliFormatter):
            package_logger.removeHandler(handler)
    package_logger.addHandler(ch)
    package_logger.setLevel(logging.DEBUG)


def _load_config(args) -> TrainConfig:
    config = TrainConfig.from_yaml(args.config) if args.config \
        else TrainConfig()
    changes = {}
    for name in ('mode', 'env', 'seed', 'dataset'):
        value = getattr(args, name, None)
        if value is not None:
            changes[name] = value
    if getattr(args, 'gradient_steps', None) is not None:
        changes['gradient_steps'] = args.gradient_steps
    return config.replace(**changes) if changes else config


def _gen_data(args) -> int:
    if args.cmdp:
        model = get_cmdp(args.cmdp)
        episodes = args.episodes or 100
    else:
        model = make_env(args.env, args.seed)
        episodes = args.episodes or get_env_spec(args.env).default_episodes
    dataset = sample_trajectories(model, episodes, args.seed, args.horizon)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_dataset(dataset, args.out)
    if args.csv:
        write_dataset_csv(dataset, args.csv)
    print(f"Wrote {len(dataset)} transitions from {episodes} episodes to "
          f"{args.out}.")
    return 0


def _train(args) -> int:
    config = _load_config(args)
    _, _, result = execute_run(config, args.out)
    print(json.dumps(result, indent=2, sort_keys=True))
    return 0


def _finetune(args) -> int:
    config = _load_config(args)
    online = dict(config.online)
    if args.steps is not None:
        online['steps'] = args.steps
    if args.objective is not None:
        online['objective'] = args.objective
    config = config.replace(online=online)
    _, _, result = execute_finetune(args.ckpt, config, args.out)
    print(json.dumps(result, indent=2, sort_keys=True))
    return 0


def _eval(args) -> int:
    bundle = load_bundle(args.ckpt)
    result = evaluate(bundle, make_env(args.env, args.seed), args.episodes,
                      args.seed, args.sampler, args.flow_steps)
    print(json.dumps(result, indent=2, sort_keys=True))
    return 0


def _policy_table(policy: str, model: TabularCmdp) -> np.ndarray:
    if policy == 'uniform':
        return np.full((model.n_states, model.n_actions),
                       1.0 / model.n_actions)
    data = load_yaml(policy)
    if isinstance(data, dict):
        data = data[POLICY]
    return np.asarray(data, dtype=float)


def _bounds(args) -> int:
    if args.cmdp in ENV_REGISTRY:
        model = make_env(args.cmdp, args.seed)
        if not isinstance(model, TabularCmdp):
            raise ValueError(f"'{args.cmdp}' is not a tabular environment.")
    else:
        model = get_cmdp(args.cmdp)
    if args.gamma is not None:
        model = replace(model, gamma=args.gamma)
    if args.dataset:
        nominal = estimate_nominal(get_dataset(args.dataset), model.n_states,
                                   model.n_actions)
    else:
        nominal = nominal_from_cmdp(model)
    policy = _policy_table(args.policy, model)
    problem = BoundProblem(nominal=nominal, policy=policy, gamma=model.gamma,
                           reward_bounds=model.reward_bounds, tol=args.tol,
                           direction=args.direction)
    tables = solve_lower_bound(problem)
    v_true = true_policy_value(model, policy)
    if args.direction == DIRECTION_LOWER:
        valid = bool(np.all(tables.v <= v_true + BOUND_TOLERANCE))
    else:
        valid = bool(np.all(tables.v >= v_true - BOUND_TOLERANCE))
    result = {
        'direction': args.direction,
        'gamma': model.gamma,
        'q_bound': tables.q.tolist(),
        'v_bound': tables.v.tolist(),
        'v_true': v_true.tolist(),
        'valid': valid,
        'n_sweeps': tables.n_sweeps,
        'residual': tables.residual,
        'residual_trace': list(tables.residual_trace),
    }
    if args.json == '-':
        print(json.dumps(result, indent=2))
    else:
        if args.json:
            Path(args.json).parent.mkdir(parents=True, exist_ok=True)
            write_json(result, args.json)
            logger.info(f"Wrote bound tables to {args.json}.")
        for state, (bound, true) in enumerate(zip(tables.v, v_true)):
            print(f"state {state}: bound {bound:.6f}, true {true:.6f}")
        print(f"valid: {valid} ({tables.n_sweeps} sweeps)")
    return 0 if valid else 1


def _gradcheck(args) -> int:
    report = random_gradient_checks(args.configs, args.seed)
    error = float(report['max_relative_error'].max())
    print(f"max relative gradient error over {len(report)} networks: "
          f"{error:.3e}")
    if error > args.threshold:
        logger.error(f"Gradient error exceeds {args.threshold:g}.")
        return 1
    return 0


def _list_envs(args) -> int:
    print(list_envs().to_string(index=False))
    return 0


def _sweep(args) -> int:
    config = _load_config(args)
    seeds = list(range(args.seed, args.seed + args.n_seeds))
    summary = sweep(config, args.axis, args.values, seeds, args.out)
    print(summary.to_string(index=False))
    return 0


def _compare(args) -> int:
    if args.config is None:
        args.config = str(COMPARISON_CONFIG)
    config = _load_config(args)
    seeds = list(range(args.seed, args.seed + args.n_seeds))
    if args.kind == 'finetune':
        if args.online_steps is not None:
            config = config.replace(online={**config.online,
                                            'steps': args.online_steps})
        summary = compare_finetuning(config, seeds, out_dir=args.out)
        print(summary.to_string(index=False))
        worse = summary.loc[~summary[IMPROVED], OBJECTIVE].tolist()
        if worse:
            logger.error(f"Fine-tuning lowered the success rate with "
                         f"{', '.join(worse)}.")
            return 1
        return 0

    summary = compare_modes(config, seeds, out_dir=args.out)
    print(summary.to_string(index=False))
    gap = success_gap(summary, args.min_ratio)
    print(json.dumps(gap, indent=2, sort_keys=True))
    if not gap['not_worse']:
        logger.error("CFQL is more than one standard error below FQL.")
        return 1
    if not gap['ratio_holds']:
        logger.error(f"CFQL success is below {args.min_ratio:g} times "
                     "that of FQL.")
        return 1
    return 0


def _lint(args) -> int:
    return 1 if lint_run(args.run) else 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='cfql',
        description='Confounding-robust flow Q-learning laboratory.')
    parser.add_argument('-v', '--verbose', dest='verbose',
                        action='store_true', help='More verbose output')
    subparsers = parser.add_subparsers(dest='command', metavar='command')
    subparsers.required = True

    p = subparsers.add_parser('gen-data', help='Sample an offline dataset')
    source = p.add_mutually_exclusive_group()
    source.add_argument('--env', default=TWO_GOAL_REACHER,
                        choices=sorted(ENV_REGISTRY))
    source.add_argument('--cmdp', help='Tabular CMDP file')
    p.add_argument('--episodes', type=int)
    p.add_argument('--horizon', type=int)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--out', required=True, help='Dataset file')
    p.add_argument('--csv', help='Additional CSV export')
    p.set_defaults(func=_gen_data)

    p = subparsers.add_parser('train', help='Offline training run')
    p.add_argument('--algo', dest='mode', choices=MODES)
    p.add_argument('--config', help='YAML or JSON config file')
    p.add_argument('--env', choices=sorted(ENV_REGISTRY))
    p.add_argument('--dataset', help='Dataset file')
    p.add_argument('--steps', dest='gradient_steps', type=int)
    p.add_argument('--seed', type=int)
    p.add_argument('--out', required=True, help='Run directory')
    p.set_defaults(func=_train)

    p = subparsers.add_parser('finetune', help='Online fine-tuning run')
    p.add_argument('--ckpt', required=True, help='Offline checkpoint')
    p.add_argument('--config', help='YAML or JSON config file')
    p.add_argument('--env', choices=sorted(ENV_REGISTRY))
    p.add_argument('--dataset', help='Offline dataset file')
    p.add_argument('--steps', type=int, help='Environment steps')
    p.add_argument('--objective', choices=ONLINE_OBJECTIVES)
    p.add_argument('--seed', type=int)
    p.add_argument('--out', required=True, help='Run directory')
    p.set_defaults(func=_finetune)

    p = subparsers.add_parser('eval', help='Evaluate a checkpoint')
    p.add_argument('--ckpt', required=True)
    p.add_argument('--env', default=TWO_GOAL_REACHER,
                   choices=sorted(ENV_REGISTRY))
    p.add_argument('--episodes', type=int, default=100)
    p.add_argument('--sampler', choices=[POLICY, VELOCITY], default=POLICY)
    p.add_argument('--flow-steps', dest='flow_steps', type=int, default=10)
    p.add_argument('--seed', type=int, default=0)
    p.set_defaults(func=_eval)

    p = subparsers.add_parser('bounds', help='Causal bound of a tabular '
                                             'policy')
    p.add_argument('--cmdp', required=True,
                   help='Tabular CMDP file or tabular environment id')
    p.add_argument('--policy', default='uniform',
                   help="'uniform' or a policy table file")
    p.add_argument('--dataset', help='Estimate the nominal model from data')
    p.add_argument('--gamma', type=float)
    p.add_argument('--tol', type=float, default=1e-10)
    p.add_argument('--direction', choices=DIRECTIONS,
                   default=DIRECTION_LOWER)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--json', metavar='OUT',
                   help="Write tables, residual trace and validity to this "
                        "JSON file, '-' for stdout")
    p.set_defaults(func=_bounds)

    p = subparsers.add_parser('gradcheck', help='Finite-difference check of '
                                                'network gradients')
    p.add_argument('--configs', type=int, default=50)
    p.add_argument('--threshold', type=float, default=1e-4)
    p.add_argument('--seed', type=int, default=0)
    p.set_defaults(func=_gradcheck)

    p = subparsers.add_parser('list-envs', help='Show the environment '
                                                'registry')
    p.set_defaults(func=_list_envs)

    p = subparsers.add_parser('sweep', help='Hyperparameter sweep')
    p.add_argument('--axis', required=True, choices=sorted(AXIS_FIELDS))
    p.add_argument('--values', type=float, nargs='+')
    p.add_argument('--config', help='YAML or JSON config template')
    p.add_argument('--algo', dest='mode', choices=MODES)
    p.add_argument('--env', choices=sorted(ENV_REGISTRY))
    p.add_argument('--steps', dest='gradient_steps', type=int)
    p.add_argument('--seed', type=int, default=0, help='First seed')
    p.add_argument('--n-seeds', dest='n_seeds', type=int, default=1)
    p.add_argument('--out', help='Sweep directory')
    p.set_defaults(func=_sweep)

    p = subparsers.add_parser('compare', help='Seed-averaged comparison of '
                                              'objectives')
    p.add_argument('--kind', choices=['modes', 'finetune'], default='modes',
                   help='FQL against CFQL, or offline against fine-tuned')
    p.add_argument('--config', help='YAML or JSON config template, the '
                                    'shipped reacher comparison if omitted')
    p.add_argument('--env', choices=sorted(ENV_REGISTRY))
    p.add_argument('--steps', dest='gradient_steps', type=int)
    p.add_argument('--online-steps', dest='online_steps', type=int)
    p.add_argument('--seed', type=int, default=0, help='First seed')
    p.add_argument('--n-seeds', dest='n_seeds', type=int, default=8)
    p.add_argument('--min-ratio', dest='min_ratio', type=float, default=1.2,
                   help='Required CFQL to FQL success ratio')
    p.add_argument('--out', help='Comparison directory')
    p.set_defaults(func=_compare)

    p = subparsers.add_parser('lint', help='Validate a run directory')
    p.add_argument('--run', required=True)
    p.set_defaults(func=_lint)
    return parser


def run_command(argv: Optional[List[str]] = None) -> int:
    """Run one subcommand

    Arguments:
        argv: Command line arguments without the program name.

    Returns:
        Exit status: 0 on success, 1 on failure, 2 on usage errors.
    """
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code in (0, None) else 2
    _setup_logging(args.verbose)
    try:
        return args.func(args)
    except Exception as e:  # pylint: disable=broad-except
        logger.error(f"{args.command} failed: {type(e).__name__}: {e}")
        logger.debug("Traceback:", exc_info=True)
        return 1


def main():
    """Entry point of the ``cfql`` console script"""
    sys.exit(run_command(sys.argv[1:]))


if __name__ == '__main__':
    main()
