"""Causal Bellman bounds on policy values of tabular CMDPs

The lower-bound operator mixes a factual branch, taken with the behavior
probability of the target action, and a counterfactual branch that
assumes the reward floor and the worst reachable state::

    Q(s, x) = (1 - mu(x|s)) (a + gamma min_s* V(s*))
              + mu(x|s) (R~(s, x) + gamma sum_s' T~(s, x, s') V(s'))
    V(s) = sum_x pi(x|s) Q(s, x)

The upper-bound direction uses ``b`` and ``max`` instead.
"""

import logging
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np
import pandas as pd

from .C import *  # noqa: F403
from .cmdp import TabularCmdp, check_policy_table, true_policy_value
from .nominal import NominalModel

logger = logging.getLogger(__name__)
__all__ = ['BoundProblem', 'BoundTables', 'RobustImprovement',
           'apply_lower_bellman', 'solve_lower_bound',
           'expectation_form_check', 'expectation_form_report',
           'robust_greedy_improve', 'greedy_comparison', 'initial_tables',
           'greedy_policy']


@dataclass(frozen=True)
class BoundProblem:
    """Inputs of the causal Bellman bound

    Attributes:
        nominal: Observational model.
        policy: Row-stochastic target policy table ``(S, X)``.
        gamma: Discount factor in ``[0, 1)``.
        reward_bounds: Reward interval ``[a, b]``. Defaults to the bounds
            of the nominal model.
        tol: Sup-norm residual at which iteration stops.
        max_sweeps: Maximum number of synchronous sweeps.
        direction: ``lower`` or ``upper``.
    """
    nominal: NominalModel
    policy: np.ndarray
    gamma: float
    reward_bounds: Optional[Tuple[float, float]] = None
    tol: float = 1e-10
    max_sweeps: int = 100_000
    direction: str = DIRECTION_LOWER

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"Discount {self.gamma} not in [0, 1).")
        if self.tol <= 0:
            raise ValueError(f"Tolerance must be positive, got {self.tol}.")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"Unknown direction '{self.direction}'.")
        object.__setattr__(self, 'policy', check_policy_table(
            self.policy, self.nominal.n_states, self.nominal.n_actions))
        if self.reward_bounds is None:
            object.__setattr__(self, 'reward_bounds',
                               self.nominal.reward_bounds)

    @property
    def reward_floor(self) -> float:
        """``a`` for the lower bound, ``b`` for the upper bound"""
        return float(self.reward_bounds[0] if self.direction ==
                     DIRECTION_LOWER else self.reward_bounds[1])

    def with_policy(self, policy: np.ndarray) -> 'BoundProblem':
        return replace(self, policy=policy)


@dataclass(frozen=True)
class BoundTables:
    """Bound value tables

    Attributes:
        q: ``Q_lower(s, x)``
        v: ``V_lower(s)``
        n_sweeps: Number of applied sweeps.
        residual: Sup-norm change of ``v`` in the last sweep.
        residual_trace: Residual of every sweep.
    """
    q: np.ndarray
    v: np.ndarray
    n_sweeps: int = 0
    residual: float = np.inf
    residual_trace: Tuple[float, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {'q': self.q.tolist(), 'v': self.v.tolist(),
                'n_sweeps': self.n_sweeps, 'residual': self.residual,
                'residual_trace': list(self.residual_trace)}


def initial_tables(problem: BoundProblem) -> BoundTables:
    """Pessimistic start ``V = a / (1 - gamma)``"""
    start = problem.reward_floor / (1.0 - problem.gamma)
    n_s, n_x = problem.nominal.n_states, problem.nominal.n_actions
    return BoundTables(q=np.full((n_s, n_x), start), v=np.full(n_s, start))


def _factual_tables(problem: BoundProblem) -> Tuple[np.ndarray, np.ndarray]:
    nominal = problem.nominal
    visited = nominal.visited
    defined = np.all(np.isfinite(nominal.transition), axis=2) \
        & np.isfinite(nominal.reward)
    if np.any(visited & ~defined):
        s, x = np.argwhere(visited & ~defined)[0]
        raise ValueError(f"Inconsistent nominal model: mu({x}|{s}) > 0 but "
                         "T~ or R~ is undefined there.")
    transition = np.where(visited[:, :, np.newaxis], nominal.transition, 0.0)
    reward = np.where(visited, nominal.reward, 0.0)
    return transition, reward


def apply_lower_bellman(
        problem: BoundProblem,
        current: BoundTables
) -> BoundTables:
    """One synchronous sweep of the causal Bellman bound operator

    Arguments:
        problem: Bound problem.
        current: Tables of the previous sweep.

    Returns:
        Tables after the sweep, with the residual appended to the trace.

    Raises:
        ValueError: if ``T~`` or ``R~`` is undefined where ``mu(x|s) > 0``
            or if the tables do not match the problem.
    """
    n_s = problem.nominal.n_states
    if current.v.shape != (n_s,):
        raise ValueError(f"Value table has shape {current.v.shape}, "
                         f"expected {(n_s,)}.")
    transition, reward = _factual_tables(problem)
    mu = problem.nominal.behavior
    if problem.direction == DIRECTION_LOWER:
        extreme = np.min(current.v)
    else:
        extreme = np.max(current.v)
    counterfactual = problem.reward_floor + problem.gamma * extreme
    factual = reward + problem.gamma * (transition @ current.v)
    q = (1.0 - mu) * counterfactual + mu * factual
    v = np.sum(problem.policy * q, axis=1)
    residual = float(np.max(np.abs(v - current.v)))
    return BoundTables(q=q, v=v, n_sweeps=current.n_sweeps + 1,
                       residual=residual,
                       residual_trace=current.residual_trace + (residual,))


def solve_lower_bound(problem: BoundProblem) -> BoundTables:
    """Iterate :func:`apply_lower_bellman` to its fixed point

    Starts from ``V = a / (1 - gamma)`` (``b`` for the upper direction).

    Arguments:
        problem: Bound problem.

    Returns:
        Fixed-point tables with residual below ``problem.tol``.

    Raises:
        RuntimeError: if ``problem.max_sweeps`` sweeps do not converge.
    """
    tables = initial_tables(problem)
    while tables.n_sweeps < problem.max_sweeps:
        tables = apply_lower_bellman(problem, tables)
        if tables.residual < problem.tol:
            logger.debug(f"Bound converged after {tables.n_sweeps} sweeps.")
            return tables
    raise RuntimeError(f"Bound iteration did not converge within "
                       f"{problem.max_sweeps} sweeps, last residual "
                       f"{tables.residual:.3g}.")


def expectation_form_report(
        problem: BoundProblem,
        tables: BoundTables,
        samples: int,
        seed: int
) -> pd.DataFrame:
    """Monte-Carlo evaluation of the bound in expectation form

    Per state draws ``x ~ mu(.|s)`` and ``x' ~ pi(.|s)``. If they agree,
    the sample is ``R~(s, x) + gamma sum_s' T~(s, x, s') Q(s', x*_s')``
    with ``x*_s' ~ pi(.|s')`` drawn for every next state; otherwise it is
    ``a + gamma min_s* V(s*)``. Unvisited states have no behavior draw and
    always take the second branch.

    Arguments:
        problem: Bound problem.
        tables: Solved tables.
        samples: Samples per state.
        seed: Seed.

    Returns:
        Per state the sweep value, the Monte-Carlo estimate, its standard
        error and the absolute deviation.
    """
    rng = np.random.default_rng(seed)
    transition, reward = _factual_tables(problem)
    mu = problem.nominal.behavior
    n_s, n_x = mu.shape
    extreme = np.min(tables.v) if problem.direction == DIRECTION_LOWER \
        else np.max(tables.v)
    counterfactual = problem.reward_floor + problem.gamma * extreme
    analytic = apply_lower_bellman(problem, tables).v

    rows = []
    for s in range(n_s):
        targets = rng.choice(n_x, size=samples, p=problem.policy[s])
        if mu[s].sum() > 0:
            behavior = rng.choice(n_x, size=samples, p=mu[s])
        else:
            behavior = np.full(samples, -1)
        agree = behavior == targets
        next_actions = np.column_stack([
            rng.choice(n_x, size=samples, p=problem.policy[s_next])
            for s_next in range(n_s)])
        next_q = tables.q[np.arange(n_s), next_actions]
        x = np.where(agree, behavior, 0)
        factual = reward[s, x] + problem.gamma * np.sum(
            transition[s, x] * next_q, axis=1)
        values = np.where(agree, factual, counterfactual)
        estimate = float(values.mean())
        se = float(values.std(ddof=1) / np.sqrt(samples))
        rows.append({STATE: s, ANALYTIC: float(analytic[s]),
                     ESTIMATE: estimate, STANDARD_ERROR: se,
                     DEVIATION: abs(estimate - float(analytic[s]))})
    return pd.DataFrame(rows)


def expectation_form_check(
        problem: BoundProblem,
        samples: int,
        seed: int,
        tables: Optional[BoundTables] = None
) -> float:
    """Largest deviation between the expectation and summation forms

    Arguments:
        problem: Bound problem.
        samples: Samples per state.
        seed: Seed.
        tables: Solved tables. Solved from ``problem`` if not provided.

    Returns:
        Maximum absolute deviation over states.
    """
    if tables is None:
        tables = solve_lower_bound(problem)
    report = expectation_form_report(problem, tables, samples, seed)
    return float(report[DEVIATION].max())


def greedy_policy(q: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """Deterministic argmax policy, ties broken by lowest action index"""
    q = np.asarray(q, dtype=float)
    top = q.max(axis=1, keepdims=True)
    finite = np.abs(q[np.isfinite(q)])
    atol = rtol * max(1.0, float(finite.max())) if finite.size else 0.0
    best = np.argmax(q >= top - atol, axis=1)
    policy = np.zeros_like(q)
    policy[np.arange(q.shape[0]), best] = 1.0
    return policy


@dataclass(frozen=True)
class RobustImprovement:
    """Result of :func:`robust_greedy_improve`

    Attributes:
        policy: Final deterministic policy table.
        tables: Bound tables of ``policy``.
        iterations: Number of evaluation/improvement rounds.
        converged: False if the policy kept changing; then ``policy`` is
            the best policy seen by mean bound value.
    """
    policy: np.ndarray
    tables: BoundTables
    iterations: int
    converged: bool


def robust_greedy_improve(
        problem: BoundProblem,
        max_iterations: int = 100
) -> RobustImprovement:
    """Policy iteration on the causal lower bound

    Alternates :func:`solve_lower_bound` and per-state argmax over
    ``Q_lower``, starting from ``problem.policy``, until the policy table
    stops changing.

    Arguments:
        problem: Bound problem; its policy is the starting point.
        max_iterations: Maximum number of rounds.

    Returns:
        The improved policy with its bound tables.
    """
    policy = problem.policy
    tables = solve_lower_bound(problem)
    best = (float(np.mean(tables.v)), policy, tables)
    seen = []
    for iteration in range(1, max_iterations + 1):
        improved = greedy_policy(tables.q)
        if np.array_equal(improved, policy):
            return RobustImprovement(policy, tables, iteration, True)
        if any(np.array_equal(improved, p) for p in seen):
            logger.warning("Robust policy iteration cycles after "
                           f"{iteration} rounds.")
            break
        seen.append(improved)
        policy = improved
        tables = solve_lower_bound(problem.with_policy(policy))
        if np.mean(tables.v) > best[0]:
            best = (float(np.mean(tables.v)), policy, tables)
    else:
        logger.warning(f"Robust policy iteration did not settle within "
                       f"{max_iterations} rounds.")
    warnings.warn("Robust policy iteration did not converge, returning the "
                  "best policy seen.", RuntimeWarning)
    return RobustImprovement(best[1], best[2], iteration, False)


def greedy_comparison(
        model: TabularCmdp,
        nominal: NominalModel
) -> pd.DataFrame:
    """Naive versus robust greedy policies on a tabular instance

    The naive policy maximizes ``R~`` over observed actions, as a learner
    does that trusts the observational data (factual weight 1). The robust
    policy maximizes the causal lower bound.

    Arguments:
        model: Ground-truth CMDP, used only to score both policies.
        nominal: Observational model the policies are derived from.

    Returns:
        One row per policy with the chosen action in the initial state
        and its true value under the initial distribution.
    """
    uniform = np.full((model.n_states, model.n_actions),
                      1.0 / model.n_actions)
    problem = BoundProblem(nominal=nominal, policy=uniform,
                           gamma=model.gamma,
                           reward_bounds=model.reward_bounds)
    robust = robust_greedy_improve(problem).policy
    naive = greedy_policy(np.where(nominal.visited, nominal.reward, -np.inf))

    rows = []
    for name, policy in ((MODE_FQL, naive), (MODE_CFQL, robust)):
        value = true_policy_value(model, policy)
        rows.append({'policy': name,
                     ACTION: int(np.argmax(policy[0])),
                     TRUE_VALUE: float(model.initial @ value)})
    return pd.DataFrame(rows)
