"""Multilayer perceptrons with exact reverse-mode gradients"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.special import expit, ndtr

from .C import *  # noqa: F403

logger = logging.getLogger(__name__)
__all__ = ['MlpParams', 'init_mlp', 'forward', 'backward',
           'parameter_count', 'gradient_check', 'random_gradient_checks',
           'zeros_like_params']

_SQRT_2PI = np.sqrt(2.0 * np.pi)


@dataclass
class MlpParams:
    """Parameters of a dense feed-forward network

    Weights are stored as ``(in, out)`` matrices so that a layer computes
    ``inputs @ W + b`` on a batch of row vectors.

    Attributes:
        weights: Weight matrix per layer.
        biases: Bias vector per layer.
        activation: Activation applied after every hidden layer.
        final_activation: Activation applied after the last layer.
    """
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    activation: str = RELU
    final_activation: str = IDENTITY

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"Unknown activation '{self.activation}'. "
                             f"Must be one of {ACTIVATIONS}.")
        if self.final_activation not in FINAL_ACTIVATIONS:
            raise ValueError(
                f"Unknown final activation '{self.final_activation}'. "
                f"Must be one of {FINAL_ACTIVATIONS}.")
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("Need one bias per weight matrix and at least "
                             "one layer.")
        for i_layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(
                    f"Layer {i_layer}: weight shape {w.shape} and bias "
                    f"shape {b.shape} are incompatible.")
            if i_layer and self.weights[i_layer - 1].shape[1] != w.shape[0]:
                raise ValueError(
                    f"Layer {i_layer}: expects {w.shape[0]} inputs, previous "
                    f"layer produces {self.weights[i_layer - 1].shape[1]}.")

    @property
    def layer_sizes(self) -> List[int]:
        """Extents of all layers, input first"""
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def n_inputs(self) -> int:
        return self.weights[0].shape[0]

    @property
    def n_outputs(self) -> int:
        return self.weights[-1].shape[1]

    def tensors(self) -> List[np.ndarray]:
        """All parameter tensors as ``[W0, b0, W1, b1, ...]``"""
        result = []
        for w, b in zip(self.weights, self.biases):
            result.extend((w, b))
        return result

    def with_tensors(self, tensors: Sequence[np.ndarray]) -> 'MlpParams':
        """New parameter set of the same architecture from flat tensors

        Arguments:
            tensors: Tensors in the order returned by :meth:`tensors`.
        """
        if len(tensors) != 2 * len(self.weights):
            raise ValueError(f"Expected {2 * len(self.weights)} tensors, "
                             f"got {len(tensors)}.")
        return MlpParams(weights=[np.array(t) for t in tensors[0::2]],
                         biases=[np.array(t) for t in tensors[1::2]],
                         activation=self.activation,
                         final_activation=self.final_activation)

    def copy(self) -> 'MlpParams':
        return self.with_tensors(self.tensors())


def init_mlp(
        layer_sizes: Sequence[int],
        activation: str = RELU,
        final_activation: str = IDENTITY,
        rng: Optional[np.random.Generator] = None,
        final_scale: float = 1.0
) -> MlpParams:
    """Create a network with uniform fan-in scaled weights

    Arguments:
        layer_sizes: Extents of all layers, input first.
        activation: Hidden activation.
        final_activation: Output activation.
        rng: Random generator. A fresh default generator if not provided.
        final_scale: Multiplier on the last layer's initial weights and
            biases. Small values start the network close to zero output.

    Returns:
        The initialized parameters.
    """
    if len(layer_sizes) < 2 or any(int(n) < 1 for n in layer_sizes):
        raise ValueError(f"Invalid layer sizes {list(layer_sizes)}.")
    if rng is None:
        rng = np.random.default_rng()

    weights, biases = [], []
    for i_layer, (n_in, n_out) in enumerate(
            zip(layer_sizes[:-1], layer_sizes[1:])):
        bound = 1.0 / np.sqrt(n_in)
        scale = final_scale if i_layer == len(layer_sizes) - 2 else 1.0
        weights.append(scale * rng.uniform(-bound, bound, size=(n_in, n_out)))
        biases.append(scale * rng.uniform(-bound, bound, size=n_out))
    return MlpParams(weights=weights, biases=biases, activation=activation,
                     final_activation=final_activation)


def zeros_like_params(params: MlpParams) -> MlpParams:
    """Parameter set of the same architecture filled with zeros"""
    return params.with_tensors([np.zeros_like(t) for t in params.tensors()])


def parameter_count(params: MlpParams) -> int:
    """Number of scalars, i.e. sum of ``(in + 1) * out`` over layers"""
    return sum((n_in + 1) * n_out for n_in, n_out
               in zip(params.layer_sizes[:-1], params.layer_sizes[1:]))


def _activate(name: str, pre: np.ndarray) -> np.ndarray:
    if name == RELU:
        return np.maximum(pre, 0.0)
    if name == TANH:
        return np.tanh(pre)
    if name == GELU:
        return pre * ndtr(pre)
    if name == SIGMOID:
        return expit(pre)
    if name == IDENTITY:
        return pre
    raise ValueError(f"Unknown activation '{name}'.")


def _activation_derivative(
        name: str, pre: np.ndarray, post: np.ndarray) -> np.ndarray:
    if name == RELU:
        return (pre > 0.0).astype(float)
    if name == TANH:
        return 1.0 - post ** 2
    if name == GELU:
        return ndtr(pre) + pre * np.exp(-0.5 * pre ** 2) / _SQRT_2PI
    if name == SIGMOID:
        return post * (1.0 - post)
    if name == IDENTITY:
        return np.ones_like(pre)
    raise ValueError(f"Unknown activation '{name}'.")


def _as_batch(params: MlpParams, inputs) -> Tuple[np.ndarray, bool]:
    x = np.asarray(inputs, dtype=float)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[np.newaxis, :]
    if x.ndim != 2 or x.shape[1] != params.n_inputs:
        raise ValueError(
            f"Layer 0: expects input dimension {params.n_inputs}, got "
            f"shape {np.shape(inputs)}.")
    return x, squeeze


def _forward_trace(params: MlpParams, x: np.ndarray):
    """Pre- and post-activations of every layer"""
    pres, posts = [], [x]
    n_layers = len(params.weights)
    for i_layer, (w, b) in enumerate(zip(params.weights, params.biases)):
        pre = posts[-1] @ w + b
        name = params.final_activation if i_layer == n_layers - 1 \
            else params.activation
        pres.append(pre)
        posts.append(_activate(name, pre))
    return pres, posts


def forward(params: MlpParams, inputs) -> np.ndarray:
    """Evaluate the network

    Arguments:
        params: Network parameters.
        inputs: Batch of shape ``(n, n_inputs)``, or a single input vector.

    Returns:
        Outputs of shape ``(n, n_outputs)`` (or ``(n_outputs,)`` for a
        single input vector).

    Raises:
        ValueError: if the input dimension does not match the first layer.
    """
    x, squeeze = _as_batch(params, inputs)
    _, posts = _forward_trace(params, x)
    return posts[-1][0] if squeeze else posts[-1]


def backward(
        params: MlpParams,
        inputs,
        upstream_grad
) -> Tuple[MlpParams, np.ndarray]:
    """Reverse-mode gradients of the scalar loss ``sum(upstream * output)``

    Arguments:
        params: Network parameters.
        inputs: Inputs as passed to :func:`forward`.
        upstream_grad: Gradient of the loss with respect to the network
            output, same shape as the output of :func:`forward`.

    Returns:
        Parameter gradients (as :class:`MlpParams`) and the gradient with
        respect to the inputs.

    Raises:
        ValueError: on shape mismatches.
        FloatingPointError: if the upstream gradient is not finite.
    """
    x, squeeze = _as_batch(params, inputs)
    upstream = np.asarray(upstream_grad, dtype=float)
    if squeeze:
        upstream = upstream[np.newaxis, ...]
    if upstream.shape != (x.shape[0], params.n_outputs):
        raise ValueError(
            f"Layer {len(params.weights) - 1}: upstream gradient shape "
            f"{np.shape(upstream_grad)} does not match output shape "
            f"{(x.shape[0], params.n_outputs)}.")
    if not np.all(np.isfinite(upstream)):
        raise FloatingPointError("Non-finite upstream gradient.")

    pres, posts = _forward_trace(params, x)
    n_layers = len(params.weights)
    weight_grads = [None] * n_layers
    bias_grads = [None] * n_layers
    delta = upstream
    for i_layer in reversed(range(n_layers)):
        name = params.final_activation if i_layer == n_layers - 1 \
            else params.activation
        delta = delta * _activation_derivative(
            name, pres[i_layer], posts[i_layer + 1])
        weight_grads[i_layer] = posts[i_layer].T @ delta
        bias_grads[i_layer] = delta.sum(axis=0)
        delta = delta @ params.weights[i_layer].T

    grads = MlpParams(weights=weight_grads, biases=bias_grads,
                      activation=params.activation,
                      final_activation=params.final_activation)
    return grads, (delta[0] if squeeze else delta)


def _relu_gates(params: MlpParams, x: np.ndarray) -> List[np.ndarray]:
    if params.activation != RELU:
        return []
    pres, _ = _forward_trace(params, x)
    return [pre > 0.0 for pre in pres[:-1]]


def gradient_check(
        params: MlpParams,
        inputs: np.ndarray,
        rng: Optional[np.random.Generator] = None,
        h: float = 1e-5
) -> float:
    """Compare :func:`backward` against central finite differences

    The scalar loss is ``sum(r * forward(inputs))`` for a random projection
    ``r``. Relative error is measured per tensor as
    ``max|a - n| / max(max|a|, max|n|, 1e-6)``. Coordinates whose
    perturbation switches a ReLU gate are not differentiable there and are
    skipped.

    Arguments:
        params: Network to check.
        inputs: Input batch.
        rng: Random generator for the projection.
        h: Finite-difference step.

    Returns:
        Maximum relative error over all parameter tensors and the input.
    """
    if rng is None:
        rng = np.random.default_rng()
    x = np.asarray(inputs, dtype=float)
    projection = rng.standard_normal((x.shape[0], params.n_outputs))
    grads, input_grad = backward(params, x, projection)
    gates = _relu_gates(params, x)

    def loss_and_gates(p, xx):
        value = float(np.sum(projection * forward(p, xx)))
        return value, _relu_gates(p, xx)

    def same_gates(other):
        return all(np.array_equal(g0, g1) for g0, g1 in zip(gates, other))

    def rel_error(analytic, numeric, keep):
        if not np.any(keep):
            return 0.0
        a, n = analytic[keep], numeric[keep]
        scale = max(np.max(np.abs(a)), np.max(np.abs(n)), 1e-6)
        return float(np.max(np.abs(a - n)) / scale)

    tensors = params.tensors()
    errors = []
    for i_tensor, analytic in enumerate(grads.tensors()):
        numeric = np.zeros_like(analytic)
        keep = np.ones(analytic.shape, dtype=bool)
        for index in np.ndindex(*analytic.shape):
            plus = [t.copy() for t in tensors]
            minus = [t.copy() for t in tensors]
            plus[i_tensor][index] += h
            minus[i_tensor][index] -= h
            f_plus, g_plus = loss_and_gates(params.with_tensors(plus), x)
            f_minus, g_minus = loss_and_gates(params.with_tensors(minus), x)
            if not (same_gates(g_plus) and same_gates(g_minus)):
                keep[index] = False
                continue
            numeric[index] = (f_plus - f_minus) / (2 * h)
        errors.append(rel_error(analytic, numeric, keep))

    numeric = np.zeros_like(x)
    keep = np.ones(x.shape, dtype=bool)
    for index in np.ndindex(*x.shape):
        plus, minus = x.copy(), x.copy()
        plus[index] += h
        minus[index] -= h
        f_plus, g_plus = loss_and_gates(params, plus)
        f_minus, g_minus = loss_and_gates(params, minus)
        if not (same_gates(g_plus) and same_gates(g_minus)):
            keep[index] = False
            continue
        numeric[index] = (f_plus - f_minus) / (2 * h)
    errors.append(rel_error(input_grad, numeric, keep))
    return max(errors)


def random_gradient_checks(
        n_configs: int = 50,
        seed: int = 0,
        max_depth: int = 4,
        max_width: int = 6
) -> pd.DataFrame:
    """Run :func:`gradient_check` on randomly drawn architectures

    Arguments:
        n_configs: Number of random networks.
        seed: Seed for architectures, parameters and inputs.
        max_depth: Maximum number of layers.
        max_width: Maximum layer extent.

    Returns:
        One row per network with its architecture and maximum relative
        error.
    """
    rng = np.random.default_rng(seed)
    rows = []
    for i_config in range(n_configs):
        depth = int(rng.integers(1, max_depth + 1))
        sizes = [int(n) for n in rng.integers(1, max_width + 1, depth + 1)]
        activation = ACTIVATIONS[i_config % len(ACTIVATIONS)]
        final_activation = FINAL_ACTIVATIONS[
            int(rng.integers(len(FINAL_ACTIVATIONS)))]
        params = init_mlp(sizes, activation, final_activation, rng)
        inputs = rng.standard_normal((int(rng.integers(1, 5)), sizes[0]))
        error = gradient_check(params, inputs, rng)
        logger.debug(f"Gradient check {i_config}: {sizes} {activation}/"
                     f"{final_activation} -> {error:.3g}")
        rows.append({'config': i_config,
                     'layer_sizes': ' '.join(map(str, sizes)),
                     'activation': activation,
                     'final_activation': final_activation,
                     'max_relative_error': error})
    return pd.DataFrame(rows)
