"""
Surrogate-gradient backpropagation for LM-HT layers.

The LM-HT rule detaches the temporal chain v(t-1) -> m(t): the gradient of
m(t) is only its spatial term dL/ds(t) * ds(t)/dm(t), and gradient flow across
time steps is left to Omega and lambda. The vanilla BPTT rule keeps the
temporal term and is only defined for single-threshold layers.
"""

from dataclasses import dataclass
from typing import Dict, Iterable, Optional, Union

import numpy as np

from .errors import ConfigError, DimensionError, ModeError
from .numerics import Tensor
from .tgim import TGimParams, raw_gradients

NO_DECAY_SUFFIXES = ('raw_omega', 'raw_leak')

ParamValue = Union[np.ndarray, float]


@dataclass
class LayerCache:
    """
    Everything one layer's forward pass produced, indexed [t, batch, unit].

    inputs holds the incoming spike counts (or analog features for the first
    layer); the layer saw inputs * input_gain. previous is v(t-1), membrane is
    m(t), raw is W x(t) + b before mixing and current is I(t) after mixing.
    """
    inputs: Tensor
    input_gain: float
    weight: Tensor
    bias: Tensor
    raw: Tensor
    current: Tensor
    omega: Tensor
    leak: float
    leak_period: int
    membrane: Tensor
    previous: Tensor
    spikes: np.ndarray
    threshold: float
    levels: int
    v0: float
    tgim: TGimParams

    @property
    def T(self) -> int:
        return self.membrane.shape[0]

    def leak_mask(self) -> np.ndarray:
        """1 on the steps where lambda multiplies v(t-1), 0 elsewhere"""
        return np.array([1.0 if t % self.leak_period == 0 else 0.0 for t in range(self.T)])

    def leak_factors(self) -> np.ndarray:
        return np.where(self.leak_mask() > 0, self.leak, 1.0)


@dataclass
class GradBundle:
    """Gradients of one layer; shapes mirror the parameters they belong to"""
    weight: Tensor
    bias: Tensor
    omega: Tensor
    leak: float
    raw_omega: Tensor
    raw_leak: float
    input_spikes: Tensor

    def to_dict(self) -> Dict[str, ParamValue]:
        return {
            'weight': self.weight,
            'bias': self.bias,
            'omega': self.omega,
            'leak': self.leak,
            'raw_omega': self.raw_omega,
            'raw_leak': self.raw_leak,
            'input_spikes': self.input_spikes,
        }


def surrogate_grad(m: Tensor, threshold: float, levels: int) -> Tensor:
    """Multi-level rectangular surrogate: 1 where theta/2 <= m <= (L + 1/2) theta"""
    m = np.asarray(m, dtype=np.float64)
    inside = (m >= 0.5 * threshold) & (m <= (levels + 0.5) * threshold)
    return inside.astype(np.float64)


def rect_surrogate_grad(m: Tensor, threshold: float) -> Tensor:
    """Rectangular surrogate of the single-threshold neuron: 1 where |m - theta| <= theta/2"""
    m = np.asarray(m, dtype=np.float64)
    return (np.abs(m - threshold) <= 0.5 * threshold).astype(np.float64)


def _check_shapes(grad_spikes: Tensor, cache: LayerCache) -> Tensor:
    grad_spikes = np.asarray(grad_spikes, dtype=np.float64)
    if grad_spikes.shape != cache.membrane.shape:
        raise DimensionError(
            f"spike gradient shape {grad_spikes.shape} does not match cache {cache.membrane.shape}"
        )
    return grad_spikes


def _gradients_from_membrane(grad_membrane: Tensor, cache: LayerCache) -> GradBundle:
    """Shared tail of both rules, starting from dL/dm(t)"""
    T = cache.T
    width_out = cache.weight.shape[0]
    width_in = cache.weight.shape[1]

    # dm(t)/dlambda = v(t-1) on the steps where the leak acts
    grad_leak = float(np.sum(cache.leak_mask().reshape((T,) + (1,) * (grad_membrane.ndim - 1))
                             * grad_membrane * cache.previous))

    # dI(i)/domega[i, j] = raw(j)
    flat_grad = grad_membrane.reshape(T, -1)
    grad_omega = flat_grad @ cache.raw.reshape(T, -1).T

    # I(t) = sum_j omega[t, j] raw(j), so raw(j) collects sum_t omega[t, j] dL/dI(t)
    grad_raw = np.tensordot(cache.omega, grad_membrane, axes=(0, 0))

    x = cache.inputs * cache.input_gain
    grad_weight = grad_raw.reshape(-1, width_out).T @ x.reshape(-1, width_in)
    grad_bias = grad_raw.reshape(-1, width_out).sum(axis=0)
    grad_inputs = (grad_raw @ cache.weight) * cache.input_gain

    grad_raw_omega, grad_raw_leak = raw_gradients(cache.tgim, grad_omega, grad_leak)
    return GradBundle(
        weight=grad_weight,
        bias=grad_bias,
        omega=grad_omega,
        leak=grad_leak,
        raw_omega=grad_raw_omega,
        raw_leak=grad_raw_leak,
        input_spikes=grad_inputs,
    )


def backward_layer(grad_spikes: Tensor, cache: LayerCache) -> GradBundle:
    """
    LM-HT backward pass with the detached temporal chain

    Args:
        grad_spikes: dL/ds(t) for every step, shaped like the layer output
        cache: Cache of the matching forward pass

    Returns:
        GradBundle: Parameter gradients and dL/ds of the layer input

    Raises:
        DimensionError: If the gradient does not match the cache
    """
    grad_spikes = _check_shapes(grad_spikes, cache)
    grad_membrane = grad_spikes * surrogate_grad(cache.membrane, cache.threshold, cache.levels)
    return _gradients_from_membrane(grad_membrane, cache)


def vanilla_bptt_backward(grad_spikes: Tensor, cache: LayerCache) -> GradBundle:
    """
    Classic BPTT for single-threshold layers.

    The temporal term dL/dm(t) * lambda_t * (1 - theta * h(m(t-1))) is added
    to dL/dm(t-1); the reset stays in the graph.

    Raises:
        ModeError: If the layer has more than one threshold level
    """
    if cache.levels != 1:
        raise ModeError(f"vanilla BPTT needs single-threshold layers, got L={cache.levels}")
    grad_spikes = _check_shapes(grad_spikes, cache)
    h = rect_surrogate_grad(cache.membrane, cache.threshold)
    leak = cache.leak_factors()
    grad_membrane = np.zeros_like(grad_spikes)
    for t in reversed(range(cache.T)):
        grad_membrane[t] = grad_spikes[t] * h[t]
        if t + 1 < cache.T:
            grad_membrane[t] += grad_membrane[t + 1] * leak[t + 1] * (1.0 - cache.threshold * h[t])
    return _gradients_from_membrane(grad_membrane, cache)


def sgd_step(params: Dict[str, ParamValue], grads: Dict[str, ParamValue], lr: float,
             weight_decay: float = 0.0, momentum: float = 0.0,
             velocity: Optional[Dict[str, ParamValue]] = None,
             no_decay: Iterable[str] = NO_DECAY_SUFFIXES) -> Dict[str, ParamValue]:
    """
    Plain SGD, p <- p - lr * (g + wd * p), with optional momentum

    Args:
        params: Parameter values by name
        grads: Gradients by name; parameters without a gradient are left alone
        lr: Learning rate (0 leaves everything unchanged)
        weight_decay: L2 coefficient, skipped for names ending in `no_decay`
        momentum: Momentum coefficient; needs `velocity`
        velocity: Momentum buffers by name, updated in place

    Returns:
        dict: Updated parameter values

    Raises:
        ConfigError: If lr or weight_decay is negative
    """
    if lr < 0:
        raise ConfigError(f"learning rate must be non-negative, got {lr}")
    if weight_decay < 0:
        raise ConfigError(f"weight decay must be non-negative, got {weight_decay}")
    no_decay = tuple(no_decay)
    updated = dict(params)
    for name, grad in grads.items():
        value = params[name]
        step = grad + (0.0 if name.endswith(no_decay) else weight_decay) * value
        if momentum and velocity is not None:
            step = momentum * velocity.get(name, 0.0) + step
            velocity[name] = step
        new_value = value - lr * step
        updated[name] = float(new_value) if isinstance(value, float) else new_value
    return updated
