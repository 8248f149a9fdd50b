"""
Forward dynamics of IF, LIF, M-HT and LM-HT neuron layers with soft reset.

A layer charges m(t) = lambda * v(t-1) + I(t), emits an integer spike count
s(t) in [0, L] from L equidistant thresholds and resets softly with
v(t) = m(t) - s(t) * theta. L = 1 is the vanilla LIF neuron; lambda = 1 on top
of that is the IF neuron.
"""

from dataclasses import dataclass
from typing import NamedTuple, Tuple

import numpy as np

from .errors import ConfigError, DimensionError
from .numerics import Tensor


@dataclass(frozen=True)
class NeuronConfig:
    """
    Per-layer neuron constants

    Args:
        threshold: Firing threshold theta (> 0)
        levels: Number of threshold levels L (>= 1)
        leak: Membrane leak lambda
        v0: Initial membrane potential
        leak_period: Leak is applied on steps t with t % leak_period == 0 and
            is 1 elsewhere; a reparameterized layer uses its window length
    """
    threshold: float = 1.0
    levels: int = 1
    leak: float = 1.0
    v0: float = 0.0
    leak_period: int = 1

    def __post_init__(self):
        if not self.threshold > 0:
            raise ConfigError(f"threshold must be positive, got {self.threshold}")
        if int(self.levels) != self.levels or self.levels < 1:
            raise ConfigError(f"levels must be a positive integer, got {self.levels}")
        if int(self.leak_period) != self.leak_period or self.leak_period < 1:
            raise ConfigError(f"leak_period must be a positive integer, got {self.leak_period}")

    def leak_at(self, t: int) -> float:
        return self.leak if t % self.leak_period == 0 else 1.0

    def leak_factors(self, steps: int) -> np.ndarray:
        """Leak applied at each of `steps` steps"""
        return np.array([self.leak_at(t) for t in range(steps)], dtype=np.float64)


@dataclass(frozen=True)
class NeuronLayerState:
    """Membrane potential after the last reset and the number of steps taken"""
    v: Tensor
    t: int = 0

    @classmethod
    def initial(cls, cfg: NeuronConfig, shape) -> 'NeuronLayerState':
        return cls(v=np.full(shape, cfg.v0, dtype=np.float64), t=0)


class Trace(NamedTuple):
    """Full record of a simulated sequence, indexed [t, ...]"""
    spikes: np.ndarray
    membrane: Tensor
    potentials: Tensor
    previous: Tensor


def mht_fire(m: Tensor, threshold: float, levels: int) -> np.ndarray:
    """
    Spike counts of the equidistant multi-threshold neuron.

    s = clip(floor(m / theta), 0, L): L above L*theta, k between k*theta and
    (k+1)*theta, 0 below theta (including any negative potential).
    """
    counts = np.clip(np.floor(np.asarray(m, dtype=np.float64) / threshold), 0, levels)
    return counts.astype(np.int64)


def mht_step(state: NeuronLayerState, current: Tensor,
             cfg: NeuronConfig) -> Tuple[np.ndarray, NeuronLayerState]:
    """
    Advance one step: charge, fire, soft reset

    Args:
        state: Potential after the previous reset
        current: Input current I(t), same shape as state.v
        cfg: Neuron constants

    Returns:
        tuple: (spike counts, new state)

    Raises:
        DimensionError: If current and state widths differ
    """
    current = np.asarray(current, dtype=np.float64)
    if current.shape != state.v.shape:
        raise DimensionError(f"current shape {current.shape} does not match state {state.v.shape}")
    membrane = cfg.leak_at(state.t) * state.v + current
    spikes = mht_fire(membrane, cfg.threshold, cfg.levels)
    return spikes, NeuronLayerState(v=membrane - spikes * cfg.threshold, t=state.t + 1)


def lif_step(state: NeuronLayerState, current: Tensor,
             cfg: NeuronConfig) -> Tuple[np.ndarray, NeuronLayerState]:
    """Single-threshold step; spikes are binary"""
    if cfg.levels != 1:
        raise ConfigError(f"lif_step needs a single-threshold config, got levels={cfg.levels}")
    return mht_step(state, current, cfg)


def integrate(cfg: NeuronConfig, currents: Tensor) -> Trace:
    """Iterate mht_step from v(0) = cfg.v0 over currents[T, ...] and keep everything"""
    currents = np.asarray(currents, dtype=np.float64)
    if currents.ndim < 1 or currents.shape[0] < 1:
        raise DimensionError(f"need at least one time step, got shape {currents.shape}")
    state = NeuronLayerState.initial(cfg, currents.shape[1:])
    spikes = np.zeros(currents.shape, dtype=np.int64)
    membrane = np.zeros_like(currents)
    potentials = np.zeros_like(currents)
    previous = np.zeros_like(currents)
    for t in range(currents.shape[0]):
        previous[t] = state.v
        membrane[t] = cfg.leak_at(t) * state.v + currents[t]
        spikes[t], state = mht_step(state, currents[t], cfg)
        potentials[t] = state.v
    return Trace(spikes, membrane, potentials, previous)


def run_sequence(cfg: NeuronConfig, currents: Tensor) -> Tuple[np.ndarray, Tensor]:
    """
    Simulate a layer over T steps

    Args:
        cfg: Neuron constants
        currents: Tensor[T x width] (any trailing shape is allowed)

    Returns:
        tuple: (spike train [T x width], membrane potential after each reset [T x width])
    """
    trace = integrate(cfg, currents)
    return trace.spikes, trace.potentials
