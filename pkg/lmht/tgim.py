"""
Temporal-Global Information Matrix (T-GIM) and the learnable leak.

Each layer mixes its raw per-step synaptic currents across all T steps,
I(t) = sum_j omega[t, j] * raw(j). Omega and the leak lambda are stored as
pre-sigmoid logits; the constrained view is omega = sigmoid(raw) in (0, 1) and
lambda = 2 * sigmoid(raw_leak) in (0, 2), so raw_leak = 0 gives lambda = 1.

Identity mode keeps exact 0/1 entries and bypasses the sigmoid. It exists for
vanilla-degeneration runs and for reparameterized layers, and is never trained.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import ConfigError, DimensionError
from .numerics import Tensor, logit, sigmoid

MIXING_MODES = ('uniform', 'identity')


@dataclass
class TGimParams:
    """
    Mixing logits, leak logit and the sigmoid-bypass flag.

    With `bypass` set, raw_omega and raw_leak are the constrained values
    themselves.
    """
    raw_omega: Tensor
    raw_leak: float = 0.0
    bypass: bool = False

    def __post_init__(self):
        self.raw_omega = np.asarray(self.raw_omega, dtype=np.float64)
        if self.raw_omega.ndim != 2 or self.raw_omega.shape[0] != self.raw_omega.shape[1]:
            raise DimensionError(f"T-GIM must be square, got shape {self.raw_omega.shape}")
        self.raw_leak = float(self.raw_leak)
        self.bypass = bool(self.bypass)

    @property
    def T(self) -> int:
        return self.raw_omega.shape[0]

    @property
    def trainable(self) -> bool:
        return not self.bypass

    def copy(self) -> 'TGimParams':
        return TGimParams(self.raw_omega.copy(), self.raw_leak, self.bypass)


def init_params(mode: str, T: int) -> TGimParams:
    """
    Initial mixing parameters

    Args:
        mode: 'uniform' (omega = 1/T, lambda = 1) or 'identity' (frozen diag(1..1), lambda = 1)
        T: Number of time steps

    Returns:
        TGimParams: Fresh parameters

    Raises:
        ConfigError: If the mode is unknown or T < 1
    """
    if T < 1:
        raise ConfigError(f"T must be at least 1, got {T}")
    if mode == 'uniform':
        return TGimParams(np.full((T, T), float(logit(1.0 / T))), raw_leak=0.0)
    if mode == 'identity':
        return TGimParams(np.eye(T), raw_leak=1.0, bypass=True)
    raise ConfigError(f"Unsupported mixing mode: {mode}")


def constrained_view(params: TGimParams) -> Tuple[Tensor, float]:
    """Return (Omega, lambda) as used by the forward pass"""
    if params.bypass:
        return params.raw_omega.copy(), params.raw_leak
    return sigmoid(params.raw_omega), float(2.0 * sigmoid(params.raw_leak))


def mix(omega: Tensor, raw: Tensor) -> Tensor:
    """out(t) = sum_j omega[t, j] * raw(j) for raw[T, ...]"""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim < 1 or raw.shape[0] != omega.shape[1]:
        raise DimensionError(f"currents have {raw.shape[:1]} steps, T-GIM expects {omega.shape[1]}")
    return np.tensordot(omega, raw, axes=(1, 0))


def mix_currents(params: TGimParams, raw: Tensor) -> Tensor:
    """Mix raw currents[T x width] with the constrained T-GIM of `params`"""
    omega, _ = constrained_view(params)
    return mix(omega, raw)


def raw_gradients(params: TGimParams, grad_omega: Tensor, grad_leak: float) -> Tuple[Tensor, float]:
    """Chain constrained-view gradients back to the logits"""
    if params.bypass:
        return np.array(grad_omega, dtype=np.float64), float(grad_leak)
    omega = sigmoid(params.raw_omega)
    half_leak = float(sigmoid(params.raw_leak))
    return grad_omega * omega * (1.0 - omega), float(grad_leak * 2.0 * half_leak * (1.0 - half_leak))
