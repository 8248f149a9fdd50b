"""
Quantization-clip-floor-shift (QCFS) activation and a small quantized MLP.

    a = (scale / T_q) * clip(floor((x * T_q + shift) / scale), 0, T_q)

The activation takes T_q + 1 values. With shift = scale / 2 it equals the
average firing rate of an IF neuron that starts at half threshold and receives
x at each of T_q steps, which is what makes QCFS networks convertible.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .config import EpochRecord, TrainConfig
from .datasets import minibatches
from .errors import ConfigError, DimensionError, TrainingError
from .network import accuracy, loss_and_grad
from .numerics import Rng, Tensor, affine
from .stbp import NO_DECAY_SUFFIXES, ParamValue, sgd_step

logger = logging.getLogger('lmht.qann')

# Floor applied to learnable scales after each update.
MIN_SCALE = 1e-3


@dataclass(frozen=True)
class QcfsConfig:
    """
    QCFS constants

    Args:
        levels: Quantization level T_q (>= 1)
        scale: Scaling factor (> 0), the activation's upper clip value
        shift: Additive shift; None means scale / 2
    """
    levels: int
    scale: float = 1.0
    shift: Optional[float] = None

    def __post_init__(self):
        if int(self.levels) != self.levels or self.levels < 1:
            raise ConfigError(f"quantization level must be a positive integer, got {self.levels}")
        if not self.scale > 0:
            raise ConfigError(f"QCFS scale must be positive, got {self.scale}")

    @property
    def phi(self) -> float:
        return 0.5 * self.scale if self.shift is None else self.shift


class QcfsCache(NamedTuple):
    x: Tensor
    quantized: np.ndarray
    cfg: QcfsConfig


def _quantize(x: Tensor, cfg: QcfsConfig) -> Tuple[Tensor, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    z = (x * cfg.levels + cfg.phi) / cfg.scale
    return z, np.clip(np.floor(z), 0, cfg.levels)


def qcfs_forward(x: Tensor, cfg: QcfsConfig) -> Tensor:
    """Elementwise QCFS activation"""
    _, q = _quantize(x, cfg)
    return cfg.scale / cfg.levels * q


def qcfs_forward_cached(x: Tensor, cfg: QcfsConfig) -> Tuple[Tensor, QcfsCache]:
    _, q = _quantize(x, cfg)
    return cfg.scale / cfg.levels * q, QcfsCache(np.asarray(x, dtype=np.float64), q, cfg)


def qcfs_backward(grad_out: Tensor, cache: QcfsCache) -> Tuple[Tensor, float]:
    """
    Straight-through gradient of QCFS

    The floor is skipped; the input gradient passes wherever
    0 <= (x T_q + shift) / scale <= T_q. The scale gradient goes through the
    output multiplier only: d a / d scale = q / T_q.

    Returns:
        tuple: (gradient w.r.t. x, gradient w.r.t. the scale)
    """
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if grad_out.shape != cache.x.shape:
        raise DimensionError(f"gradient shape {grad_out.shape} does not match cache {cache.x.shape}")
    cfg = cache.cfg
    z = (cache.x * cfg.levels + cfg.phi) / cfg.scale
    inside = (z >= 0) & (z <= cfg.levels)
    grad_scale = float(np.sum(grad_out * cache.quantized / cfg.levels))
    return grad_out * inside, grad_scale


@dataclass
class QcfsLayer:
    weight: Tensor
    bias: Tensor
    scale: float = 1.0

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        self.scale = float(self.scale)
        if self.weight.ndim != 2 or self.bias.shape != self.weight.shape[:1]:
            raise DimensionError(f"bad layer shapes: weight {self.weight.shape}, bias {self.bias.shape}")

    def copy(self) -> 'QcfsLayer':
        return QcfsLayer(self.weight.copy(), self.bias.copy(), self.scale)


@dataclass
class QcfsNetwork:
    """MLP whose every layer, output included, ends in a QCFS activation"""
    layers: List[QcfsLayer]
    levels: int
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not self.layers:
            raise ConfigError("a network needs at least one layer")
        QcfsConfig(self.levels)
        for index in range(1, len(self.layers)):
            if self.layers[index].weight.shape[1] != self.layers[index - 1].weight.shape[0]:
                raise DimensionError(f"layer {index} does not conform to layer {index - 1}")

    @property
    def widths(self) -> List[int]:
        return [self.layers[0].weight.shape[1]] + [layer.weight.shape[0] for layer in self.layers]

    def layer_config(self, index: int) -> QcfsConfig:
        return QcfsConfig(self.levels, self.layers[index].scale)

    def copy(self) -> 'QcfsNetwork':
        return QcfsNetwork([layer.copy() for layer in self.layers], self.levels, dict(self.meta))

    def parameters(self) -> Dict[str, ParamValue]:
        params: Dict[str, ParamValue] = {}
        for index, layer in enumerate(self.layers):
            params[f'layer{index}.weight'] = layer.weight
            params[f'layer{index}.bias'] = layer.bias
            params[f'layer{index}.scale'] = layer.scale
        return params

    def assign(self, params: Dict[str, ParamValue]):
        for name, value in params.items():
            prefix, attribute = name.split('.', 1)
            layer = self.layers[int(prefix[len('layer'):])]
            if attribute == 'scale':
                layer.scale = max(float(value), MIN_SCALE)
            elif attribute in ('weight', 'bias'):
                setattr(layer, attribute, np.asarray(value, dtype=np.float64))
            else:
                raise KeyError(f"unknown parameter {name}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            'kind': 'ann',
            'levels': int(self.levels),
            'meta': dict(self.meta),
            'layers': [{'weight': l.weight, 'bias': l.bias, 'scale': float(l.scale)} for l in self.layers],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'QcfsNetwork':
        layers = [QcfsLayer(l['weight'], l['bias'], l['scale']) for l in data['layers']]
        return cls(layers, int(data['levels']), dict(data.get('meta', {})))


class AnnCache(NamedTuple):
    inputs: Tensor
    qcfs: QcfsCache


def build_qcfs_network(arch: Sequence[int], levels: int, seed: int) -> QcfsNetwork:
    """Uniform +-1/sqrt(fan_in) weights, zero biases, unit scales"""
    arch = [int(w) for w in arch]
    if len(arch) < 2 or any(w < 1 for w in arch):
        raise ConfigError(f"architecture needs at least two positive widths, got {arch}")
    rng = Rng(seed)
    layers = []
    for index, (width_in, width_out) in enumerate(zip(arch[:-1], arch[1:])):
        bound = 1.0 / np.sqrt(width_in)
        weight = rng.derive(index).uniform(-bound, bound, (width_out, width_in))
        layers.append(QcfsLayer(weight, np.zeros(width_out)))
    return QcfsNetwork(layers, levels, meta={'seed': int(seed)})


def ann_forward(ann: QcfsNetwork, features: Tensor, record: bool = False):
    """
    Run the quantized MLP

    Returns:
        tuple: (output activations used as logits, caches or None)
    """
    a = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if a.shape[-1] != ann.widths[0]:
        raise DimensionError(f"features have width {a.shape[-1]}, network expects {ann.widths[0]}")
    caches: List[AnnCache] = []
    for index, layer in enumerate(ann.layers):
        pre = affine(layer.weight, a, layer.bias)
        out, cache = qcfs_forward_cached(pre, ann.layer_config(index))
        if record:
            caches.append(AnnCache(a, cache))
        a = out
    return a, (caches if record else None)


def ann_backward(ann: QcfsNetwork, caches: List[AnnCache], grad_logits: Tensor) -> Dict[str, ParamValue]:
    grads: Dict[str, ParamValue] = {}
    grad = np.asarray(grad_logits, dtype=np.float64)
    for index in reversed(range(len(caches))):
        layer = ann.layers[index]
        grad_pre, grad_scale = qcfs_backward(grad, caches[index].qcfs)
        grads[f'layer{index}.weight'] = grad_pre.T @ caches[index].inputs
        grads[f'layer{index}.bias'] = grad_pre.sum(axis=0)
        grads[f'layer{index}.scale'] = grad_scale
        grad = grad_pre @ layer.weight
    return grads


def evaluate_ann(ann: QcfsNetwork, features: Tensor, labels: np.ndarray) -> Tuple[float, float]:
    """Return (mean loss, accuracy)"""
    logits, _ = ann_forward(ann, features)
    loss, _ = loss_and_grad(logits, labels)
    return loss, accuracy(logits, labels)


def train_qcfs_ann(features: Tensor, labels: np.ndarray, arch: Sequence[int], levels: int,
                   cfg: TrainConfig, ann: Optional[QcfsNetwork] = None):
    """
    Train a QCFS MLP with minibatch SGD and softmax cross-entropy

    Args:
        features: Training inputs [n x d]
        labels: Integer labels [n]
        arch: Layer widths, input first
        levels: Quantization level T_q
        cfg: Hyperparameters; scales are never weight-decayed
        ann: Start from this network instead of a fresh one

    Returns:
        tuple: (trained QcfsNetwork, list of EpochRecord)

    Raises:
        TrainingError: If the loss becomes NaN or infinite
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if features.shape[0] == 0:
        raise ConfigError("cannot train on an empty dataset")
    ann = build_qcfs_network(arch, levels, cfg.seed) if ann is None else ann.copy()
    rng = Rng(cfg.seed, key=(1,))
    velocity: Dict[str, ParamValue] = {}
    no_decay = NO_DECAY_SUFFIXES + ('scale',)
    history: List[EpochRecord] = []
    for epoch in range(cfg.epochs):
        lr = cfg.learning_rate(epoch)
        total = 0.0
        for batch in minibatches(features.shape[0], cfg.batch_size, rng.derive(epoch)):
            logits, caches = ann_forward(ann, features[batch], record=True)
            loss, grad_logits = loss_and_grad(logits, labels[batch])
            if not np.isfinite(loss):
                raise TrainingError("loss is not finite", epoch)
            grads = ann_backward(ann, caches, grad_logits)
            ann.assign(sgd_step(ann.parameters(), grads, lr, cfg.weight_decay,
                                cfg.momentum, velocity, no_decay=no_decay))
            total += loss * len(batch)
        _, acc = evaluate_ann(ann, features, labels)
        history.append(EpochRecord(epoch=epoch, loss=total / features.shape[0], accuracy=acc, lr=lr))
        logger.debug(f"qcfs epoch {epoch}: loss={history[-1].loss:.4f} acc={acc:.4f}")
    if history:
        logger.info(f"QCFS training finished: loss={history[-1].loss:.4f} accuracy={history[-1].accuracy:.4f}")
    return ann, history
