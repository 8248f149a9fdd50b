"""
Layered LM-HT networks: specification, forward pass, readout and backward pass.

Each layer computes raw(t) = W x(t) + b, mixes it across time with its T-GIM,
and runs LM-HT dynamics. Analog features drive the first layer directly at
every step, scaled by `input_scale`. Every later layer sees the previous
layer's spike counts times that layer's threshold. The readout is the output
spike rate (sum_t s(t) * theta) / (L * T).
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, NamedTuple, Optional, Sequence

import numpy as np

from .errors import ConfigError, DimensionError
from .neuron import NeuronConfig, integrate
from .numerics import Rng, Tensor, affine
from .stbp import GradBundle, LayerCache, ParamValue, backward_layer, vanilla_bptt_backward
from .tgim import MIXING_MODES, TGimParams, constrained_view, init_params, mix

logger = logging.getLogger('lmht.network')

BACKWARD_RULES = {
    'detached': backward_layer,
    'bptt': vanilla_bptt_backward,
}

INIT_GAIN = 6.0


def init_bound(fan_in: int) -> float:
    """Half-width of the uniform weight initialization, sqrt(INIT_GAIN / fan_in)"""
    return float(np.sqrt(INIT_GAIN / fan_in))


@dataclass
class LayerSpec:
    """
    One fully connected spiking layer.

    The leak of a network layer is owned by its T-GIM parameters; the `leak`
    field of `neuron` is ignored and filled in at forward time.
    """
    weight: Tensor
    bias: Tensor
    neuron: NeuronConfig
    tgim: TGimParams

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != self.weight.shape[:1]:
            raise DimensionError(f"bad layer shapes: weight {self.weight.shape}, bias {self.bias.shape}")

    @property
    def width_in(self) -> int:
        return self.weight.shape[1]

    @property
    def width_out(self) -> int:
        return self.weight.shape[0]

    def config(self) -> NeuronConfig:
        """Neuron config with the constrained leak filled in"""
        _, leak = constrained_view(self.tgim)
        return replace(self.neuron, leak=leak)

    def copy(self) -> 'LayerSpec':
        return LayerSpec(self.weight.copy(), self.bias.copy(), self.neuron, self.tgim.copy())

    def to_dict(self) -> Dict[str, Any]:
        return {
            'weight': self.weight,
            'bias': self.bias,
            'threshold': float(self.neuron.threshold),
            'levels': int(self.neuron.levels),
            'v0': float(self.neuron.v0),
            'leak_period': int(self.neuron.leak_period),
            'raw_omega': self.tgim.raw_omega,
            'raw_leak': float(self.tgim.raw_leak),
            'bypass': bool(self.tgim.bypass),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'LayerSpec':
        neuron = NeuronConfig(
            threshold=data['threshold'],
            levels=int(data['levels']),
            v0=data['v0'],
            leak_period=int(data['leak_period']),
        )
        tgim = TGimParams(data['raw_omega'], raw_leak=data['raw_leak'], bypass=data['bypass'])
        return cls(data['weight'], data['bias'], neuron, tgim)


@dataclass
class NetworkSpec:
    """
    Full, serializable description of an LM-HT network

    Args:
        layers: Layers in order, input first
        horizon: Number of time steps T shared by all layers
        input_scale: Multiplier on the analog features fed to the first layer
        first_layer_scaling: Whether input_scale came from the x L rule
        encoding: Input encoding ('direct' analog current)
        readout: Readout head ('rate')
        meta: Creation metadata (seed, command line, origin)
    """
    layers: List[LayerSpec]
    horizon: int
    input_scale: float = 1.0
    first_layer_scaling: bool = True
    encoding: str = 'direct'
    readout: str = 'rate'
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not self.layers:
            raise ConfigError("a network needs at least one layer")
        if self.horizon < 1:
            raise ConfigError(f"horizon must be at least 1, got {self.horizon}")
        for index, layer in enumerate(self.layers):
            if layer.tgim.T != self.horizon:
                raise DimensionError(
                    f"layer {index} T-GIM is {layer.tgim.T}x{layer.tgim.T}, horizon is {self.horizon}"
                )
            if index and layer.width_in != self.layers[index - 1].width_out:
                raise DimensionError(
                    f"layer {index} expects width {layer.width_in}, "
                    f"previous layer emits {self.layers[index - 1].width_out}"
                )
        self.input_scale = float(self.input_scale)

    @property
    def widths(self) -> List[int]:
        return [self.layers[0].width_in] + [layer.width_out for layer in self.layers]

    @property
    def output(self) -> LayerSpec:
        return self.layers[-1]

    def copy(self) -> 'NetworkSpec':
        return NetworkSpec(
            layers=[layer.copy() for layer in self.layers],
            horizon=self.horizon,
            input_scale=self.input_scale,
            first_layer_scaling=self.first_layer_scaling,
            encoding=self.encoding,
            readout=self.readout,
            meta=dict(self.meta),
        )

    def parameters(self, trainable_only: bool = True) -> Dict[str, ParamValue]:
        """Named parameter values; frozen (bypassed) T-GIMs are left out when trainable_only"""
        params: Dict[str, ParamValue] = {}
        for index, layer in enumerate(self.layers):
            params[f'layer{index}.weight'] = layer.weight
            params[f'layer{index}.bias'] = layer.bias
            if layer.tgim.trainable or not trainable_only:
                params[f'layer{index}.raw_omega'] = layer.tgim.raw_omega
                params[f'layer{index}.raw_leak'] = layer.tgim.raw_leak
        return params

    def assign(self, params: Dict[str, ParamValue]):
        """Write named values back into the layers"""
        for name, value in params.items():
            prefix, attribute = name.split('.', 1)
            layer = self.layers[int(prefix[len('layer'):])]
            if attribute in ('weight', 'bias'):
                setattr(layer, attribute, np.asarray(value, dtype=np.float64))
            elif attribute == 'raw_omega':
                layer.tgim.raw_omega = np.asarray(value, dtype=np.float64)
            elif attribute == 'raw_leak':
                layer.tgim.raw_leak = float(value)
            else:
                raise KeyError(f"unknown parameter {name}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            'kind': 'snn',
            'horizon': int(self.horizon),
            'input_scale': float(self.input_scale),
            'first_layer_scaling': bool(self.first_layer_scaling),
            'encoding': self.encoding,
            'readout': self.readout,
            'meta': dict(self.meta),
            'layers': [layer.to_dict() for layer in self.layers],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'NetworkSpec':
        return cls(
            layers=[LayerSpec.from_dict(layer) for layer in data['layers']],
            horizon=int(data['horizon']),
            input_scale=data['input_scale'],
            first_layer_scaling=bool(data['first_layer_scaling']),
            encoding=data['encoding'],
            readout=data['readout'],
            meta=dict(data.get('meta', {})),
        )


@dataclass
class SpikeStats:
    """
    Spike counts per layer, summed over the batch, indexed [t, unit].

    fan_out[i] is the number of synapses each unit of layer i drives (0 for
    the output layer). Merging adds counts, so the merge order does not matter.
    """
    counts: List[np.ndarray]
    fan_out: List[int]
    samples: int

    def merge(self, other: 'SpikeStats') -> 'SpikeStats':
        if self.fan_out != other.fan_out or len(self.counts) != len(other.counts):
            raise DimensionError("cannot merge spike statistics of different networks")
        return SpikeStats(
            counts=[a + b for a, b in zip(self.counts, other.counts)],
            fan_out=list(self.fan_out),
            samples=self.samples + other.samples,
        )

    def firing_rates(self) -> List[float]:
        """Mean spike count per unit per step per sample, for each layer"""
        return [float(c.sum()) / max(c.size * self.samples, 1) for c in self.counts]


class ForwardResult(NamedTuple):
    logits: Tensor
    caches: Optional[List[LayerCache]]
    stats: SpikeStats


def build_network(arch: Sequence[int], T: int, L: int, seed: int, mixing: str = 'uniform',
                  first_layer_scaling: bool = True, threshold: float = 1.0,
                  v0: float = 0.0) -> NetworkSpec:
    """
    Freshly initialized network

    Weights are uniform in +-sqrt(6 / fan_in), biases zero, thresholds fixed.
    At v0 = 0 this gain keeps the membranes of every layer, the output layer
    included, inside the surrogate window for a useful share of inputs.

    Args:
        arch: Layer widths, input first (at least two entries)
        T: Time steps
        L: Threshold levels of every layer
        seed: Initialization seed
        mixing: 'uniform' (LM-HT init) or 'identity' (vanilla)
        first_layer_scaling: Multiply the analog input by L
        threshold: Threshold of every layer
        v0: Initial membrane potential of every layer

    Returns:
        NetworkSpec: The new network

    Raises:
        ConfigError: If the architecture or mixing mode is invalid
    """
    arch = [int(w) for w in arch]
    if len(arch) < 2 or any(w < 1 for w in arch):
        raise ConfigError(f"architecture needs at least two positive widths, got {arch}")
    if mixing not in MIXING_MODES:
        raise ConfigError(f"Unsupported mixing mode: {mixing}")
    rng = Rng(seed)
    layers = []
    for index, (width_in, width_out) in enumerate(zip(arch[:-1], arch[1:])):
        bound = init_bound(width_in)
        weight = rng.derive(index).uniform(-bound, bound, (width_out, width_in))
        layers.append(LayerSpec(
            weight=weight,
            bias=np.zeros(width_out),
            neuron=NeuronConfig(threshold=threshold, levels=L, v0=v0),
            tgim=init_params(mixing, T),
        ))
    logger.debug(f"Built network {arch} with T={T}, L={L}, mixing={mixing}")
    return NetworkSpec(
        layers=layers,
        horizon=T,
        input_scale=float(L) if first_layer_scaling else 1.0,
        first_layer_scaling=first_layer_scaling,
        meta={'seed': int(seed)},
    )


def forward(net: NetworkSpec, features: Tensor, record: bool = False) -> ForwardResult:
    """
    Run the network on a batch of analog features

    Args:
        net: Network to run
        features: Tensor[batch x width_in]
        record: Keep per-layer caches for the backward pass

    Returns:
        ForwardResult: (logits [batch x classes], caches or None, spike statistics)

    Raises:
        DimensionError: If the feature width does not match the first layer
    """
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if features.shape[-1] != net.layers[0].width_in:
        raise DimensionError(
            f"features have width {features.shape[-1]}, network expects {net.layers[0].width_in}"
        )
    T = net.horizon
    inputs = np.broadcast_to(features, (T,) + features.shape)
    gain = net.input_scale
    caches: List[LayerCache] = []
    counts = []
    for layer in net.layers:
        omega, leak = constrained_view(layer.tgim)
        cfg = replace(layer.neuron, leak=leak)
        raw = affine(layer.weight, inputs * gain, layer.bias)
        current = mix(omega, raw)
        trace = integrate(cfg, current)
        if record:
            caches.append(LayerCache(
                inputs=inputs,
                input_gain=gain,
                weight=layer.weight,
                bias=layer.bias,
                raw=raw,
                current=current,
                omega=omega,
                leak=leak,
                leak_period=cfg.leak_period,
                membrane=trace.membrane,
                previous=trace.previous,
                spikes=trace.spikes,
                threshold=cfg.threshold,
                levels=cfg.levels,
                v0=cfg.v0,
                tgim=layer.tgim.copy(),
            ))
        counts.append(trace.spikes.sum(axis=1))
        inputs, gain = trace.spikes, cfg.threshold

    out = net.output.neuron
    logits = inputs.sum(axis=0) * out.threshold / (out.levels * T)
    fan_out = [layer.width_out for layer in net.layers[1:]] + [0]
    stats = SpikeStats(counts=counts, fan_out=fan_out, samples=features.shape[0])
    return ForwardResult(logits, caches if record else None, stats)


def loss_and_grad(logits: Tensor, labels: np.ndarray):
    """
    Mean softmax cross-entropy and its gradient

    Args:
        logits: Tensor[batch x classes]
        labels: Integer class per sample

    Returns:
        tuple: (loss, dloss/dlogits)

    Raises:
        DimensionError: If a label is outside the class range
    """
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    batch, classes = logits.shape
    if labels.shape[0] != batch:
        raise DimensionError(f"{labels.shape[0]} labels for a batch of {batch}")
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise DimensionError(f"labels must lie in [0, {classes}), got range [{labels.min()}, {labels.max()}]")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_norm
    rows = np.arange(batch)
    loss = float(-log_probs[rows, labels].mean())
    grad = np.exp(log_probs)
    grad[rows, labels] -= 1.0
    return loss, grad / batch


def accuracy(logits: Tensor, labels: np.ndarray) -> float:
    return float(np.mean(np.argmax(logits, axis=1) == np.asarray(labels)))


def backward(net: NetworkSpec, caches: List[LayerCache], grad_logits: Tensor,
             rule: str = 'detached') -> List[GradBundle]:
    """
    Backpropagate a logit gradient through every layer

    Args:
        net: Network the caches came from
        caches: Per-layer caches of a recorded forward pass
        grad_logits: dL/dlogits [batch x classes]
        rule: 'detached' (LM-HT) or 'bptt' (vanilla reference)

    Returns:
        list: GradBundle per layer, input layer first
    """
    if rule not in BACKWARD_RULES:
        raise ConfigError(f"Unsupported backward rule: {rule}")
    step_backward = BACKWARD_RULES[rule]
    out = net.output.neuron
    T = net.horizon
    # logits = sum_t s(t) * theta / (L * T)
    grad = np.broadcast_to(np.asarray(grad_logits) * out.threshold / (out.levels * T),
                           (T,) + np.shape(grad_logits)).copy()
    bundles: List[Optional[GradBundle]] = [None] * len(caches)
    for index in reversed(range(len(caches))):
        bundles[index] = step_backward(grad, caches[index])
        grad = bundles[index].input_spikes
    return bundles


def gradients_by_name(net: NetworkSpec, bundles: List[GradBundle]) -> Dict[str, ParamValue]:
    """Flatten bundles into the naming used by NetworkSpec.parameters()"""
    grads: Dict[str, ParamValue] = {}
    for index, (layer, bundle) in enumerate(zip(net.layers, bundles)):
        grads[f'layer{index}.weight'] = bundle.weight
        grads[f'layer{index}.bias'] = bundle.bias
        if layer.tgim.trainable:
            grads[f'layer{index}.raw_omega'] = bundle.raw_omega
            grads[f'layer{index}.raw_leak'] = bundle.raw_leak
    return grads
