"""
Reparameterization of an L-level, T-step LM-HT network into a single-threshold
LIF network with L*T steps, and the equivalence check between the two.

Every source step becomes a window of L target steps. The T-GIM is expanded
block-wise (each L x L block holds omega[t, i] / L), biases and the analog
input scale are divided by L, and the leak acts only on the first step of each
window. Within a window the target neuron then sees I(t) / L at every step and,
as long as currents and leaked potentials are non-negative, fires exactly the
spikes the source neuron fires at step t and ends the window at the same
potential.
"""

import logging
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional

import numpy as np

from .energy import count_sops
from .errors import ConfigError, DimensionError, UnsupportedLayerError
from .network import LayerSpec, NetworkSpec, forward
from .neuron import NeuronConfig
from .numerics import Rng, Tensor
from .oracle import FAIL, PASS, TrialReport
from .tgim import TGimParams, constrained_view

logger = logging.getLogger('lmht.reparam')

LOGIT_TOLERANCE = 1e-6
MEMBRANE_TOLERANCE = 1e-9
SOP_TOLERANCE = 1e-3
DEFAULT_EQUIVALENCE_INPUTS = 100


@dataclass
class ReparamPlan:
    """Per-layer expanded T-GIMs, rectified biases and leak placement of a reparameterization"""
    source_levels: int
    source_horizon: int
    omegas: List[Tensor]
    biases: List[Tensor]
    leaks: List[float]
    leak_periods: List[int]

    @property
    def target_horizon(self) -> int:
        return self.source_levels * self.source_horizon


def expand_tgim(omega: Tensor, levels: int) -> Tensor:
    """Block-constant [LT x LT] expansion with blocks omega[t, i] / L"""
    omega = np.asarray(omega, dtype=np.float64)
    if levels < 1:
        raise DimensionError(f"levels must be at least 1, got {levels}")
    if levels == 1:
        return omega.copy()
    return np.kron(omega, np.ones((levels, levels))) / levels


def rectify_bias(bias: Tensor, levels: int) -> Tensor:
    """Per-step bias [T, ...] to [LT, ...]: each step's bias divided by L and repeated L times"""
    bias = np.asarray(bias, dtype=np.float64)
    if levels == 1:
        return bias.copy()
    return np.repeat(bias / levels, levels, axis=0)


def _source_levels(net: NetworkSpec) -> int:
    if not isinstance(net, NetworkSpec):
        raise UnsupportedLayerError(f"cannot reparameterize {type(net).__name__}")
    levels = {layer.neuron.levels for layer in net.layers}
    for layer in net.layers:
        if not isinstance(layer, LayerSpec):
            raise UnsupportedLayerError(f"cannot reparameterize layer of type {type(layer).__name__}")
    if len(levels) != 1:
        raise UnsupportedLayerError(f"all layers must share one level count, got {sorted(levels)}")
    return levels.pop()


def plan_reparameterization(net: NetworkSpec) -> ReparamPlan:
    levels = _source_levels(net)
    omegas, biases, leaks, periods = [], [], [], []
    for layer in net.layers:
        omega, leak = constrained_view(layer.tgim)
        omegas.append(expand_tgim(omega, levels))
        # the bias is the same at every step, so one row of the rectified bias is enough
        biases.append(rectify_bias(layer.bias[np.newaxis], levels)[0])
        leaks.append(leak)
        periods.append(layer.neuron.leak_period * levels)
    return ReparamPlan(levels, net.horizon, omegas, biases, leaks, periods)


def reparameterize_network(net: NetworkSpec) -> NetworkSpec:
    """
    Rewrite an LM-HT network as a single-threshold network over L*T steps

    Weights and thresholds are copied unchanged. The new T-GIMs are frozen
    (sigmoid bypassed). A network that already has L = 1 is returned as an
    unchanged copy.

    Raises:
        UnsupportedLayerError: If the input is not an LM-HT network or its
            layers disagree on L
    """
    plan = plan_reparameterization(net)
    if plan.source_levels == 1:
        return net.copy()
    layers = []
    for layer, omega, bias, leak, period in zip(net.layers, plan.omegas, plan.biases,
                                               plan.leaks, plan.leak_periods):
        layers.append(LayerSpec(
            weight=layer.weight.copy(),
            bias=bias,
            neuron=NeuronConfig(threshold=layer.neuron.threshold, levels=1,
                                v0=layer.neuron.v0, leak_period=period),
            tgim=TGimParams(omega, raw_leak=leak, bypass=True),
        ))
    meta = dict(net.meta)
    meta['reparameterized_from'] = {'L': plan.source_levels, 'T': plan.source_horizon}
    logger.info(f"Reparameterized L={plan.source_levels}, T={plan.source_horizon} "
                f"to L=1, T={plan.target_horizon}")
    return NetworkSpec(
        layers=layers,
        horizon=plan.target_horizon,
        input_scale=net.input_scale / plan.source_levels,
        first_layer_scaling=net.first_layer_scaling,
        encoding=net.encoding,
        readout=net.readout,
        meta=meta,
    )


@dataclass
class EquivalenceReport:
    """
    Source-versus-target comparison over a batch of inputs

    Only in-domain inputs (non-negative currents and leaked potentials at
    every layer and step of the source) must match exactly; the others are
    summarized by their agreement rate. A structural mismatch leaves the
    deviations as None.
    """
    samples: int
    in_domain: int
    mismatches: int
    max_logit_deviation: Optional[float]
    max_membrane_deviation: Optional[float]
    max_current_deviation: Optional[float]
    out_of_domain_agreement: float
    src_sops: int
    dst_sops: int
    note: str = ''

    @property
    def sop_deviation(self) -> float:
        return abs(self.dst_sops - self.src_sops) / max(self.src_sops, 1)

    @property
    def worst_deviation(self) -> float:
        """Largest logit or membrane deviation; the mismatch count when the structures differ"""
        if self.note:
            return float(self.mismatches)
        return max(self.max_logit_deviation, self.max_membrane_deviation)

    @property
    def passed(self) -> bool:
        return (not self.note and self.mismatches == 0
                and self.max_logit_deviation <= LOGIT_TOLERANCE
                and self.max_membrane_deviation <= MEMBRANE_TOLERANCE)

    def to_dict(self) -> Dict[str, Any]:
        record = asdict(self)
        record['sop_deviation'] = self.sop_deviation
        record['passed'] = self.passed
        return record


def _failed_structure(samples: int, note: str) -> EquivalenceReport:
    return EquivalenceReport(samples, 0, samples, None, None, None, 0.0, 0, 0, note)


def verify_equivalence(src: NetworkSpec, dst: NetworkSpec, inputs: Optional[Tensor] = None,
                       n_trials: Optional[int] = None, seed: int = 0) -> EquivalenceReport:
    """
    Run both networks and compare them window by window

    Args:
        src: LM-HT network with L levels and T steps
        dst: Its reparameterization, L = 1 and L*T steps
        inputs: Features [n x width_in]; drawn uniformly from [0, 2) when omitted
        n_trials: Number of inputs to compare (the first n_trials rows of
            `inputs`, or the number to draw; default 100 when drawing)
        seed: Seed of the drawn inputs

    Returns:
        EquivalenceReport: Deviations, domain split and SOP totals

    Raises:
        ConfigError: If n_trials < 1
    """
    if n_trials is not None and n_trials < 1:
        raise ConfigError(f"n_trials must be at least 1, got {n_trials}")
    if inputs is None:
        count = DEFAULT_EQUIVALENCE_INPUTS if n_trials is None else n_trials
        inputs = Rng(seed).uniform(0.0, 2.0, (count, src.layers[0].width_in))
    inputs = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    if n_trials is not None:
        inputs = inputs[:n_trials]
    samples = inputs.shape[0]
    levels = _source_levels(src)
    if dst.horizon != levels * src.horizon or len(dst.layers) != len(src.layers):
        return _failed_structure(samples, f"target has {len(dst.layers)} layers over {dst.horizon} steps")
    if any(layer.neuron.levels != 1 for layer in dst.layers) and levels != 1:
        return _failed_structure(samples, "target layers are not single-threshold")
    if src.widths != dst.widths:
        return _failed_structure(samples, f"widths differ: {src.widths} vs {dst.widths}")

    a = forward(src, inputs, record=True)
    b = forward(dst, inputs, record=True)
    T = src.horizon

    in_domain = np.ones(samples, dtype=bool)
    for cache in a.caches:
        leaked = cache.leak_factors().reshape(-1, 1, 1) * cache.previous
        in_domain &= np.all(cache.current >= 0, axis=(0, 2)) & np.all(leaked >= 0, axis=(0, 2))

    counts_match = np.ones(samples, dtype=bool)
    membrane_dev = np.zeros(samples)
    current_dev = np.zeros(samples)
    for sc, dc in zip(a.caches, b.caches):
        width = sc.spikes.shape[-1]
        windows = dc.spikes.reshape(T, levels, samples, width).sum(axis=1)
        counts_match &= np.all(windows == sc.spikes, axis=(0, 2))
        src_v = sc.membrane - sc.spikes * sc.threshold
        dst_v = (dc.membrane - dc.spikes * dc.threshold).reshape(T, levels, samples, width)[:, -1]
        membrane_dev = np.maximum(membrane_dev, np.abs(src_v - dst_v).max(axis=(0, 2)))
        window_currents = dc.current.reshape(T, levels, samples, width).sum(axis=1)
        current_dev = np.maximum(current_dev, np.abs(window_currents - sc.current).max(axis=(0, 2)))
    logit_dev = np.abs(a.logits - b.logits).max(axis=1)

    exact = counts_match & (membrane_dev <= MEMBRANE_TOLERANCE)
    mismatches = int(np.sum(in_domain & ~exact))
    outside = ~in_domain
    agreement = float(np.mean(counts_match[outside])) if outside.any() else 1.0
    if not in_domain.any():
        logger.warning("No input fell inside the exact-equivalence domain")

    def _max(values):
        return float(values[in_domain].max()) if in_domain.any() else 0.0

    report = EquivalenceReport(
        samples=samples,
        in_domain=int(in_domain.sum()),
        mismatches=mismatches,
        max_logit_deviation=_max(logit_dev),
        max_membrane_deviation=_max(membrane_dev),
        max_current_deviation=_max(current_dev),
        out_of_domain_agreement=agreement,
        src_sops=count_sops(stats=a.stats)[0],
        dst_sops=count_sops(stats=b.stats)[0],
    )
    logger.debug(f"Equivalence: {report.to_dict()}")
    return report


def random_inductive_network(rng: Rng, levels: int, T: int, widths: List[int]) -> NetworkSpec:
    """
    Random LM-HT network whose currents can never go negative

    Weights and biases are non-negative and the T-GIM and leak come from random
    logits; fed non-negative features, every input stays in the exact
    reparameterization domain.
    """
    layers = []
    for index, (width_in, width_out) in enumerate(zip(widths[:-1], widths[1:])):
        layer_rng = rng.derive(index)
        threshold = float(layer_rng.uniform(0.5, 2.0))
        layers.append(LayerSpec(
            weight=layer_rng.uniform(0.0, 2.0 / np.sqrt(width_in), (width_out, width_in)),
            bias=layer_rng.uniform(0.0, 0.3, width_out),
            neuron=NeuronConfig(threshold=threshold, levels=levels,
                                v0=float(layer_rng.uniform(0.0, threshold))),
            tgim=TGimParams(layer_rng.normal(1.0, (T, T)), raw_leak=float(layer_rng.normal(0.5))),
        ))
    return NetworkSpec(layers=layers, horizon=T, input_scale=float(levels))


def reparam_trial(seed: int, trial: int, size: int = 100) -> TrialReport:
    """Random 3-layer network with L in 2..4 and T in 2..3, checked on `size` random inputs"""
    rng = Rng(seed).derive(trial)
    levels = int(rng.integers(2, 4))
    T = int(rng.integers(2, 3))
    widths = [int(w) for w in rng.integers(2, 6, 4)]
    src = random_inductive_network(rng.derive(0), levels, T, widths)
    dst = reparameterize_network(src)
    features = rng.derive(1).uniform(0.0, 2.0, (size, widths[0]))
    report = verify_equivalence(src, dst, features)
    ok = report.passed and report.in_domain == size and report.sop_deviation <= SOP_TOLERANCE
    return TrialReport(
        suite='reparam', trial=trial, seed=seed,
        params={'L': levels, 'T': T, 'widths': widths, 'inputs': size},
        lhs={'dst_sops': report.dst_sops, 'logits': report.max_logit_deviation},
        rhs={'src_sops': report.src_sops},
        status=PASS if ok else FAIL,
        deviation=report.worst_deviation,
        note=f"in_domain={report.in_domain}/{size}",
    )
