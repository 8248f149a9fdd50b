"""
Brute-force chain-rule evaluator for LM-HT networks.

Everything here is recomputed from the network parameters with scalar Python
loops and `math.exp`, sharing no cache or array code with the vectorized
backward pass in `stbp`. Both use the same conventions: the rectangular
multi-level surrogate, the detached (or, for L = 1, reset-aware) temporal
chain and the logit views omega = sigma(raw), lambda = 2 sigma(raw_leak).
"""

import logging
import math
from typing import Dict, List, NamedTuple, Sequence

import numpy as np

from .errors import ConfigError, ModeError
from .network import LayerSpec, NetworkSpec, backward, forward
from .neuron import NeuronConfig
from .numerics import Rng
from .oracle import FAIL, PASS, TrialReport
from .stbp import GradBundle
from .tgim import TGimParams

logger = logging.getLogger('lmht.gradcheck')

GRADIENT_TOLERANCE = 1e-10
COMPARED_FIELDS = ('weight', 'bias', 'omega', 'leak', 'raw_omega', 'raw_leak', 'input_spikes')


def _sigma(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def _views(tgim: TGimParams):
    """(omega, d omega / d raw, lambda, d lambda / d raw) as nested lists"""
    T = tgim.T
    raw = [[float(tgim.raw_omega[i, j]) for j in range(T)] for i in range(T)]
    if tgim.bypass:
        return raw, [[1.0] * T for _ in range(T)], float(tgim.raw_leak), 1.0
    omega = [[_sigma(raw[i][j]) for j in range(T)] for i in range(T)]
    d_omega = [[omega[i][j] * (1.0 - omega[i][j]) for j in range(T)] for i in range(T)]
    half = _sigma(float(tgim.raw_leak))
    return omega, d_omega, 2.0 * half, 2.0 * half * (1.0 - half)


def _window(m: float, threshold: float, levels: int) -> float:
    return 1.0 if 0.5 * threshold <= m <= (levels + 0.5) * threshold else 0.0


def reference_gradients(net: NetworkSpec, features, grad_logits, rule: str = 'detached') -> List[Dict]:
    """
    Gradients of every layer for a given dL/dlogits, by explicit loops

    Args:
        net: Network to differentiate
        features: Batch of analog inputs [batch x width_in]
        grad_logits: dL/dlogits [batch x classes]
        rule: 'detached' or 'bptt'

    Returns:
        list: One dict per layer with the keys of COMPARED_FIELDS

    Raises:
        ModeError: If rule is 'bptt' and a layer has more than one level
    """
    if rule not in ('detached', 'bptt'):
        raise ConfigError(f"Unsupported backward rule: {rule}")
    T = net.horizon
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    batch = features.shape[0]

    # forward, keeping x (as seen by the layer), raw, membrane and v(t-1)
    x = [[[float(features[b, i]) * net.input_scale for i in range(features.shape[1])]
          for b in range(batch)] for _ in range(T)]
    gains = []
    records = []
    gain = net.input_scale
    for layer in net.layers:
        cfg = layer.neuron
        if rule == 'bptt' and cfg.levels != 1:
            raise ModeError(f"vanilla BPTT needs single-threshold layers, got L={cfg.levels}")
        omega, d_omega, leak, d_leak = _views(layer.tgim)
        W = layer.weight.tolist()
        bias = layer.bias.tolist()
        n_out, n_in = len(W), len(W[0])
        raw = [[[sum(W[o][i] * x[t][b][i] for i in range(n_in)) + bias[o] for o in range(n_out)]
                for b in range(batch)] for t in range(T)]
        current = [[[sum(omega[t][j] * raw[j][b][o] for j in range(T)) for o in range(n_out)]
                    for b in range(batch)] for t in range(T)]
        membrane = [[[0.0] * n_out for _ in range(batch)] for _ in range(T)]
        previous = [[[0.0] * n_out for _ in range(batch)] for _ in range(T)]
        spikes = [[[0] * n_out for _ in range(batch)] for _ in range(T)]
        for b in range(batch):
            for o in range(n_out):
                v = cfg.v0
                for t in range(T):
                    lam = leak if t % cfg.leak_period == 0 else 1.0
                    m = lam * v + current[t][b][o]
                    s = min(max(math.floor(m / cfg.threshold), 0), cfg.levels)
                    previous[t][b][o] = v
                    membrane[t][b][o] = m
                    spikes[t][b][o] = s
                    v = m - s * cfg.threshold
        records.append(dict(x=x, raw=raw, membrane=membrane, previous=previous, omega=omega,
                            d_omega=d_omega, leak=leak, d_leak=d_leak, W=W, cfg=cfg))
        gains.append(gain)
        gain = cfg.threshold
        x = [[[s * cfg.threshold for s in row] for row in step] for step in spikes]

    out = net.output.neuron
    scale = out.threshold / (out.levels * T)
    grad_s = [[[float(grad_logits[b][o]) * scale for o in range(len(grad_logits[b]))]
               for b in range(batch)] for _ in range(T)]

    results: List[Dict] = [None] * len(records)
    for index in reversed(range(len(records))):
        rec = records[index]
        cfg = rec['cfg']
        W, omega, raw, x = rec['W'], rec['omega'], rec['raw'], rec['x']
        n_out, n_in = len(W), len(W[0])

        g_m = [[[0.0] * n_out for _ in range(batch)] for _ in range(T)]
        for b in range(batch):
            for o in range(n_out):
                for t in reversed(range(T)):
                    m = rec['membrane'][t][b][o]
                    h = _window(m, cfg.threshold, cfg.levels)
                    g = grad_s[t][b][o] * h
                    if rule == 'bptt' and t + 1 < T:
                        lam_next = rec['leak'] if (t + 1) % cfg.leak_period == 0 else 1.0
                        g += g_m[t + 1][b][o] * lam_next * (1.0 - cfg.threshold * h)
                    g_m[t][b][o] = g

        g_leak = 0.0
        for t in range(T):
            if t % cfg.leak_period == 0:
                for b in range(batch):
                    for o in range(n_out):
                        g_leak += g_m[t][b][o] * rec['previous'][t][b][o]
        g_omega = [[sum(g_m[t][b][o] * raw[j][b][o] for b in range(batch) for o in range(n_out))
                    for j in range(T)] for t in range(T)]
        g_raw = [[[sum(omega[t][j] * g_m[t][b][o] for t in range(T)) for o in range(n_out)]
                  for b in range(batch)] for j in range(T)]
        g_weight = [[sum(g_raw[t][b][o] * x[t][b][i] for t in range(T) for b in range(batch))
                     for i in range(n_in)] for o in range(n_out)]
        g_bias = [sum(g_raw[t][b][o] for t in range(T) for b in range(batch)) for o in range(n_out)]
        g_in = [[[sum(W[o][i] * g_raw[t][b][o] for o in range(n_out)) * gains[index]
                  for i in range(n_in)] for b in range(batch)] for t in range(T)]
        g_raw_omega = [[g_omega[t][j] * rec['d_omega'][t][j] for j in range(T)] for t in range(T)]

        results[index] = {
            'weight': np.array(g_weight),
            'bias': np.array(g_bias),
            'omega': np.array(g_omega),
            'leak': g_leak,
            'raw_omega': np.array(g_raw_omega),
            'raw_leak': g_leak * rec['d_leak'],
            'input_spikes': np.array(g_in),
        }
        grad_s = g_in
    return results


def relative_deviation(value, reference) -> float:
    """max |value - reference| over max |reference|; zero when both are zero"""
    value = np.asarray(value, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    diff = float(np.max(np.abs(value - reference))) if reference.size else 0.0
    if diff == 0.0:
        return 0.0
    return diff / max(float(np.max(np.abs(reference))), 1e-300)


def compare_gradients(bundles: Sequence[GradBundle], reference: Sequence[Dict]) -> float:
    """Largest relative deviation over all layers and compared tensors"""
    worst = 0.0
    for bundle, expected in zip(bundles, reference):
        produced = bundle.to_dict()
        for name in COMPARED_FIELDS:
            worst = max(worst, relative_deviation(produced[name], expected[name]))
    return worst


class ToyCase(NamedTuple):
    net: NetworkSpec
    features: np.ndarray
    grad_logits: np.ndarray
    rule: str


def random_toy_case(rng: Rng, rule: str = 'detached') -> ToyCase:
    """
    Small random network, batch and upstream gradient

    Widths are 1..4, T is 1..3, L is 1..3 (1 for 'bptt'), thresholds lie in
    [0.5, 2), initial potentials in [0, theta) and the T-GIM logits are
    Gaussian, so some layers pass the surrogate window and some do not.
    """
    depth = int(rng.integers(1, 3))
    widths = [int(w) for w in rng.integers(1, 4, depth + 1)]
    T = int(rng.integers(1, 3))
    features = rng.uniform(-1.0, 2.0, (int(rng.integers(1, 3)), widths[0]))
    layers = []
    for width_in, width_out in zip(widths[:-1], widths[1:]):
        levels = 1 if rule == 'bptt' else int(rng.integers(1, 3))
        threshold = float(rng.uniform(0.5, 2.0))
        neuron = NeuronConfig(
            threshold=threshold,
            levels=levels,
            v0=float(rng.uniform(0.0, threshold)),
            leak_period=int(rng.integers(1, 2)),
        )
        tgim = TGimParams(rng.normal(1.5, (T, T)), raw_leak=float(rng.normal(0.5)))
        weight = rng.uniform(-1.5, 1.5, (width_out, width_in))
        layers.append(LayerSpec(weight, rng.uniform(-0.5, 1.0, width_out), neuron, tgim))
    net = NetworkSpec(layers=layers, horizon=T, input_scale=float(layers[0].neuron.levels))
    grad_logits = rng.normal(1.0, (features.shape[0], widths[-1]))
    return ToyCase(net, features, grad_logits, rule)


def gradient_deviation(case: ToyCase) -> float:
    """Largest relative deviation between the vectorized backward pass and the reference"""
    result = forward(case.net, case.features, record=True)
    bundles = backward(case.net, result.caches, case.grad_logits, case.rule)
    reference = reference_gradients(case.net, case.features, case.grad_logits, case.rule)
    return compare_gradients(bundles, reference)


def grad_trial(seed: int, trial: int, size: int = 0) -> TrialReport:
    """One detached-rule toy network and one BPTT toy network against the reference"""
    rng = Rng(seed).derive(trial)
    detached = gradient_deviation(random_toy_case(rng.derive(0), 'detached'))
    bptt = gradient_deviation(random_toy_case(rng.derive(1), 'bptt'))
    worst = max(detached, bptt)
    logger.debug(f"grad trial {trial}: detached {detached:.3g}, bptt {bptt:.3g}")
    return TrialReport(
        suite='grad', trial=trial, seed=seed,
        params={'rules': ['detached', 'bptt']},
        lhs={'detached': detached, 'bptt': bptt},
        rhs=GRADIENT_TOLERANCE,
        status=PASS if worst <= GRADIENT_TOLERANCE else FAIL,
        deviation=worst,
    )
