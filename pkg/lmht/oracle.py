"""
Ground-truth oracles for the multi-threshold neuron and their trial harnesses.

Each check takes fully specified inputs and returns a TrialReport; it never
raises on a failed equality. The `*_trial(seed, trial)` functions draw their
inputs from Rng(seed).derive(trial), so any report can be replayed from its
(seed, trial) pair alone.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from .errors import ConfigError, SampleSizeError
from .neuron import NeuronConfig, integrate, mht_fire, run_sequence
from .numerics import Rng
from .qann import QcfsConfig, qcfs_forward

logger = logging.getLogger('lmht.oracle')

MEMBRANE_TOLERANCE = 1e-9
BOUNDARY_BAND = 1e-9
MIN_MONTE_CARLO = 100

PASS = 'pass'
FAIL = 'fail'
SKIPPED = 'skipped'

# (L, T) grid of the firing-region sweep
REGION_GRID = [(L, T) for L in range(1, 5) for T in range(2, 7)]
# (L, T, T_q) configurations of the expectation check
EXPECTATION_CONFIGS = [(2, 2, 4), (2, 4, 8), (4, 2, 4), (1, 1, 1)]


@dataclass
class TrialReport:
    """
    Outcome of one oracle trial

    Args:
        suite: Suite the trial belongs to
        trial: Trial id within the suite
        seed: Suite seed; (seed, trial) regenerates the inputs
        params: Sampled inputs
        lhs: Value(s) produced by the system under test
        rhs: Value(s) the oracle expects
        status: 'pass', 'fail' or 'skipped' (precondition violated)
        deviation: Largest numeric deviation observed
        note: Free-form detail
    """
    suite: str
    trial: int
    seed: int
    params: Dict[str, Any] = field(default_factory=dict)
    lhs: Any = None
    rhs: Any = None
    status: str = PASS
    deviation: float = 0.0
    note: str = ''

    @property
    def passed(self) -> bool:
        return self.status == PASS

    @property
    def failed(self) -> bool:
        return self.status == FAIL

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def if_simulate(v0: float, currents: Sequence[float], threshold: float) -> Tuple[List[int], List[float]]:
    """
    Step-by-step IF dynamics with soft reset, in plain floats

    A step fires (one spike) when the potential reaches the threshold.

    Returns:
        tuple: (spike per step, potential after each reset)
    """
    if not threshold > 0:
        raise ConfigError(f"threshold must be positive, got {threshold}")
    v = float(v0)
    spikes = []
    trace = []
    for current in currents:
        v += float(current)
        s = 1 if v >= threshold else 0
        v -= s * threshold
        spikes.append(s)
        trace.append(v)
    return spikes, trace


def closed_form_count(v0: float, total_current: float, threshold: float, cap: int) -> int:
    """clip(floor((v0 + total_current) / threshold), 0, cap)"""
    return int(min(max(math.floor((v0 + total_current) / threshold), 0), cap))


def _report(suite, trial, seed, params, lhs, rhs, ok, deviation=0.0, note='') -> TrialReport:
    if not ok:
        logger.debug(f"{suite} trial {trial}: lhs {lhs!r} != rhs {rhs!r}")
    return TrialReport(suite=suite, trial=trial, seed=seed, params=params, lhs=lhs, rhs=rhs,
                       status=PASS if ok else FAIL, deviation=float(deviation), note=note)


def _in_window_domain(v0: float, currents: Sequence[float], threshold: float, levels: int) -> bool:
    return 0.0 <= v0 < threshold and all(0.0 <= c < levels * threshold for c in currents)


def check_lemma41(levels: int, threshold: float, v0: float, current: float,
                  trial: int = 0, seed: int = 0) -> TrialReport:
    """One M-HT step against L IF steps of current I/L and against the closed form"""
    params = {'L': levels, 'theta': threshold, 'v0': v0, 'I': current}
    if not _in_window_domain(v0, [current], threshold, levels):
        return TrialReport('lemma41', trial, seed, params, status=SKIPPED, note='precondition violated')
    fired = int(mht_fire(v0 + current, threshold, levels))
    if_spikes, _ = if_simulate(v0, [current / levels] * levels, threshold)
    closed = closed_form_count(v0, current, threshold, levels)
    ok = fired == sum(if_spikes) == closed
    return _report('lemma41', trial, seed, params, fired, [sum(if_spikes), closed], ok,
                   deviation=max(abs(fired - sum(if_spikes)), abs(fired - closed)))


def check_thm42_windows(levels: int, T: int, threshold: float, v0: float, currents: Sequence[float],
                        trial: int = 0, seed: int = 0) -> TrialReport:
    """
    M-HT over T steps against IF over L*T steps fed I(t)/L within window t

    Spike counts must match per window exactly and v(t) must equal the IF
    potential at the end of window t within 1e-9.
    """
    currents = [float(c) for c in currents]
    params = {'L': levels, 'T': T, 'theta': threshold, 'v0': v0, 'currents': currents}
    if len(currents) != T or not _in_window_domain(v0, currents, threshold, levels):
        return TrialReport('thm42', trial, seed, params, status=SKIPPED, note='precondition violated')
    cfg = NeuronConfig(threshold=threshold, levels=levels, v0=v0)
    spikes, potentials = run_sequence(cfg, np.array(currents))
    if_spikes, if_trace = if_simulate(v0, [c / levels for c in currents for _ in range(levels)], threshold)
    windows = [sum(if_spikes[t * levels:(t + 1) * levels]) for t in range(T)]
    window_potentials = [if_trace[(t + 1) * levels - 1] for t in range(T)]
    deviation = max(abs(float(a) - b) for a, b in zip(potentials, window_potentials))
    ok = [int(s) for s in spikes] == windows and deviation <= MEMBRANE_TOLERANCE
    return _report('thm42', trial, seed, params, [int(s) for s in spikes], windows, ok, deviation)


def check_thm42_total(levels: int, T: int, threshold: float, v0: float, current: float,
                      trial: int = 0, seed: int = 0) -> TrialReport:
    """Total M-HT spikes under a constant current against the closed-form count"""
    params = {'L': levels, 'T': T, 'theta': threshold, 'v0': v0, 'I': current}
    if not _in_window_domain(v0, [current], threshold, levels):
        return TrialReport('thm42', trial, seed, params, status=SKIPPED, note='precondition violated')
    cfg = NeuronConfig(threshold=threshold, levels=levels, v0=v0)
    spikes, _ = run_sequence(cfg, np.full(T, float(current)))
    total = int(spikes.sum())
    closed = closed_form_count(v0, T * current, threshold, levels * T)
    return _report('thm42', trial, seed, params, total, closed, total == closed, abs(total - closed))


def classify_firing_region(current: float, threshold: float, levels: int, T: int) -> str:
    """
    'uniform' if a neuron starting at 0 emits the same count at every one of T
    steps under constant `current`, else 'uneven'

    Uniform regions: current < 0, current >= L theta, and
    [k theta, k theta + theta / T) for k = 0..L-1.
    """
    if not threshold > 0:
        raise ConfigError(f"threshold must be positive, got {threshold}")
    if current < 0 or current >= levels * threshold:
        return 'uniform'
    k = math.floor(current / threshold)
    return 'uniform' if current < k * threshold + threshold / T else 'uneven'


def region_boundaries(threshold: float, levels: int, T: int) -> List[float]:
    bounds = {0.0, levels * threshold}
    for k in range(levels):
        bounds.add(k * threshold)
        bounds.add(k * threshold + threshold / T)
    return sorted(bounds)


def simulated_region(current: float, threshold: float, levels: int, T: int) -> str:
    cfg = NeuronConfig(threshold=threshold, levels=levels, v0=0.0)
    spikes, _ = run_sequence(cfg, np.full(T, float(current)))
    return 'uniform' if np.all(spikes == spikes[0]) else 'uneven'


def check_cor43_sweep(levels: int, T: int, threshold: float, points: int,
                      trial: int = 0, seed: int = 0) -> TrialReport:
    """
    Classifier against simulation on an evenly spaced sweep of
    [-theta, (L + 1) theta]; points within 1e-9 of a boundary are skipped
    """
    params = {'L': levels, 'T': T, 'theta': threshold, 'points': points}
    bounds = np.array(region_boundaries(threshold, levels, T))
    disagreements = []
    excluded = 0
    for current in np.linspace(-threshold, (levels + 1) * threshold, points):
        if np.min(np.abs(bounds - current)) < BOUNDARY_BAND:
            excluded += 1
            continue
        if classify_firing_region(current, threshold, levels, T) != simulated_region(current, threshold, levels, T):
            disagreements.append(float(current))
    return _report('cor43', trial, seed, params, len(disagreements), 0, not disagreements,
                   deviation=len(disagreements),
                   note=f"{excluded} points in the boundary band" + (
                       f"; first disagreement at I={disagreements[0]!r}" if disagreements else ''))


def check_thm44_expectation(levels: int, T: int, T_q: int, threshold: float, n: int, seed: int,
                            trial: int = 0) -> TrialReport:
    """
    Monte-Carlo check that the converted neuron's rate is an unbiased QCFS

    x is drawn uniformly from [0, theta]. The neuron (Omega = 1/T, lambda = 1,
    v(0) = theta / 2) receives x * L at each of T steps; its rate
    sum(s) theta / (L T) is compared with QCFS(x; T_q, theta). Passes when the
    mean gap is within 4 standard errors of zero (exactly zero if the gap has
    no spread).

    Raises:
        SampleSizeError: If n < 100
    """
    if n < MIN_MONTE_CARLO:
        raise SampleSizeError(f"need at least {MIN_MONTE_CARLO} samples, got {n}")
    rng = Rng(seed).derive(trial)
    x = rng.uniform(0.0, threshold, n)
    cfg = NeuronConfig(threshold=threshold, levels=levels, v0=0.5 * threshold)
    spikes = integrate(cfg, np.broadcast_to(x * levels, (T, n))).spikes
    rate = spikes.sum(axis=0) * threshold / (levels * T)
    gap = rate - qcfs_forward(x, QcfsConfig(T_q, threshold))
    mean = float(gap.mean())
    stderr = float(gap.std(ddof=1) / math.sqrt(n))
    ok = mean == 0.0 if stderr == 0.0 else abs(mean) <= 4.0 * stderr
    params = {'L': levels, 'T': T, 'T_q': T_q, 'theta': threshold, 'n': n}
    return _report('thm44', trial, seed, params, mean, 0.0, ok, abs(mean), note=f"stderr={stderr!r}")


def check_lemma_s1(levels: int, T: int, threshold: float, v0: float, currents: Sequence[float],
                   trial: int = 0, seed: int = 0) -> TrialReport:
    """Membrane potential after every reset stays in [0, theta)"""
    currents = [float(c) for c in currents]
    params = {'L': levels, 'T': T, 'theta': threshold, 'v0': v0, 'currents': currents}
    if not _in_window_domain(v0, currents, threshold, levels):
        return TrialReport('lemmas1', trial, seed, params, status=SKIPPED, note='precondition violated')
    cfg = NeuronConfig(threshold=threshold, levels=levels, v0=v0)
    _, potentials = run_sequence(cfg, np.array(currents))
    low, high = float(potentials.min()), float(potentials.max())
    ok = low >= 0.0 and high < threshold
    deviation = max(0.0, -low, high - threshold)
    return _report('lemmas1', trial, seed, params, [low, high], [0.0, threshold], ok, deviation)


def sample_window_trial(rng: Rng) -> Dict[str, Any]:
    """L in 1..4, T in 1..8, theta in [0.5, 2), v0 in [0, theta), I(t) in [0, L theta)"""
    levels = int(rng.integers(1, 4))
    T = int(rng.integers(1, 8))
    threshold = float(rng.uniform(0.5, 2.0))
    v0 = float(rng.uniform(0.0, threshold))
    currents = [float(c) for c in rng.uniform(0.0, levels * threshold, T)]
    return {'levels': levels, 'T': T, 'threshold': threshold, 'v0': v0, 'currents': currents}


def lemma41_trial(seed: int, trial: int, size: int = 0) -> TrialReport:
    rng = Rng(seed).derive(trial)
    levels = int(rng.integers(1, 4))
    threshold = float(rng.uniform(0.5, 2.0))
    v0 = float(rng.uniform(0.0, threshold))
    current = float(rng.uniform(0.0, levels * threshold))
    return check_lemma41(levels, threshold, v0, current, trial, seed)


def thm42_trial(seed: int, trial: int, size: int = 0) -> TrialReport:
    """Window check on random currents, then the closed-form total on the first current held constant"""
    s = sample_window_trial(Rng(seed).derive(trial))
    windows = check_thm42_windows(s['levels'], s['T'], s['threshold'], s['v0'], s['currents'], trial, seed)
    total = check_thm42_total(s['levels'], s['T'], s['threshold'], s['v0'], s['currents'][0], trial, seed)
    ok = windows.status == PASS and total.status == PASS
    return TrialReport(
        suite='thm42', trial=trial, seed=seed, params=windows.params,
        lhs={'windows': windows.lhs, 'total': total.lhs},
        rhs={'windows': windows.rhs, 'total': total.rhs},
        status=PASS if ok else FAIL,
        deviation=max(windows.deviation, total.deviation),
    )


def lemmas1_trial(seed: int, trial: int, size: int = 0) -> TrialReport:
    s = sample_window_trial(Rng(seed).derive(trial))
    return check_lemma_s1(s['levels'], s['T'], s['threshold'], s['v0'], s['currents'], trial, seed)


def cor43_trial(seed: int, trial: int, size: int = 10000) -> TrialReport:
    """Sweep for the trial-th (L, T) pair of REGION_GRID; theta drawn from the trial stream"""
    levels, T = REGION_GRID[trial]
    threshold = float(Rng(seed).derive(trial).uniform(0.5, 2.0))
    return check_cor43_sweep(levels, T, threshold, size, trial, seed)


def thm44_trial(seed: int, trial: int, size: int = 100000) -> TrialReport:
    """Expectation check for the trial-th entry of EXPECTATION_CONFIGS with theta = 1"""
    levels, T, T_q = EXPECTATION_CONFIGS[trial]
    return check_thm44_expectation(levels, T, T_q, 1.0, size, seed, trial)
