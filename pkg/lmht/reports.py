"""
Verification suites: dispatch to worker processes and line-delimited reports.

A report file holds JSON records, one per line: a header per suite, one record
per trial ordered by trial id, a summary per suite and, for `all`, a final
overall summary. Nothing time-dependent is written, so equal seeds give
byte-identical files.
"""

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Any, Callable, Dict, List, NamedTuple, Optional

import psutil

from .errors import ConfigError, SampleSizeError
from .gradcheck import grad_trial
from .oracle import (EXPECTATION_CONFIGS, FAIL, MIN_MONTE_CARLO, PASS, REGION_GRID, SKIPPED,
                     TrialReport, cor43_trial, lemma41_trial, lemmas1_trial, thm42_trial, thm44_trial)
from .reparam import reparam_trial

logger = logging.getLogger('lmht.reports')

THREADS_ENV = 'LMHT_THREADS'
MAX_REPARAM_NETWORKS = 20
MAX_GRAD_NETWORKS = 100
DEFAULT_TRIALS = 10000
MONTE_CARLO_SAMPLES = 100000


class Suite(NamedTuple):
    """How a suite turns --trials into jobs: job count, per-job size and the trial function"""
    run: Callable[..., TrialReport]
    jobs: Callable[[int], int]
    size: Callable[[int], int]
    note: str = ''
    default_trials: int = DEFAULT_TRIALS


SUITES: Dict[str, Suite] = {
    'lemma41': Suite(lemma41_trial, lambda n: n, lambda n: 0),
    'thm42': Suite(thm42_trial, lambda n: n, lambda n: 0),
    'cor43': Suite(cor43_trial, lambda n: len(REGION_GRID), lambda n: n,
                   note='trials = sweep points per (L, T) pair; boundary band 1e-9'),
    'thm44': Suite(thm44_trial, lambda n: len(EXPECTATION_CONFIGS), lambda n: n,
                   note='trials = Monte-Carlo samples per configuration; x ~ uniform[0, theta]',
                   default_trials=MONTE_CARLO_SAMPLES),
    'lemmas1': Suite(lemmas1_trial, lambda n: n, lambda n: 0),
    'reparam': Suite(reparam_trial, lambda n: min(n, MAX_REPARAM_NETWORKS), lambda n: 100,
                     note=f'at most {MAX_REPARAM_NETWORKS} networks, 100 inputs each'),
    'grad': Suite(grad_trial, lambda n: min(n, MAX_GRAD_NETWORKS), lambda n: 0,
                  note=f'at most {MAX_GRAD_NETWORKS} toy networks per rule'),
}
SUITE_CHOICES = list(SUITES) + ['all']


@dataclass
class SuiteSummary:
    suite: str
    total: int
    passed: int
    failed: int
    skipped: int
    max_deviation: float

    @property
    def ok(self) -> bool:
        return self.failed == 0

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def worker_count() -> int:
    """LMHT_THREADS if set, else the number of CPUs"""
    value = os.environ.get(THREADS_ENV)
    if value:
        try:
            count = int(value)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {value!r}")
        if count < 1:
            raise ConfigError(f"{THREADS_ENV} must be at least 1, got {count}")
        return count
    return psutil.cpu_count() or 1


def _run_job(job):
    run, seed, trial, size = job
    return run(seed, trial, size)


def resolve_trials(name: str, trials: Optional[int]) -> int:
    """The explicit trial count, or the suite's own default when none is given"""
    return SUITES[name].default_trials if trials is None else int(trials)


def run_suite(name: str, trials: Optional[int], seed: int, workers: Optional[int] = None) -> List[TrialReport]:
    """
    Run one suite and return its reports ordered by trial id

    A `trials` of None runs the suite at its default size (10^5 samples for
    thm44, 10^4 for the others).

    Raises:
        ConfigError: If the suite is unknown or trials < 1
        SampleSizeError: If thm44 is asked for fewer than 100 samples
    """
    if name not in SUITES:
        raise ConfigError(f"Unknown suite: {name}")
    trials = resolve_trials(name, trials)
    if trials < 1:
        raise ConfigError(f"trials must be at least 1, got {trials}")
    if name == 'thm44' and trials < MIN_MONTE_CARLO:
        raise SampleSizeError(f"thm44 needs at least {MIN_MONTE_CARLO} samples, got {trials}")
    suite = SUITES[name]
    jobs = [(suite.run, seed, trial, suite.size(trials)) for trial in range(suite.jobs(trials))]
    workers = min(workers or worker_count(), len(jobs))
    logger.info(f"Running suite {name}: {len(jobs)} jobs on {workers} worker(s)")
    if workers <= 1:
        reports = [_run_job(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(_run_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    reports.sort(key=lambda r: r.trial)
    for report in reports:
        if report.status == SKIPPED:
            logger.warning(f"{name} trial {report.trial} skipped: {report.note}")
        elif report.status == FAIL:
            logger.error(f"{name} trial {report.trial} failed (seed {seed}): deviation {report.deviation!r}")
    return reports


def summarize(name: str, reports: List[TrialReport]) -> SuiteSummary:
    return SuiteSummary(
        suite=name,
        total=len(reports),
        passed=sum(r.status == PASS for r in reports),
        failed=sum(r.status == FAIL for r in reports),
        skipped=sum(r.status == SKIPPED for r in reports),
        max_deviation=max((r.deviation for r in reports), default=0.0),
    )


def _line(record: Dict[str, Any]) -> str:
    return json.dumps(record, sort_keys=True) + '\n'


def render_suite(name: str, trials: int, seed: int, reports: List[TrialReport]) -> str:
    """Header, trial records and summary of one suite as report text"""
    lines = [_line({'record': 'header', 'suite': name, 'seed': seed, 'trials': trials,
                    'note': SUITES[name].note})]
    for report in reports:
        lines.append(_line({'record': 'trial', **report.to_dict()}))
    lines.append(_line({'record': 'summary', **summarize(name, reports).to_dict()}))
    return ''.join(lines)


def verify(suite: str, trials: Optional[int], seed: int, out_path: Optional[str] = None,
           workers: Optional[int] = None) -> List[SuiteSummary]:
    """
    Run a suite (or all of them), optionally writing the report file

    Returns:
        list: One summary per suite that ran
    """
    names = list(SUITES) if suite == 'all' else [suite]
    chunks = []
    summaries = []
    for name in names:
        reports = run_suite(name, trials, seed, workers)
        chunks.append(render_suite(name, resolve_trials(name, trials), seed, reports))
        summaries.append(summarize(name, reports))
    if suite == 'all':
        chunks.append(_line({
            'record': 'summary', 'suite': 'all',
            'total': sum(s.total for s in summaries),
            'passed': sum(s.passed for s in summaries),
            'failed': sum(s.failed for s in summaries),
            'skipped': sum(s.skipped for s in summaries),
            'max_deviation': max(s.max_deviation for s in summaries),
        }))
    if out_path:
        with open(out_path, 'w') as f:
            f.write(''.join(chunks))
        logger.info(f"Report written to {out_path}")
    return summaries
