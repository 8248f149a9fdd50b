"""
Command-line interface: verify, train, convert, reparam and bench.

Exit codes: 0 success, 1 verification/training/integrity failure, 2 usage
error (bad flags, unknown suite, missing config, too few samples).
"""

import argparse
import logging
import os
import sys
import time
from typing import List, Optional

import psutil

from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, load_run_config
from .datasets import make_dataset
from .energy import ENERGY_PER_SOP_MJ, count_sops
from .errors import (ConfigError, IntegrityError, LmhtError, ModeError, ParseError,
                     SampleSizeError, TrainingError, UnsupportedLayerError)
from .network import NetworkSpec, build_network, forward
from .numerics import Rng
from .qann import QcfsNetwork, evaluate_ann, train_qcfs_ann
from .reparam import reparameterize_network, verify_equivalence
from .reports import SUITE_CHOICES, verify
from .training import evaluate, hybrid_convert, stbp_train

logger = logging.getLogger('lmht')

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

LOG_LEVELS = ['DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL']


def parse_args(argv: Optional[List[str]] = None):
    parser = argparse.ArgumentParser(description='LM-HT spiking network kernel')
    parser.add_argument('--log-level', type=str, choices=LOG_LEVELS, default='INFO',
                        help='Set the logging level')
    commands = parser.add_subparsers(dest='command', required=True)

    p = commands.add_parser('verify', help='Run oracle suites and write a line-delimited report')
    p.add_argument('--suite', choices=SUITE_CHOICES, required=True, help='Suite to run')
    p.add_argument('--trials', type=int, help='Trials (default: 10^5 for thm44, 10^4 otherwise)')
    p.add_argument('--seed', type=int, default=0, help='Suite seed')
    p.add_argument('--out', type=str, help='Report file (optional)')
    p.add_argument('--workers', type=int, help='Worker processes (default: LMHT_THREADS or CPU count)')

    p = commands.add_parser('train', help='Train from a run config and save a checkpoint')
    p.add_argument('--config', type=str, required=True, help='Flat key=value run file')
    p.add_argument('--out', type=str, required=True, help='Checkpoint to write')

    p = commands.add_parser('convert', help='Convert a QCFS checkpoint to an LM-HT checkpoint')
    p.add_argument('--ann', type=str, required=True, help='QCFS checkpoint')
    p.add_argument('--T', type=int, required=True, help='Time steps')
    p.add_argument('--L', type=int, required=True, help='Threshold levels')
    p.add_argument('--out', type=str, required=True, help='LM-HT checkpoint to write')
    p.add_argument('--config', type=str, help='Run file whose dataset is used for zero-shot accuracy')

    p = commands.add_parser('reparam', help='Reparameterize to single-threshold form and verify')
    p.add_argument('--in', dest='src', type=str, required=True, help='LM-HT checkpoint')
    p.add_argument('--out', type=str, required=True, help='Reparameterized checkpoint')
    p.add_argument('--trials', type=int, default=100, help='Random inputs for the equivalence check')
    p.add_argument('--seed', type=int, default=0, help='Input seed')
    p.add_argument('--check', action='store_true', help='Verify an existing --out instead of writing it')

    p = commands.add_parser('bench', help='Count synaptic operations of a checkpoint')
    p.add_argument('--in', dest='src', type=str, required=True, help='LM-HT checkpoint')
    p.add_argument('--config', type=str, help='Run file whose dataset is used as input')
    p.add_argument('--samples', type=int, default=256, help='Random inputs when no config is given')
    p.add_argument('--seed', type=int, default=0, help='Input seed')
    p.add_argument('--batch-size', type=int, default=64, help='Samples per forward pass')
    return parser.parse_args(argv)


def _print_history(history):
    for record in history:
        print(f"epoch {record.epoch:4d}  loss {record.loss:.4f}  accuracy {record.accuracy:.4f}  lr {record.lr:.3g}")


def cmd_verify(args) -> int:
    summaries = verify(args.suite, args.trials, args.seed, args.out, args.workers)
    for s in summaries:
        print(f"{s.suite:8s} total {s.total:6d}  passed {s.passed:6d}  failed {s.failed:4d}  "
              f"skipped {s.skipped:4d}  max deviation {s.max_deviation:.3g}")
    return EXIT_OK if all(s.ok for s in summaries) else EXIT_FAILURE


def _train_spec(config: RunConfig, features, labels, meta):
    train = config.train
    if train.mode == 'qcfs':
        ann, history = train_qcfs_ann(features, labels, config.arch, config.T_q, train)
        ann.meta.update(meta)
        return ann, history
    if train.mode == 'hybrid-finetune':
        start = load_checkpoint(config.init_checkpoint)
        if isinstance(start, QcfsNetwork):
            start = hybrid_convert(start, config.T, config.L)
        _, before = evaluate(start, features, labels)
        print(f"accuracy before fine-tuning {before:.4f}")
        net, history = stbp_train(start, features, labels, train)
    else:
        mixing = 'identity' if train.mode == 'vanilla' else 'uniform'
        net = build_network(config.arch, config.T, config.L, train.seed, mixing=mixing,
                            first_layer_scaling=config.first_layer_scaling)
        net, history = stbp_train(net, features, labels, train)
    net.meta.update(meta)
    return net, history


def cmd_train(args, argv: List[str]) -> int:
    config = load_run_config(args.config)
    features, labels = make_dataset(config.dataset)
    meta = {'seed': config.train.seed, 'command': ' '.join(argv), 'mode': config.train.mode}
    spec, history = _train_spec(config, features, labels, meta)
    _print_history(history)
    if isinstance(spec, QcfsNetwork):
        _, acc = evaluate_ann(spec, features, labels)
    else:
        _, acc = evaluate(spec, features, labels)
    print(f"final accuracy {acc:.4f}")
    save_checkpoint(args.out, spec)
    return EXIT_OK


def cmd_convert(args, argv: List[str]) -> int:
    ann = load_checkpoint(args.ann)
    if not isinstance(ann, QcfsNetwork):
        raise UnsupportedLayerError(f"{args.ann} is not a QCFS checkpoint")
    net = hybrid_convert(ann, args.T, args.L)
    net.meta['command'] = ' '.join(argv)
    if args.config:
        features, labels = make_dataset(load_run_config(args.config).dataset)
        _, ann_acc = evaluate_ann(ann, features, labels)
        _, snn_acc = evaluate(net, features, labels)
        print(f"ANN accuracy {ann_acc:.4f}  zero-shot SNN accuracy {snn_acc:.4f}")
    save_checkpoint(args.out, net)
    return EXIT_OK


def cmd_reparam(args) -> int:
    src = load_checkpoint(args.src)
    if not isinstance(src, NetworkSpec):
        raise UnsupportedLayerError(f"{args.src} is not an LM-HT checkpoint")
    if args.check:
        dst = load_checkpoint(args.out)
    else:
        dst = reparameterize_network(src)
        save_checkpoint(args.out, dst)
    report = verify_equivalence(src, dst, n_trials=args.trials, seed=args.seed)
    print(f"inputs {report.samples}  in-domain {report.in_domain}  mismatches {report.mismatches}")
    if report.note:
        print(report.note)
        return EXIT_FAILURE
    print(f"max logit deviation {report.max_logit_deviation:.3g}  "
          f"max membrane deviation {report.max_membrane_deviation:.3g}")
    print(f"out-of-domain agreement {report.out_of_domain_agreement:.4f}  "
          f"SOPs {report.src_sops} -> {report.dst_sops}")
    return EXIT_OK if report.passed else EXIT_FAILURE


def cmd_bench(args) -> int:
    net = load_checkpoint(args.src)
    if not isinstance(net, NetworkSpec):
        raise UnsupportedLayerError(f"{args.src} is not an LM-HT checkpoint")
    energy_per_sop = ENERGY_PER_SOP_MJ
    if args.config:
        config = load_run_config(args.config)
        features, _ = make_dataset(config.dataset)
        energy_per_sop = config.energy_per_sop
    else:
        features = Rng(args.seed).uniform(-1.0, 2.0, (args.samples, net.layers[0].width_in))
    process = psutil.Process(os.getpid())
    started = time.perf_counter()
    stats = None
    for start in range(0, features.shape[0], args.batch_size):
        batch_stats = forward(net, features[start:start + args.batch_size]).stats
        stats = batch_stats if stats is None else stats.merge(batch_stats)
    elapsed = time.perf_counter() - started
    sops, energy = count_sops(stats=stats, energy_per_sop=energy_per_sop)
    cpu = process.cpu_times()
    print(f"samples {stats.samples}  SOPs {sops}  SOPs/sample {sops / stats.samples:.1f}  energy {energy:.4g} mJ")
    for index, rate in enumerate(stats.firing_rates()):
        print(f"layer {index}  firing rate {rate:.4f}")
    print(f"wall {elapsed:.3f} s  cpu {cpu.user + cpu.system:.3f} s  "
          f"rss {process.memory_info().rss / (1024 * 1024):.1f} MB")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = parse_args(argv)
    logger.setLevel(getattr(logging, args.log_level))
    try:
        if args.command == 'verify':
            return cmd_verify(args)
        if args.command == 'train':
            return cmd_train(args, argv)
        if args.command == 'convert':
            return cmd_convert(args, argv)
        if args.command == 'reparam':
            return cmd_reparam(args)
        return cmd_bench(args)
    except FileNotFoundError as e:
        logger.error(f"File not found: {e.filename}")
        return EXIT_USAGE
    except (ConfigError, ParseError, SampleSizeError, ModeError) as e:
        logger.error(f"Usage error: {e}")
        return EXIT_USAGE
    except (IntegrityError, TrainingError, UnsupportedLayerError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_FAILURE
    except LmhtError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_FAILURE
