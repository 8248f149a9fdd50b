"""
Training hyperparameters and flat key=value run configuration files.

A run file looks like

    # blobs, LM-HT L=2 T=2
    mode = direct
    arch = 2,32,32,3
    T = 2
    L = 2
    epochs = 200

Keys not listed in DEFAULT_RUN_CONFIG are rejected.
"""

import configparser
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional

from .datasets import SyntheticDataset
from .energy import ENERGY_PER_SOP_MJ
from .errors import ConfigError, ParseError

logger = logging.getLogger('lmht.config')

TRAIN_MODES = ('direct', 'vanilla', 'hybrid-finetune', 'qcfs')
SCHEDULES = ('constant', 'cosine')

RUN_SECTION = 'run'

DEFAULT_RUN_CONFIG: Dict[str, str] = {
    'mode': 'direct',
    'dataset': 'gaussian-blobs',
    'csv_path': '',
    'n_samples': '600',
    'n_classes': '3',
    'data_seed': '7',
    'arch': '2,32,32,3',
    'T': '2',
    'L': '2',
    'T_q': '4',
    'lr': '0.05',
    'weight_decay': '0',
    'momentum': '0',
    'schedule': 'constant',
    'epochs': '200',
    'batch_size': '32',
    'seed': '0',
    'first_layer_scaling': 'true',
    'init_checkpoint': '',
    'energy_per_sop': repr(ENERGY_PER_SOP_MJ),
}


@dataclass(frozen=True)
class TrainConfig:
    """
    SGD hyperparameters

    Args:
        lr: Base learning rate (0 turns updates into no-ops)
        weight_decay: L2 coefficient on weights and biases
        epochs: Passes over the data (0 returns the input unchanged)
        batch_size: Samples per update
        seed: Shuffling seed
        mode: direct, vanilla, hybrid-finetune or qcfs
        momentum: Momentum coefficient in [0, 1)
        schedule: 'constant' or 'cosine' annealing to 0 over `epochs`
    """
    lr: float = 0.05
    weight_decay: float = 0.0
    epochs: int = 200
    batch_size: int = 32
    seed: int = 0
    mode: str = 'direct'
    momentum: float = 0.0
    schedule: str = 'constant'

    def __post_init__(self):
        if self.lr < 0:
            raise ConfigError(f"learning rate must be non-negative, got {self.lr}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight decay must be non-negative, got {self.weight_decay}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be non-negative, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be positive, got {self.batch_size}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.mode not in TRAIN_MODES:
            raise ConfigError(f"Unsupported training mode: {self.mode}")
        if self.schedule not in SCHEDULES:
            raise ConfigError(f"Unsupported schedule: {self.schedule}")

    def learning_rate(self, epoch: int) -> float:
        """Rate used during `epoch` (0-based)"""
        if self.schedule == 'cosine' and self.epochs > 0:
            return 0.5 * self.lr * (1.0 + math.cos(math.pi * epoch / self.epochs))
        return self.lr

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class EpochRecord:
    """Metrics of one training epoch"""
    epoch: int
    loss: float
    accuracy: float
    lr: float

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class RunConfig:
    """Everything a `train` run needs, parsed from a run file"""
    train: TrainConfig
    dataset: SyntheticDataset
    arch: List[int]
    T: int
    L: int
    T_q: int
    first_layer_scaling: bool = True
    init_checkpoint: Optional[str] = None
    energy_per_sop: float = ENERGY_PER_SOP_MJ
    raw: Dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.raw)


def _parse_bool(key: str, value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ('1', 'true', 'yes', 'on'):
        return True
    if lowered in ('0', 'false', 'no', 'off'):
        return False
    raise ConfigError(f"{key} must be a boolean, got {value!r}")


def parse_run_config(text: str, source: str = '<string>') -> RunConfig:
    """
    Parse flat key=value text into a RunConfig

    Raises:
        ParseError: On a line that is not key=value
        ConfigError: On unknown keys or invalid values
    """
    parser = configparser.ConfigParser(interpolation=None, delimiters=('=',))
    parser.optionxform = str
    try:
        parser.read_string(f"[{RUN_SECTION}]\n" + text, source=source)
    except configparser.ParsingError as e:
        lineno = e.errors[0][0] - 1 if e.errors else 0
        raise ParseError(f"{source}: not a key=value line", lineno)
    except configparser.Error as e:
        raise ConfigError(f"{source}: {e}")

    values = dict(DEFAULT_RUN_CONFIG)
    for key, value in parser.items(RUN_SECTION):
        if key not in DEFAULT_RUN_CONFIG:
            raise ConfigError(f"{source}: unknown key {key!r}")
        values[key] = value.strip()

    try:
        train = TrainConfig(
            lr=float(values['lr']),
            weight_decay=float(values['weight_decay']),
            epochs=int(values['epochs']),
            batch_size=int(values['batch_size']),
            seed=int(values['seed']),
            mode=values['mode'],
            momentum=float(values['momentum']),
            schedule=values['schedule'],
        )
        dataset = SyntheticDataset(
            kind=values['dataset'],
            n_samples=int(values['n_samples']),
            n_classes=int(values['n_classes']),
            seed=int(values['data_seed']),
            csv_path=values['csv_path'] or None,
        )
        arch = [int(w) for w in values['arch'].split(',') if w.strip()]
        config = RunConfig(
            train=train,
            dataset=dataset,
            arch=arch,
            T=int(values['T']),
            L=int(values['L']),
            T_q=int(values['T_q']),
            first_layer_scaling=_parse_bool('first_layer_scaling', values['first_layer_scaling']),
            init_checkpoint=values['init_checkpoint'] or None,
            energy_per_sop=float(values['energy_per_sop']),
            raw=values,
        )
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"{source}: {e}")
    if train.mode == 'hybrid-finetune' and not config.init_checkpoint:
        raise ConfigError(f"{source}: hybrid-finetune needs init_checkpoint")
    return config


def load_run_config(path: str) -> RunConfig:
    """Read and parse a run file; a missing file raises FileNotFoundError"""
    with open(path, 'r') as f:
        text = f.read()
    config = parse_run_config(text, source=path)
    logger.info(f"Loaded run config {path} (mode={config.train.mode})")
    return config
