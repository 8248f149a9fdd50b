"""
STBP training loop and the hybrid ANN-to-SNN pipeline.

Hybrid training first fits a QCFS MLP (see qann), converts it with
`hybrid_convert` and then fine-tunes the spiking network for a few epochs with
`hybrid_finetune`, keeping thresholds fixed.
"""

import logging
from typing import List, Optional, Tuple

import numpy as np

from .config import EpochRecord, TrainConfig
from .datasets import minibatches
from .errors import ConfigError, TrainingError
from .network import (LayerSpec, NetworkSpec, accuracy, backward, forward,
                      gradients_by_name, loss_and_grad)
from .neuron import NeuronConfig
from .numerics import Rng
from .qann import QcfsNetwork
from .stbp import sgd_step
from .tgim import init_params

logger = logging.getLogger('lmht.training')

FINETUNE_LR = 5e-4
FINETUNE_WEIGHT_DECAY = 5e-4
EVAL_BATCH = 256


def evaluate(net: NetworkSpec, features: np.ndarray, labels: np.ndarray,
             batch_size: int = EVAL_BATCH) -> Tuple[float, float]:
    """Mean cross-entropy and accuracy over a dataset, run in batches"""
    features = np.asarray(features, dtype=np.float64)
    logits = np.concatenate([forward(net, features[start:start + batch_size]).logits
                             for start in range(0, features.shape[0], batch_size)])
    loss, _ = loss_and_grad(logits, labels)
    return loss, accuracy(logits, labels)


def stbp_train(net: NetworkSpec, features: np.ndarray, labels: np.ndarray,
               cfg: TrainConfig) -> Tuple[NetworkSpec, List[EpochRecord]]:
    """
    Train a spiking network with surrogate gradients

    The 'vanilla' mode runs classic BPTT (single-threshold layers only); every
    other mode uses the detached LM-HT rule. Frozen T-GIMs stay untouched.

    Args:
        net: Starting network; it is not modified
        features: Training inputs [n x d]
        labels: Integer labels [n]
        cfg: Hyperparameters

    Returns:
        tuple: (trained copy of the network, per-epoch history)

    Raises:
        TrainingError: If the loss becomes NaN or infinite
        ModeError: If vanilla mode meets a multi-level layer
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if features.shape[0] == 0:
        raise ConfigError("cannot train on an empty dataset")
    rule = 'bptt' if cfg.mode == 'vanilla' else 'detached'
    net = net.copy()
    rng = Rng(cfg.seed, key=(2,))
    velocity: dict = {}
    history: List[EpochRecord] = []
    for epoch in range(cfg.epochs):
        lr = cfg.learning_rate(epoch)
        total = 0.0
        for batch in minibatches(features.shape[0], cfg.batch_size, rng.derive(epoch)):
            result = forward(net, features[batch], record=True)
            loss, grad_logits = loss_and_grad(result.logits, labels[batch])
            if not np.isfinite(loss):
                raise TrainingError("loss is not finite", epoch)
            grads = gradients_by_name(net, backward(net, result.caches, grad_logits, rule))
            if not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise TrainingError("gradient is not finite", epoch)
            net.assign(sgd_step(net.parameters(), grads, lr, cfg.weight_decay, cfg.momentum, velocity))
            total += loss * len(batch)
        _, acc = evaluate(net, features, labels)
        history.append(EpochRecord(epoch=epoch, loss=total / features.shape[0], accuracy=acc, lr=lr))
        logger.debug(f"epoch {epoch}: loss={history[-1].loss:.4f} acc={acc:.4f} lr={lr:.3g}")
    if history:
        logger.info(f"STBP training ({cfg.mode}) finished: "
                    f"loss={history[-1].loss:.4f} accuracy={history[-1].accuracy:.4f}")
    return net, history


def hybrid_convert(ann: QcfsNetwork, T: int, L: int) -> NetworkSpec:
    """
    Build an LM-HT network from a trained QCFS MLP

    Each layer keeps W, takes theta from the QCFS scale and starts at
    v(0) = theta / 2 with uniform mixing (Omega = 1/T, lambda = 1). The first
    layer's input is multiplied by L and every bias by L, so each step's
    current is L times the ANN pre-activation. With T_q == L * T the converted
    network reproduces the ANN exactly.

    Args:
        ann: Trained quantized MLP
        T: Time steps
        L: Threshold levels

    Returns:
        NetworkSpec: Converted network
    """
    if T < 1 or L < 1:
        raise ConfigError(f"T and L must be at least 1, got T={T}, L={L}")
    layers = []
    for layer in ann.layers:
        threshold = float(layer.scale)
        layers.append(LayerSpec(
            weight=layer.weight.copy(),
            bias=layer.bias * L,
            neuron=NeuronConfig(threshold=threshold, levels=L, v0=0.5 * threshold),
            tgim=init_params('uniform', T),
        ))
    meta = dict(ann.meta)
    meta['converted_from_levels'] = int(ann.levels)
    logger.info(f"Converted QCFS network (T_q={ann.levels}) to LM-HT with T={T}, L={L}")
    return NetworkSpec(layers=layers, horizon=T, input_scale=float(L), first_layer_scaling=True, meta=meta)


def hybrid_finetune(net: NetworkSpec, features: np.ndarray, labels: np.ndarray, epochs: int,
                    cfg: Optional[TrainConfig] = None) -> NetworkSpec:
    """
    Short STBP fine-tuning of a converted network

    Weights, biases, Omega and lambda train; thresholds stay fixed. Without a
    config the run uses lr = weight decay = 5e-4 and batch size 32.
    """
    if epochs == 0:
        return net.copy()
    if cfg is None:
        cfg = TrainConfig(lr=FINETUNE_LR, weight_decay=FINETUNE_WEIGHT_DECAY, epochs=epochs,
                          seed=int(net.meta.get('seed', 0)), mode='hybrid-finetune')
    else:
        cfg = TrainConfig(**{**cfg.to_dict(), 'epochs': epochs, 'mode': 'hybrid-finetune'})
    tuned, _ = stbp_train(net, features, labels, cfg)
    return tuned
