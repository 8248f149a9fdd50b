"""
Dense float64 arithmetic and deterministic random streams.

Tensors are plain numpy float64 arrays in row-major order. The only operation
with a prescribed accumulation order is `affine`, which the reparameterization
checks rely on for bit-stable currents.
"""

from typing import Sequence, Tuple, Union

import numpy as np

from .errors import DimensionError, RangeError

Tensor = np.ndarray

# Logits are clamped here so that logit(1) stays finite.
LOGIT_CLAMP = 12.0


class Rng:
    """
    Counter-based random stream (Philox) addressed by a seed and a key path.

    Two streams with the same seed and key path produce identical samples on
    every platform. `derive` returns an independent child stream, which is how
    fuzz trials become replayable from a (seed, trial id) pair.
    """

    def __init__(self, seed: int, key: Sequence[int] = ()):
        if seed < 0 or seed >= 2 ** 64:
            raise RangeError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self.key: Tuple[int, ...] = tuple(int(k) for k in key)
        sequence = np.random.SeedSequence(entropy=self.seed, spawn_key=self.key)
        self._generator = np.random.Generator(np.random.Philox(sequence))

    def derive(self, index: int) -> 'Rng':
        """Child stream for trial `index`; does not advance this stream"""
        return Rng(self.seed, self.key + (index,))

    @property
    def generator(self) -> np.random.Generator:
        return self._generator

    def uniform(self, lo: float, hi: float, n: Union[int, Tuple[int, ...]] = ()) -> Tensor:
        return rng_uniform(self, lo, hi, n)

    def integers(self, lo: int, hi: int, n: Union[int, Tuple[int, ...], None] = None):
        """Integers in [lo, hi] inclusive"""
        return self._generator.integers(lo, hi, size=n, endpoint=True)

    def normal(self, scale: float = 1.0, n: Union[int, Tuple[int, ...]] = ()) -> Tensor:
        return self._generator.normal(0.0, scale, size=n)

    def permutation(self, n: int) -> np.ndarray:
        return self._generator.permutation(n)

    def __repr__(self):
        return f"Rng(seed={self.seed}, key={self.key})"


def rng_uniform(rng: Rng, lo: float, hi: float, n: Union[int, Tuple[int, ...]] = ()) -> Tensor:
    """
    Draw i.i.d. samples from [lo, hi)

    Args:
        rng: Stream to draw from; its state advances
        lo: Inclusive lower bound
        hi: Exclusive upper bound
        n: Sample count or shape

    Returns:
        Tensor: float64 samples, never equal to `hi`

    Raises:
        RangeError: If lo >= hi
    """
    if not lo < hi:
        raise RangeError(f"empty sampling interval [{lo}, {hi})")
    samples = lo + (hi - lo) * rng.generator.random(n)
    # lo + (hi - lo) * u can round up to hi for u close to 1
    return np.minimum(samples, np.nextafter(hi, lo))


def affine(weight: Tensor, x: Tensor, bias: Tensor) -> Tensor:
    """
    Compute W x + b over the trailing axis of x.

    Products are summed left to right along the input axis (np.add.accumulate
    is strictly sequential), then the bias is added, so repeated calls are
    bit-identical regardless of BLAS.

    Args:
        weight: Tensor[out x in]
        x: Tensor[..., in]
        bias: Tensor[out]

    Returns:
        Tensor[..., out]

    Raises:
        DimensionError: If the shapes do not conform
    """
    weight = np.asarray(weight, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if weight.ndim != 2:
        raise DimensionError(f"weight must be 2-D, got shape {weight.shape}")
    if x.shape[-1:] != weight.shape[1:]:
        raise DimensionError(f"input width {x.shape[-1:]} does not match weight {weight.shape}")
    if bias.shape != weight.shape[:1]:
        raise DimensionError(f"bias shape {bias.shape} does not match weight {weight.shape}")
    if weight.shape[1] == 0:
        return np.broadcast_to(bias, x.shape[:-1] + bias.shape).copy()
    products = x[..., np.newaxis, :] * weight
    return np.add.accumulate(products, axis=-1)[..., -1] + bias


def sigmoid(x):
    """Logistic function; exact 0.5 at 0 and symmetric, sigma(x) + sigma(-x) == 1"""
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


def logit(p, clamp: float = LOGIT_CLAMP):
    """Inverse of `sigmoid`, clamped to [-clamp, clamp]"""
    p = np.asarray(p, dtype=np.float64)
    with np.errstate(divide='ignore'):
        raw = np.log(p) - np.log1p(-p)
    return np.clip(raw, -clamp, clamp)
