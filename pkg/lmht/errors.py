"""
Exception types raised by the lmht kernel.

Every error derives from LmhtError and from the closest builtin so callers can
catch either one.
"""


class LmhtError(Exception):
    """Base class for all kernel errors"""


class DimensionError(LmhtError, ValueError):
    """Tensor shapes do not conform"""


class RangeError(LmhtError, ValueError):
    """Sampling interval is empty or inverted"""


class ConfigError(LmhtError, ValueError):
    """Invalid neuron, training or run configuration"""


class ModeError(LmhtError, ValueError):
    """Operation called on a layer it does not support"""


class SampleSizeError(LmhtError, ValueError):
    """Monte-Carlo sample too small to estimate a standard error"""


class UnsupportedLayerError(LmhtError, TypeError):
    """Layer type cannot take part in the requested transformation"""


class InstrumentationError(LmhtError, RuntimeError):
    """Spike statistics were requested but never recorded"""


class TrainingError(LmhtError, RuntimeError):
    """Training diverged"""

    def __init__(self, message: str, epoch: int):
        super().__init__(f"{message} (epoch {epoch})")
        self.epoch = epoch


class ParseError(LmhtError, ValueError):
    """Malformed input line"""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class IntegrityError(LmhtError, ValueError):
    """Checkpoint is truncated, corrupted or from another format version"""
