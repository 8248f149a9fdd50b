"""
lmht: multi-threshold spiking neurons with learnable temporal mixing.

Forward dynamics, surrogate-gradient training, QCFS conversion, lossless
reparameterization to single-threshold form, and the oracles that check them.
"""

from .errors import LmhtError
from .network import NetworkSpec, build_network, forward
from .neuron import NeuronConfig, run_sequence
from .reparam import reparameterize_network, verify_equivalence

__version__ = '0.1.0'
