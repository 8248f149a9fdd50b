"""
Synaptic-operation (SOP) counting and energy estimates.

One SOP is one unit of spike count delivered through one synapse, so a unit
that emits s spikes at a step and drives `fan_out` synapses costs s * fan_out
SOPs. The output layer drives nothing, and the analog first-layer input is not
a spike and is not counted.
"""

import logging
from typing import Optional, Tuple

import numpy as np

from .errors import InstrumentationError
from .network import forward

logger = logging.getLogger('lmht.energy')

# Energy per synaptic operation in mJ (0.9 pJ).
ENERGY_PER_SOP_MJ = 0.9e-9


def count_sops(net=None, batch: Optional[np.ndarray] = None, stats=None,
               energy_per_sop: float = ENERGY_PER_SOP_MJ) -> Tuple[int, float]:
    """
    Count synaptic operations and the matching energy

    Args:
        net: Network to run when `stats` is not given
        batch: Features to run through `net`
        stats: SpikeStats of a forward pass that already happened
        energy_per_sop: Energy per operation in mJ

    Returns:
        tuple: (SOPs, energy in mJ)

    Raises:
        InstrumentationError: If neither spike statistics nor a batch are available
    """
    if stats is None:
        if net is None or batch is None:
            raise InstrumentationError("count_sops needs spike statistics or a network and a batch")
        stats = forward(net, batch).stats
    sops = 0
    for counts, fan_out in zip(stats.counts, stats.fan_out):
        sops += int(np.asarray(counts, dtype=np.int64).sum()) * int(fan_out)
    logger.debug(f"{sops} SOPs over {stats.samples} samples")
    return sops, sops * energy_per_sop
