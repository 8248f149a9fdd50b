"""
Canonical text checkpoints for spiking networks and QCFS MLPs.

    lmht-checkpoint 1
    kind snn
    meta {"seed": 3}
    int horizon 2
    flag first_layer_scaling 1
    text encoding direct
    shape layers.0.weight 4 2
    shape input_scale scalar
    ...
    payload
    tensor layers.0.weight 3fd5c28f5c28f5c3...
    ...
    sha256 <digest of every line above>

Integers and flags are decimal, every float is written as big-endian IEEE-754
hex, so a save/load round trip is bit-exact and saving the loaded spec again
reproduces the file byte for byte.
"""

import hashlib
import json
import logging
from typing import Any, Dict, List, Tuple, Union

import numpy as np

from .errors import IntegrityError
from .network import NetworkSpec
from .qann import QcfsNetwork

logger = logging.getLogger('lmht.checkpoint')

CHECKPOINT_MAGIC = 'lmht-checkpoint'
CHECKPOINT_VERSION = 1
KINDS = {'snn': NetworkSpec, 'ann': QcfsNetwork}

Spec = Union[NetworkSpec, QcfsNetwork]


def _flatten(value: Any, prefix: str, out: List[Tuple[str, Any]]):
    if isinstance(value, dict):
        for key, item in value.items():
            _flatten(item, f"{prefix}.{key}" if prefix else key, out)
    elif isinstance(value, list):
        for index, item in enumerate(value):
            _flatten(item, f"{prefix}.{index}", out)
    else:
        out.append((prefix, value))


def _unflatten(items: List[Tuple[str, Any]]) -> Dict[str, Any]:
    root: Dict[str, Any] = {}
    for key, value in items:
        node = root
        parts = key.split('.')
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    return _listify(root)


def _listify(node: Any) -> Any:
    if not isinstance(node, dict):
        return node
    if node and all(key.isdigit() for key in node):
        return [_listify(node[str(i)]) for i in range(len(node))]
    return {key: _listify(item) for key, item in node.items()}


def _hex(array: np.ndarray) -> str:
    return np.ascontiguousarray(array, dtype='>f8').tobytes().hex()


def dumps_checkpoint(spec: Spec) -> str:
    """Serialize a spec to checkpoint text"""
    record = spec.to_dict()
    kind = record.pop('kind')
    meta = record.pop('meta', {})
    items: List[Tuple[str, Any]] = []
    _flatten(record, '', items)

    header = [f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}", f"kind {kind}",
              f"meta {json.dumps(meta, sort_keys=True)}"]
    payload = ['payload']
    for key, value in items:
        if isinstance(value, (bool, np.bool_)):
            header.append(f"flag {key} {int(value)}")
        elif isinstance(value, (int, np.integer)):
            header.append(f"int {key} {int(value)}")
        elif isinstance(value, str):
            header.append(f"text {key} {value}")
        else:
            array = np.asarray(value, dtype=np.float64)
            dims = ' '.join(str(d) for d in array.shape) if array.ndim else 'scalar'
            header.append(f"shape {key} {dims}")
            payload.append(f"tensor {key} {_hex(array)}")
    body = '\n'.join(header + payload) + '\n'
    digest = hashlib.sha256(body.encode('utf-8')).hexdigest()
    return body + f"sha256 {digest}\n"


def loads_checkpoint(text: str) -> Spec:
    """
    Parse checkpoint text

    Raises:
        IntegrityError: On truncation, checksum or version mismatch, or a malformed line
    """
    lines = text.split('\n')
    if lines and lines[-1] == '':
        lines.pop()
    if not lines or not lines[-1].startswith('sha256 '):
        raise IntegrityError("checkpoint is truncated (no checksum line)")
    body = '\n'.join(lines[:-1]) + '\n'
    if hashlib.sha256(body.encode('utf-8')).hexdigest() != lines[-1][len('sha256 '):]:
        raise IntegrityError("checkpoint checksum mismatch")

    magic = lines[0].split(' ')
    if len(magic) != 2 or magic[0] != CHECKPOINT_MAGIC:
        raise IntegrityError("not an lmht checkpoint")
    if magic[1] != str(CHECKPOINT_VERSION):
        raise IntegrityError(f"unsupported checkpoint version {magic[1]} (expected {CHECKPOINT_VERSION})")

    try:
        kind = lines[1].split(' ', 1)[1]
        meta = json.loads(lines[2].split(' ', 1)[1])
        items: List[Tuple[str, Any]] = []
        shapes: Dict[str, Tuple[int, ...]] = {}
        index = 3
        while lines[index] != 'payload':
            tag, key, value = lines[index].split(' ', 2)
            if tag == 'flag':
                items.append((key, value == '1'))
            elif tag == 'int':
                items.append((key, int(value)))
            elif tag == 'text':
                items.append((key, value))
            elif tag == 'shape':
                shapes[key] = () if value == 'scalar' else tuple(int(d) for d in value.split())
                items.append((key, None))
            else:
                raise IntegrityError(f"unknown header tag {tag!r}")
            index += 1
        tensors = {}
        for line in lines[index + 1:-1]:
            tag, key, payload = line.split(' ', 2)
            if tag != 'tensor' or key not in shapes:
                raise IntegrityError(f"unexpected payload line for {key!r}")
            array = np.frombuffer(bytes.fromhex(payload), dtype='>f8').astype(np.float64)
            shape = shapes[key]
            tensors[key] = float(array[0]) if shape == () else array.reshape(shape)
    except (IndexError, ValueError, json.JSONDecodeError) as e:
        if isinstance(e, IntegrityError):
            raise
        raise IntegrityError(f"malformed checkpoint: {e}")
    if set(tensors) != set(shapes):
        raise IntegrityError(f"missing tensors: {sorted(set(shapes) - set(tensors))}")
    if kind not in KINDS:
        raise IntegrityError(f"unknown checkpoint kind {kind!r}")

    record = _unflatten([(key, tensors[key] if key in shapes else value) for key, value in items])
    record['kind'] = kind
    record['meta'] = meta
    return KINDS[kind].from_dict(record)


def save_checkpoint(path: str, spec: Spec) -> str:
    """Write `spec` to `path` and return the path"""
    with open(path, 'w', newline='\n') as f:
        f.write(dumps_checkpoint(spec))
    logger.info(f"Checkpoint written to {path}")
    return path


def load_checkpoint(path: str) -> Spec:
    with open(path, 'r', newline='\n') as f:
        return loads_checkpoint(f.read())
