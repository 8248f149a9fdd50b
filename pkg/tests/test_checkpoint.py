import hashlib
import os
import tempfile
import unittest

import numpy as np

from lmht.checkpoint import dumps_checkpoint, load_checkpoint, loads_checkpoint, save_checkpoint
from lmht.errors import IntegrityError
from lmht.network import NetworkSpec, build_network, forward
from lmht.numerics import Rng
from lmht.qann import QcfsNetwork, build_qcfs_network
from lmht.reparam import random_inductive_network, reparameterize_network
from lmht.training import hybrid_convert


def _resign(body_lines):
    body = '\n'.join(body_lines) + '\n'
    return body + f"sha256 {hashlib.sha256(body.encode('utf-8')).hexdigest()}\n"


class TestCheckpoint(unittest.TestCase):
    """Test cases for the checkpoint codec"""

    def setUp(self):
        self.tmpdir = tempfile.TemporaryDirectory()
        self.path = os.path.join(self.tmpdir.name, 'net.ckpt')

    def tearDown(self):
        self.tmpdir.cleanup()

    def test_byte_identical_resave(self):
        """Test that save, load, save reproduces the file byte for byte"""
        net = build_network([2, 5, 3], T=3, L=2, seed=4)
        save_checkpoint(self.path, net)
        with open(self.path, 'rb') as f:
            first = f.read()
        second_path = os.path.join(self.tmpdir.name, 'again.ckpt')
        save_checkpoint(second_path, load_checkpoint(self.path))
        with open(second_path, 'rb') as f:
            self.assertEqual(f.read(), first)

    def test_bit_exact_values(self):
        """Test that parameters, constants and behaviour survive the round trip"""
        ann = build_qcfs_network([2, 4, 2], levels=4, seed=1)
        ann.layers[0].scale = 0.7
        net = hybrid_convert(ann, T=2, L=2)
        loaded = loads_checkpoint(dumps_checkpoint(net))
        self.assertIsInstance(loaded, NetworkSpec)
        self.assertEqual(loaded.layers[0].neuron.v0, 0.35)
        self.assertEqual(loaded.layers[1].neuron.v0, 0.5)
        self.assertEqual(loaded.input_scale, 2.0)
        self.assertTrue(loaded.first_layer_scaling)
        self.assertEqual(loaded.meta, net.meta)
        for a, b in zip(net.layers, loaded.layers):
            np.testing.assert_array_equal(a.weight, b.weight)
            np.testing.assert_array_equal(a.tgim.raw_omega, b.tgim.raw_omega)
        features = Rng(1).uniform(-1.0, 1.0, (10, 2))
        np.testing.assert_array_equal(forward(loaded, features).logits, forward(net, features).logits)

    def test_reparameterized_network(self):
        """Test that frozen T-GIMs and leak periods are kept"""
        dst = reparameterize_network(random_inductive_network(Rng(2), levels=2, T=2, widths=[2, 3]))
        loaded = loads_checkpoint(dumps_checkpoint(dst))
        self.assertFalse(loaded.layers[0].tgim.trainable)
        self.assertEqual(loaded.layers[0].neuron.leak_period, 2)
        self.assertEqual(loaded.meta['reparameterized_from'], {'L': 2, 'T': 2})

    def test_ann(self):
        """Test a QCFS network round trip"""
        ann = build_qcfs_network([3, 4, 2], levels=8, seed=5)
        loaded = loads_checkpoint(dumps_checkpoint(ann))
        self.assertIsInstance(loaded, QcfsNetwork)
        self.assertEqual(loaded.levels, 8)
        np.testing.assert_array_equal(loaded.layers[1].weight, ann.layers[1].weight)

    def test_truncated(self):
        """Test that a file cut short raises an integrity error"""
        text = dumps_checkpoint(build_network([2, 3], T=2, L=2, seed=0))
        with self.assertRaises(IntegrityError):
            loads_checkpoint(text[:len(text) // 2])
        with self.assertRaises(IntegrityError):
            loads_checkpoint('')

    def test_corrupted(self):
        """Test that a flipped payload digit fails the checksum"""
        text = dumps_checkpoint(build_network([2, 3], T=2, L=2, seed=0))
        lines = text.split('\n')
        index = next(i for i, line in enumerate(lines) if line.startswith('tensor '))
        last = lines[index][-1]
        lines[index] = lines[index][:-1] + ('0' if last != '0' else '1')
        with self.assertRaises(IntegrityError):
            loads_checkpoint('\n'.join(lines))

    def test_version_mismatch(self):
        """Test that an unknown version is refused even with a valid checksum"""
        lines = dumps_checkpoint(build_network([2, 3], T=2, L=2, seed=0)).rstrip('\n').split('\n')[:-1]
        lines[0] = 'lmht-checkpoint 2'
        with self.assertRaises(IntegrityError):
            loads_checkpoint(_resign(lines))

    def test_missing_tensor(self):
        """Test that a dropped payload line is detected"""
        lines = dumps_checkpoint(build_network([2, 3], T=2, L=2, seed=0)).rstrip('\n').split('\n')[:-1]
        lines = [line for line in lines if not line.startswith('tensor layers.0.bias ')]
        with self.assertRaises(IntegrityError):
            loads_checkpoint(_resign(lines))

    def test_missing_file(self):
        """Test that a missing path raises FileNotFoundError"""
        with self.assertRaises(FileNotFoundError):
            load_checkpoint(os.path.join(self.tmpdir.name, 'absent.ckpt'))


if __name__ == '__main__':
    unittest.main()
