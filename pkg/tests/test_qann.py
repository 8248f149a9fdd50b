import unittest

import numpy as np
from hypothesis import given, strategies as st

from lmht.config import TrainConfig
from lmht.errors import ConfigError, DimensionError
from lmht.numerics import Rng
from lmht.qann import (MIN_SCALE, QcfsConfig, ann_backward, ann_forward, build_qcfs_network,
                       qcfs_backward, qcfs_forward, qcfs_forward_cached, train_qcfs_ann)


class TestQcfsActivation(unittest.TestCase):
    """Test cases for the QCFS activation"""

    def test_examples(self):
        """Test hand-computed activations for T_q=4"""
        cfg = QcfsConfig(4)
        self.assertEqual(float(qcfs_forward(0.6, cfg)), 0.5)
        self.assertEqual(float(qcfs_forward(-0.1, cfg)), 0.0)
        self.assertEqual(float(qcfs_forward(2.0, cfg)), 1.0)
        self.assertEqual(float(qcfs_forward(0.0, cfg)), 0.0)

    def test_scale(self):
        """Test that the scale sets the clip value"""
        self.assertEqual(float(qcfs_forward(10.0, QcfsConfig(2, scale=3.0))), 3.0)

    def test_explicit_shift(self):
        """Test that a zero shift turns rounding into flooring"""
        self.assertEqual(float(qcfs_forward(0.7, QcfsConfig(1, shift=0.0))), 0.0)
        self.assertEqual(float(qcfs_forward(0.7, QcfsConfig(1))), 1.0)

    @given(st.floats(-5, 5), st.floats(-5, 5), st.integers(1, 16))
    def test_monotone(self, a, b, levels):
        """Test that the activation is non-decreasing"""
        cfg = QcfsConfig(levels)
        lo, hi = min(a, b), max(a, b)
        self.assertLessEqual(float(qcfs_forward(lo, cfg)), float(qcfs_forward(hi, cfg)))

    def test_level_count(self):
        """Test that the output takes T_q + 1 values"""
        values = qcfs_forward(np.linspace(-1.0, 2.0, 2001), QcfsConfig(5))
        self.assertEqual(len(np.unique(values)), 6)

    def test_invalid(self):
        """Test non-positive levels and scales"""
        with self.assertRaises(ConfigError):
            QcfsConfig(0)
        with self.assertRaises(ConfigError):
            QcfsConfig(2, scale=0.0)


class TestQcfsBackward(unittest.TestCase):
    """Test cases for the straight-through gradient"""

    def test_mask(self):
        """Test that the gradient passes only inside the clip range"""
        _, cache = qcfs_forward_cached(np.array([-1.0, 0.3, 0.8, 2.0]), QcfsConfig(4))
        grad_x, _ = qcfs_backward(np.ones(4), cache)
        np.testing.assert_array_equal(grad_x, [0.0, 1.0, 1.0, 0.0])

    def test_scale_gradient(self):
        """Test d a / d scale = q / T_q summed against the upstream gradient"""
        out, cache = qcfs_forward_cached(np.array([0.6, 2.0]), QcfsConfig(4))
        _, grad_scale = qcfs_backward(np.array([1.0, 2.0]), cache)
        self.assertEqual(grad_scale, 0.5 + 2.0)

    def test_shape_mismatch(self):
        """Test that a mismatched gradient raises a dimension error"""
        _, cache = qcfs_forward_cached(np.zeros(3), QcfsConfig(2))
        with self.assertRaises(DimensionError):
            qcfs_backward(np.zeros(2), cache)


class TestQcfsNetwork(unittest.TestCase):
    """Test cases for the quantized MLP"""

    def test_build(self):
        """Test widths and initial scales"""
        ann = build_qcfs_network([2, 5, 3], levels=4, seed=0)
        self.assertEqual(ann.widths, [2, 5, 3])
        self.assertEqual([layer.scale for layer in ann.layers], [1.0, 1.0])
        self.assertIn('layer1.scale', ann.parameters())

    def test_scale_floor(self):
        """Test that assign keeps scales positive"""
        ann = build_qcfs_network([2, 3], levels=2, seed=0)
        ann.assign({'layer0.scale': -4.0})
        self.assertEqual(ann.layers[0].scale, MIN_SCALE)

    def test_forward_width(self):
        """Test that a wrong feature width raises a dimension error"""
        ann = build_qcfs_network([2, 3], levels=2, seed=0)
        with self.assertRaises(DimensionError):
            ann_forward(ann, np.zeros((1, 3)))

    def test_backward_shapes(self):
        """Test that every parameter gets a gradient of its own shape"""
        ann = build_qcfs_network([2, 4, 3], levels=4, seed=1)
        features = Rng(1).uniform(-2.0, 2.0, (8, 2))
        out, caches = ann_forward(ann, features, record=True)
        grads = ann_backward(ann, caches, np.ones_like(out))
        for name, value in ann.parameters().items():
            self.assertEqual(np.shape(grads[name]), np.shape(value), msg=name)

    def test_copy(self):
        """Test that copies do not share weights"""
        ann = build_qcfs_network([2, 3], levels=2, seed=0)
        clone = ann.copy()
        clone.layers[0].weight[0, 0] = 42.0
        self.assertNotEqual(ann.layers[0].weight[0, 0], 42.0)


class TestTrainQcfs(unittest.TestCase):
    """Test cases for train_qcfs_ann"""

    def setUp(self):
        rng = Rng(3)
        self.features = np.concatenate([rng.normal(0.3, (40, 2)) + 1.5, rng.normal(0.3, (40, 2)) - 1.5])
        self.labels = np.array([0] * 40 + [1] * 40)

    def test_zero_lr(self):
        """Test that a zero learning rate leaves the network unchanged"""
        start = build_qcfs_network([2, 8, 2], levels=4, seed=0)
        ann, history = train_qcfs_ann(self.features, self.labels, [2, 8, 2], 4,
                                      TrainConfig(lr=0.0, epochs=3, mode='qcfs'), ann=start)
        self.assertEqual(len(history), 3)
        for name, value in start.parameters().items():
            np.testing.assert_array_equal(ann.parameters()[name], value)

    def test_deterministic(self):
        """Test that one seed gives one trained network"""
        cfg = TrainConfig(lr=0.1, epochs=3, batch_size=16, seed=5, mode='qcfs')
        a, _ = train_qcfs_ann(self.features, self.labels, [2, 8, 2], 4, cfg)
        b, _ = train_qcfs_ann(self.features, self.labels, [2, 8, 2], 4, cfg)
        for name, value in a.parameters().items():
            np.testing.assert_array_equal(b.parameters()[name], value)

    def test_zero_epochs(self):
        """Test that zero epochs return the fresh network and no history"""
        ann, history = train_qcfs_ann(self.features, self.labels, [2, 4, 2], 2,
                                      TrainConfig(epochs=0, seed=2, mode='qcfs'))
        self.assertEqual(history, [])
        fresh = build_qcfs_network([2, 4, 2], 2, seed=2)
        np.testing.assert_array_equal(ann.layers[0].weight, fresh.layers[0].weight)

    def test_empty_dataset(self):
        """Test that an empty dataset raises a config error"""
        with self.assertRaises(ConfigError):
            train_qcfs_ann(np.zeros((0, 2)), np.zeros(0), [2, 2], 2, TrainConfig(mode='qcfs'))


if __name__ == '__main__':
    unittest.main()
