import unittest

import numpy as np

from lmht.config import TrainConfig
from lmht.datasets import SyntheticDataset, make_dataset
from lmht.errors import ConfigError, ModeError
from lmht.network import build_network, forward
from lmht.numerics import Rng
from lmht.qann import ann_forward, build_qcfs_network, evaluate_ann, train_qcfs_ann
from lmht.tgim import constrained_view
from lmht.training import evaluate, hybrid_convert, hybrid_finetune, stbp_train


def two_clusters(seed=0, n=40):
    rng = Rng(seed)
    features = np.concatenate([rng.normal(0.3, (n, 2)) + 1.5, rng.normal(0.3, (n, 2)) - 1.5])
    labels = np.array([0] * n + [1] * n)
    return features, labels


class TestStbpTrain(unittest.TestCase):
    """Test cases for stbp_train"""

    def setUp(self):
        self.features, self.labels = two_clusters()

    def test_zero_lr(self):
        """Test that lr=0 keeps every parameter and the loss flat"""
        net = build_network([2, 8, 2], T=2, L=2, seed=0)
        trained, history = stbp_train(net, self.features, self.labels, TrainConfig(lr=0.0, epochs=3))
        for name, value in net.parameters().items():
            np.testing.assert_array_equal(trained.parameters()[name], value)
        self.assertEqual(len(history), 3)
        self.assertEqual(history[0].accuracy, history[-1].accuracy)

    def test_input_not_modified(self):
        """Test that training works on a copy"""
        net = build_network([2, 8, 2], T=2, L=2, seed=0)
        before = net.layers[0].weight.copy()
        stbp_train(net, self.features, self.labels, TrainConfig(lr=0.1, epochs=1))
        np.testing.assert_array_equal(net.layers[0].weight, before)

    def test_deterministic(self):
        """Test that one seed gives one trained network"""
        net = build_network([2, 8, 2], T=2, L=2, seed=1)
        cfg = TrainConfig(lr=0.1, epochs=2, batch_size=16, seed=3)
        a, _ = stbp_train(net, self.features, self.labels, cfg)
        b, _ = stbp_train(net, self.features, self.labels, cfg)
        for name, value in a.parameters().items():
            np.testing.assert_array_equal(b.parameters()[name], value)

    def test_learns_separable_data(self):
        """Test that a short run beats chance on two well separated clusters"""
        net = build_network([2, 16, 2], T=2, L=2, seed=2)
        trained, history = stbp_train(net, self.features, self.labels,
                                      TrainConfig(lr=0.5, epochs=30, batch_size=16, seed=2))
        _, acc = evaluate(trained, self.features, self.labels)
        self.assertGreaterEqual(acc, 0.75)
        self.assertTrue(all(np.isfinite(record.loss) for record in history))

    def test_vanilla_mode(self):
        """Test that vanilla mode trains single-threshold networks and rejects multi-level ones"""
        net = build_network([2, 8, 2], T=3, L=1, seed=0, mixing='identity')
        trained, _ = stbp_train(net, self.features, self.labels, TrainConfig(lr=0.1, epochs=1, mode='vanilla'))
        np.testing.assert_array_equal(trained.layers[0].tgim.raw_omega, np.eye(3))
        with self.assertRaises(ModeError):
            stbp_train(build_network([2, 4, 2], T=2, L=2, seed=0), self.features, self.labels,
                       TrainConfig(lr=0.1, epochs=1, mode='vanilla'))

    def test_empty_dataset(self):
        """Test that an empty dataset raises a config error"""
        net = build_network([2, 4, 2], T=2, L=2, seed=0)
        with self.assertRaises(ConfigError):
            stbp_train(net, np.zeros((0, 2)), np.zeros(0), TrainConfig())


class TestHybrid(unittest.TestCase):
    """Test cases for hybrid_convert and hybrid_finetune"""

    def test_convert_fields(self):
        """Test thresholds, initial potentials, scaled biases and uniform mixing"""
        ann = build_qcfs_network([2, 4, 3], levels=4, seed=0)
        ann.layers[0].scale = 1.5
        ann.layers[0].bias = np.array([0.1, -0.2, 0.3, 0.0])
        net = hybrid_convert(ann, T=2, L=2)
        self.assertEqual(net.layers[0].neuron.threshold, 1.5)
        self.assertEqual(net.layers[0].neuron.v0, 0.75)
        self.assertEqual(net.layers[0].neuron.levels, 2)
        np.testing.assert_array_equal(net.layers[0].bias, [0.2, -0.4, 0.6, 0.0])
        self.assertEqual(net.input_scale, 2.0)
        omega, leak = constrained_view(net.layers[1].tgim)
        np.testing.assert_array_equal(omega, np.full((2, 2), 0.5))
        self.assertEqual(leak, 1.0)
        self.assertEqual(net.meta['converted_from_levels'], 4)

    def test_zero_shot_equivalence(self):
        """Test that T_q == L*T conversion reproduces the ANN outputs"""
        for L, T in ((1, 4), (2, 2), (3, 2)):
            ann = build_qcfs_network([2, 6, 3], levels=L * T, seed=L)
            rng = Rng(L)
            for layer in ann.layers:
                layer.bias = rng.uniform(-0.3, 0.3, layer.bias.shape)
                layer.scale = float(rng.uniform(0.5, 1.5))
            features = rng.uniform(-2.0, 2.0, (50, 2))
            expected, _ = ann_forward(ann, features)
            logits = forward(hybrid_convert(ann, T=T, L=L), features).logits
            np.testing.assert_allclose(logits, expected, atol=1e-9)

    def test_convert_invalid(self):
        """Test that non-positive T or L raise a config error"""
        with self.assertRaises(ConfigError):
            hybrid_convert(build_qcfs_network([2, 2], levels=2, seed=0), T=0, L=2)

    def test_finetune_zero_epochs(self):
        """Test that zero fine-tuning epochs return an unchanged copy"""
        net = hybrid_convert(build_qcfs_network([2, 4, 2], levels=4, seed=0), T=2, L=2)
        features, labels = two_clusters()
        tuned = hybrid_finetune(net, features, labels, epochs=0)
        self.assertIsNot(tuned, net)
        for name, value in net.parameters().items():
            np.testing.assert_array_equal(tuned.parameters()[name], value)

    def test_finetune_keeps_thresholds(self):
        """Test that fine-tuning leaves thresholds and levels alone"""
        ann = build_qcfs_network([2, 4, 2], levels=4, seed=0)
        ann.layers[1].scale = 0.8
        net = hybrid_convert(ann, T=2, L=2)
        features, labels = two_clusters()
        tuned = hybrid_finetune(net, features, labels, epochs=1)
        self.assertEqual([l.neuron.threshold for l in tuned.layers], [1.0, 0.8])
        self.assertEqual([l.neuron.levels for l in tuned.layers], [2, 2])


class TestBlobTargets(unittest.TestCase):
    """Test cases for full-size training runs on the default blobs dataset"""

    @classmethod
    def setUpClass(cls):
        cls.features, cls.labels = make_dataset(SyntheticDataset(n_samples=600, n_classes=3, seed=7))

    def test_lmht_direct(self):
        """Test that a 2-32-32-3 LM-HT network with L=2, T=2 reaches 0.90"""
        net = build_network([2, 32, 32, 3], T=2, L=2, seed=0)
        trained, history = stbp_train(net, self.features, self.labels, TrainConfig(lr=0.05, epochs=200))
        _, acc = evaluate(trained, self.features, self.labels)
        self.assertGreaterEqual(acc, 0.90)
        self.assertLess(history[-1].loss, history[0].loss)

    def test_vanilla_bptt(self):
        """Test that the single-threshold BPTT baseline with T=4 reaches 0.85"""
        net = build_network([2, 32, 32, 3], T=4, L=1, seed=0, mixing='identity')
        trained, _ = stbp_train(net, self.features, self.labels,
                                TrainConfig(lr=0.05, epochs=200, mode='vanilla'))
        _, acc = evaluate(trained, self.features, self.labels)
        self.assertGreaterEqual(acc, 0.85)

    def test_hybrid_pipeline(self):
        """Test QCFS training, zero-shot conversion and 30 epochs of fine-tuning"""
        ann, _ = train_qcfs_ann(self.features, self.labels, [2, 32, 32, 3], 4,
                                TrainConfig(lr=0.05, epochs=200, mode='qcfs'))
        _, ann_acc = evaluate_ann(ann, self.features, self.labels)
        self.assertGreaterEqual(ann_acc, 0.95)

        net = hybrid_convert(ann, T=2, L=2)
        _, zero_shot = evaluate(net, self.features, self.labels)
        self.assertGreaterEqual(zero_shot, ann_acc - 0.05)

        tuned = hybrid_finetune(net, self.features, self.labels, epochs=30)
        _, tuned_acc = evaluate(tuned, self.features, self.labels)
        self.assertGreaterEqual(tuned_acc, ann_acc - 0.01)


if __name__ == '__main__':
    unittest.main()
