import unittest

import numpy as np
from hypothesis import given, strategies as st

from lmht.errors import ConfigError, DimensionError
from lmht.neuron import (NeuronConfig, NeuronLayerState, integrate, lif_step, mht_fire,
                         mht_step, run_sequence)
from lmht.numerics import Rng


def _state(v):
    return NeuronLayerState(v=np.array([float(v)]))


class TestNeuronConfig(unittest.TestCase):
    """Test cases for the NeuronConfig class"""

    def test_defaults(self):
        """Test the default constants"""
        cfg = NeuronConfig()
        self.assertEqual(cfg.threshold, 1.0)
        self.assertEqual(cfg.levels, 1)
        self.assertEqual(cfg.leak, 1.0)
        self.assertEqual(cfg.v0, 0.0)

    def test_invalid(self):
        """Test that invalid constants raise a config error"""
        with self.assertRaises(ConfigError):
            NeuronConfig(threshold=0.0)
        with self.assertRaises(ConfigError):
            NeuronConfig(levels=0)
        with self.assertRaises(ConfigError):
            NeuronConfig(leak_period=0)

    def test_leak_schedule(self):
        """Test that the leak only acts on window starts"""
        cfg = NeuronConfig(leak=0.5, leak_period=3)
        np.testing.assert_array_equal(cfg.leak_factors(6), [0.5, 1.0, 1.0, 0.5, 1.0, 1.0])


class TestFiring(unittest.TestCase):
    """Test cases for mht_fire, mht_step and lif_step"""

    def test_mht_fire_examples(self):
        """Test the piecewise firing rule"""
        self.assertEqual(int(mht_fire(2.8, 1.0, 4)), 2)
        self.assertEqual(int(mht_fire(-0.3, 1.0, 2)), 0)
        self.assertEqual(int(mht_fire(7.0, 1.0, 2)), 2)
        self.assertEqual(int(mht_fire(1.0, 1.0, 1)), 1)

    @given(st.floats(-10, 10), st.floats(-10, 10), st.integers(1, 6))
    def test_monotone(self, a, b, levels):
        """Test that firing is non-decreasing in the potential"""
        lo, hi = min(a, b), max(a, b)
        self.assertLessEqual(int(mht_fire(lo, 1.0, levels)), int(mht_fire(hi, 1.0, levels)))

    @given(st.floats(-10, 10), st.sampled_from([0.25, 0.5, 2.0, 4.0]), st.integers(1, 6))
    def test_scaling(self, m, c, levels):
        """Test invariance under joint scaling of potential and threshold"""
        self.assertEqual(int(mht_fire(m, 1.0, levels)), int(mht_fire(c * m, c, levels)))

    def test_mht_step_examples(self):
        """Test single steps against hand traces"""
        spikes, state = mht_step(_state(0.4), np.array([1.6]), NeuronConfig(levels=2))
        self.assertEqual(int(spikes[0]), 2)
        self.assertAlmostEqual(float(state.v[0]), 0.0, delta=1e-12)

        spikes, state = mht_step(_state(0.5), np.array([0.0]), NeuronConfig(levels=2, leak=0.5))
        self.assertEqual(int(spikes[0]), 0)
        self.assertEqual(float(state.v[0]), 0.25)

        spikes, state = mht_step(_state(0.0), np.array([0.0]), NeuronConfig(levels=2))
        self.assertEqual(int(spikes[0]), 0)
        self.assertEqual(float(state.v[0]), 0.0)
        self.assertEqual(state.t, 1)

    def test_mht_step_shape(self):
        """Test that a mismatched current raises a dimension error"""
        with self.assertRaises(DimensionError):
            mht_step(_state(0.0), np.zeros(2), NeuronConfig())

    def test_lif_step(self):
        """Test the single-threshold step"""
        spikes, state = lif_step(_state(0.6), np.array([0.5]), NeuronConfig())
        self.assertEqual(int(spikes[0]), 1)
        self.assertAlmostEqual(float(state.v[0]), 0.1, delta=1e-12)

        spikes, state = lif_step(_state(0.6), np.array([5.0]), NeuronConfig())
        self.assertEqual(int(spikes[0]), 1)
        self.assertAlmostEqual(float(state.v[0]), 4.6, delta=1e-12)

        with self.assertRaises(ConfigError):
            lif_step(_state(0.0), np.array([1.0]), NeuronConfig(levels=2))

    def test_lif_trace(self):
        """Test a four-step IF trace"""
        spikes, potentials = run_sequence(NeuronConfig(), np.full((4, 1), 0.625))
        np.testing.assert_array_equal(spikes[:, 0], [0, 1, 0, 1])
        np.testing.assert_array_equal(potentials[:, 0], [0.625, 0.25, 0.875, 0.5])


class TestRunSequence(unittest.TestCase):
    """Test cases for run_sequence and integrate"""

    def test_example(self):
        """Test L=2, T=3 with constant current 0.9 and v0=0.5"""
        spikes, potentials = run_sequence(NeuronConfig(levels=2, v0=0.5), np.full((3, 1), 0.9))
        np.testing.assert_array_equal(spikes[:, 0], [1, 1, 1])
        self.assertAlmostEqual(float(potentials[-1, 0]), 0.2, delta=1e-12)

    def test_zero_current(self):
        """Test that a quiet neuron stays quiet"""
        spikes, potentials = run_sequence(NeuronConfig(levels=3), np.zeros((5, 4)))
        self.assertEqual(int(spikes.sum()), 0)
        self.assertTrue(np.all(potentials == 0.0))

    def test_lif_path_matches_mht(self):
        """Test that stepping with lif_step equals the L=1 multi-level path"""
        currents = Rng(11).uniform(-1.0, 2.0, (8, 5))
        cfg = NeuronConfig(leak=0.9)
        spikes, _ = run_sequence(cfg, currents)
        state = NeuronLayerState.initial(cfg, (5,))
        for t in range(8):
            step_spikes, state = lif_step(state, currents[t], cfg)
            np.testing.assert_array_equal(step_spikes, spikes[t])

    def test_soft_reset_conservation(self):
        """Test m - v' == s * theta at every step"""
        cfg = NeuronConfig(threshold=0.7, levels=3, leak=0.8, v0=0.2)
        trace = integrate(cfg, Rng(12).uniform(-1.0, 3.0, (10, 6)))
        np.testing.assert_allclose(trace.membrane - trace.potentials, trace.spikes * 0.7, atol=1e-12)
        self.assertTrue(np.all((trace.spikes >= 0) & (trace.spikes <= 3)))

    def test_negative_potential_persists(self):
        """Test that a negative potential is not clamped"""
        _, potentials = run_sequence(NeuronConfig(), np.array([[-0.4], [0.1]]))
        self.assertAlmostEqual(float(potentials[0, 0]), -0.4, delta=1e-12)
        self.assertAlmostEqual(float(potentials[1, 0]), -0.3, delta=1e-12)

    def test_membrane_bound(self):
        """Test that v stays in [0, theta) for in-range currents"""
        rng = Rng(13)
        for trial in range(200):
            r = rng.derive(trial)
            levels = int(r.integers(1, 4))
            threshold = float(r.uniform(0.5, 2.0))
            cfg = NeuronConfig(threshold=threshold, levels=levels, v0=float(r.uniform(0.0, threshold)))
            _, potentials = run_sequence(cfg, r.uniform(0.0, levels * threshold, (8, 3)))
            self.assertTrue(np.all(potentials >= 0.0))
            self.assertTrue(np.all(potentials < threshold))


if __name__ == '__main__':
    unittest.main()
