import json
import math
import unittest

import numpy as np
import pytest

from hardylab.brownian_lab import BrownianConfig
from hardylab.decompositions import (
    C1,
    NonZeroMeanError,
    davis_garsia_decompose,
    hardy_thin_thick,
    thin_thick_constant,
    truncation_split,
)
from hardylab.martingale_core import (
    constant_martingale,
    difference,
    from_differences,
    is_hardy_martingale,
    load_table,
    random_hardy,
    random_martingale,
)
from hardylab.torus_fn import GridFn, NotHardyError, grid_angles


class TestTruncationSplit(unittest.TestCase):

    def test_small_function_is_kept(self):
        """Test g = h and b = 0 when |h| <= 2M everywhere."""
        h = GridFn.from_coefficients([0.0, 1.0], 8)
        split = truncation_split(h, 1.0)
        self.assertIsInstance(split.g, GridFn)
        np.testing.assert_allclose(split.g.values, h.values, atol=1e-15)
        np.testing.assert_allclose(split.b.values, 0.0, atol=1e-15)
        self.assertTrue(split.within_2m)

    def test_zero_level_moves_everything_to_b(self):
        """Test M = 0 gives g = 0 and slack E|h| * 3/4."""
        h = GridFn.from_coefficients([0.0, 1.0], 8)
        split = truncation_split(h, 0.0)
        np.testing.assert_allclose(split.g.values, 0.0)
        self.assertAlmostEqual(split.slack, 0.75, places=12)
        self.assertTrue(split.within_4m)

    def test_recentred_truncation(self):
        """Test g = 1_D h - E(1_D h) on a four-point array."""
        split = truncation_split(np.array([3.0, -1.0, -1.0, -1.0]), 0.5)
        np.testing.assert_allclose(split.g, [0.75, -0.25, -0.25, -0.25])
        np.testing.assert_allclose(split.b, [2.25, -0.75, -0.75, -0.75])
        self.assertEqual(split.sup_g, 0.75)

    def test_two_m_bound_can_fail(self):
        """Test recentring can push |g| above 2M while staying below 4M."""
        split = truncation_split(np.array([-1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, -5.0]), 0.5)
        self.assertAlmostEqual(split.sup_g, 1.625)
        self.assertFalse(split.within_2m)
        self.assertTrue(split.within_4m)

    def test_nonzero_mean(self):
        """Test that inputs with nonzero mean are refused."""
        with self.assertRaises(NonZeroMeanError):
            truncation_split(np.array([1.0, 1.0]), 1.0)

    def test_negative_level(self):
        """Test that M < 0 is refused."""
        with self.assertRaises(ValueError):
            truncation_split(np.array([1.0, -1.0]), -1.0)

    def test_to_dict(self):
        """Test the split summary keys."""
        data = truncation_split(np.array([1.0, -1.0]), 1.0).to_dict()
        self.assertEqual(set(data), {"slack", "sup_g", "M", "within_4m", "within_2m"})


class TestDavisGarsia(unittest.TestCase):

    def test_constant_martingale(self):
        """Test G = F and B = 0 for a constant martingale."""
        F = constant_martingale(2, 4, 2.0)
        d = davis_garsia_decompose(F)
        np.testing.assert_allclose(d.G.terminal, F.terminal)
        np.testing.assert_allclose(d.B.terminal, 0.0)
        self.assertEqual(d.diagnostics["uniform_ratios"], [0.0, 0.0])
        self.assertTrue(all(d.checks.values()))

    def test_first_step_from_zero_goes_to_b(self):
        """Test F_0 = 0 gives M_0 = 0, so the whole first difference lands in B."""
        F = from_differences(0.0, [np.exp(1j * grid_angles(8))], 8)
        d = davis_garsia_decompose(F)
        np.testing.assert_allclose(d.G.terminal, 0.0)
        np.testing.assert_allclose(d.B.terminal, F.terminal)
        self.assertAlmostEqual(d.diagnostics["sum_abs_dB"], 1.0)

    def test_random_martingales(self):
        """Test exactness, the 4M bound and the factor-8 estimate on random inputs."""
        for seed, kind in enumerate(["gaussian", "sign", "sparse"]):
            F = random_martingale(3, 8, seed=seed, kind=kind, initial=0.5)
            d = davis_garsia_decompose(F)
            self.assertTrue(d.checks["exact"])
            self.assertTrue(d.checks["pointwise_4m"])
            self.assertTrue(d.checks["clb2"])
            self.assertLessEqual(max(d.diagnostics["uniform_ratios"]), 4.0 + 1e-10)
            np.testing.assert_allclose(d.G.terminal + d.B.terminal, F.terminal, atol=1e-12)

    def test_g_starts_at_f0_and_b_at_zero(self):
        """Test G_0 = F_0 and B_0 = 0."""
        F = random_martingale(2, 4, seed=9, initial=1.5 - 0.5j)
        d = davis_garsia_decompose(F)
        self.assertAlmostEqual(complex(d.G.levels[0][()]), 1.5 - 0.5j)
        self.assertAlmostEqual(complex(d.B.levels[0][()]), 0j)

    def test_differences_are_martingale_differences(self):
        """Test E_{k-1} Delta G_k = 0."""
        d = davis_garsia_decompose(random_martingale(2, 8, seed=4))
        for k in (1, 2):
            np.testing.assert_allclose(difference(d.G, k).values.mean(axis=-1), 0.0, atol=1e-12)

    def test_certificate_attached(self):
        """Test the quadratic iteration certificate is part of the result."""
        data = davis_garsia_decompose(random_martingale(2, 4, seed=1)).to_dict()
        self.assertEqual(data["certificate"]["form"], "quadratic")
        self.assertEqual(data["mode"], "exact")
        self.assertIn("clb3_best_constant", data)


@pytest.fixture
def mc_cfg():
    """Small Monte Carlo budget for thin-thick runs."""
    return BrownianConfig(dt=1e-3, max_steps=100_000, n_paths=1024, seed=5, block_size=256, threads=2)


class TestHardyThinThick:

    def test_constant(self):
        """Test C1 = 16 * 27 * sqrt(10)."""
        assert C1 == pytest.approx(432.0 * math.sqrt(10.0))
        assert thin_thick_constant(2.0) == pytest.approx(4.0 * math.sqrt(10.0))

    def test_random_hardy_martingale(self, mc_cfg):
        """Test the thin-thick checks on a small random Hardy martingale."""
        F = random_hardy(2, 8, 2, scale=3.0, seed=1, initial=1.0)
        d = hardy_thin_thick(F, mc_cfg)
        assert d.checks["exact"]
        assert d.checks["G_hardy"]
        assert d.checks["b33"]
        assert d.checks["b3"]
        assert is_hardy_martingale(d.B).ok
        assert d.diagnostics["paths"] == mc_cfg.n_paths
        assert len(d.diagnostics["b33_ratios"]) == 2
        assert d.certificate.form == "partial_sum"
        assert d.certificate.passed

    def test_zero_differences_skip_simulation(self, mc_cfg):
        """Test a constant Hardy martingale splits into G = F, B = 0."""
        F = constant_martingale(2, 8, 1.0)
        d = hardy_thin_thick(F, mc_cfg)
        np.testing.assert_allclose(d.B.terminal, 0.0)
        assert all(d.checks.values())

    def test_rejects_non_hardy(self, mc_cfg):
        """Test a general martingale is refused."""
        with pytest.raises(NotHardyError):
            hardy_thin_thick(random_martingale(2, 8, seed=2), mc_cfg)

    def test_save(self, tmp_path):
        """Test save writes both parts and the diagnostics."""
        d = davis_garsia_decompose(random_martingale(2, 4, seed=3))
        prefix = str(tmp_path / "dg")
        d.save(prefix, "csv")
        G = load_table(f"{prefix}_G.csv")
        np.testing.assert_allclose(G.terminal, d.G.terminal, atol=1e-15)
        with open(f"{prefix}.json") as handle:
            data = json.load(handle)
        assert data["pass"] == d.passed
        assert "uniform_ratios" in data

    def test_save_thin_thick_payload(self, mc_cfg, tmp_path):
        """Test the thin-thick diagnostics file is plain JSON with boolean flags."""
        d = hardy_thin_thick(random_hardy(1, 8, 2, seed=0, initial=1.0), mc_cfg)
        assert type(d.certificate.passed) is bool
        assert type(d.passed) is bool
        prefix = str(tmp_path / "hardy")
        d.save(prefix, "npz")
        with open(f"{prefix}.json") as handle:
            data = json.load(handle)
        assert data["pass"] is d.passed
        assert isinstance(data["certificate"]["pass"], bool)
        assert all(isinstance(ok, bool) for ok in data["checks"].values())
        np.testing.assert_allclose(load_table(f"{prefix}_B.npz").terminal, d.B.terminal)

    def test_save_leaves_no_partial_output(self, mc_cfg, tmp_path):
        """Test nothing is written when the diagnostics cannot be serialized."""
        d = hardy_thin_thick(random_hardy(1, 8, 2, seed=0, initial=1.0), mc_cfg)
        d.diagnostics["unserializable"] = object()
        with pytest.raises(TypeError):
            d.save(str(tmp_path / "hardy"), "npz")
        assert list(tmp_path.iterdir()) == []
