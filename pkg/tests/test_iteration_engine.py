import json
import math
import unittest

import numpy as np
import pytest

from hardylab.iteration_engine import (
    DomainViolationError,
    IterationInput,
    conclude_partial_sum,
    conclude_quadratic,
    scalar_lemma_slack,
    verify_hypothesis_partial_sum,
    verify_hypothesis_quadratic,
)


def _rotation_input(v, initial=1.0):
    """
    u_k = i v_k Z_{k-1} / |Z_{k-1}|, so |Z_k|^2 = |Z_{k-1}|^2 + v_k^2 exactly
    and the partial-sum hypothesis holds with equality.
    """
    v = np.asarray(v, dtype=float)
    z = np.full(v.shape[1:], complex(initial))
    u = []
    for row in v:
        step = 1j * row * z / np.abs(z)
        u.append(step)
        z = z + step
    return IterationInput(u, v, np.zeros_like(v), initial=initial)


class TestScalarLemma(unittest.TestCase):

    def test_known_value(self):
        """Test s = A = B = 1 gives sqrt(2) - 1."""
        self.assertAlmostEqual(scalar_lemma_slack(1.0, 1.0, 1.0), math.sqrt(2.0) - 1.0, places=12)

    def test_zero_multiplier(self):
        """Test s = 0 leaves (A^2 + B^2)^{1/2} - A."""
        self.assertAlmostEqual(scalar_lemma_slack(0.0, 3.0, 4.0), 2.0, places=12)

    def test_random_domain_is_nonnegative(self):
        """Test the slack stays above -1e-12 on random samples."""
        rng = np.random.Generator(np.random.Philox(key=1))
        s = rng.random(100_000)
        A = rng.random(100_000) * 1e3
        B = rng.random(100_000) * 1e3
        self.assertGreaterEqual(float(np.min(scalar_lemma_slack(s, A, B))), -1e-12)

    def test_tiny_b_is_stable(self):
        """Test no cancellation when B is far below A."""
        self.assertGreaterEqual(scalar_lemma_slack(0.0, 1e8, 1e-6), 0.0)

    def test_domain_violations(self):
        """Test that s outside [0, 1] and negative A or B are refused."""
        with self.assertRaises(DomainViolationError):
            scalar_lemma_slack(1.5, 1.0, 1.0)
        with self.assertRaises(DomainViolationError):
            scalar_lemma_slack(0.5, -1.0, 1.0)
        with self.assertRaises(DomainViolationError):
            scalar_lemma_slack(0.5, 1.0, -1.0)


class TestIterationInput(unittest.TestCase):

    def test_unequal_lengths(self):
        """Test that sequences of different lengths are refused."""
        with self.assertRaises(DomainViolationError):
            IterationInput([np.ones(2)], [np.ones(2), np.ones(2)], [np.ones(2)])

    def test_negative_v(self):
        """Test that negative v is refused."""
        with self.assertRaises(DomainViolationError):
            IterationInput([np.ones(2)], [-np.ones(2)], [np.ones(2)])

    def test_empty_sequences(self):
        """Test that zero steps are refused."""
        with self.assertRaises(DomainViolationError):
            IterationInput([], [], [])

    def test_unknown_mode(self):
        """Test that only exact and monte-carlo modes are accepted."""
        with self.assertRaises(DomainViolationError):
            IterationInput([np.ones(2)], [np.ones(2)], [np.ones(2)], mode="symbolic")

    def test_partial_sums_start_at_initial(self):
        """Test |Z_0| = |initial| and cumulative sums after it."""
        inp = IterationInput([np.array([1.0]), np.array([2.0])], [np.zeros(1)] * 2, [np.zeros(1)] * 2,
                             initial=-1.0)
        np.testing.assert_allclose(inp.partial_sums()[:, 0], [1.0, 0.0, 2.0])

    def test_quadratic_sums(self):
        """Test M_0 = 0 and M_k = (sum u^2)^{1/2}."""
        inp = IterationInput([np.array([3.0]), np.array([4.0])], [np.zeros(1)] * 2, [np.zeros(1)] * 2)
        np.testing.assert_allclose(inp.quadratic_sums()[:, 0], [0.0, 3.0, 5.0])


class TestPartialSum(unittest.TestCase):

    def test_equality_case(self):
        """Test that rotations satisfy the hypothesis with zero slack and the conclusion holds."""
        inp = _rotation_input(np.ones((3, 1)))
        np.testing.assert_allclose(verify_hypothesis_partial_sum(inp), 0.0, atol=1e-12)
        cert = conclude_partial_sum(inp)
        self.assertTrue(cert.applicable)
        self.assertTrue(cert.passed)
        self.assertAlmostEqual(cert.lhs, math.sqrt(3.0), places=12)
        self.assertAlmostEqual(cert.rhs, 4.0, places=12)

    def test_random_equality_cases(self):
        """Test many random rotation inputs on a grid pass with factor 2."""
        rng = np.random.Generator(np.random.Philox(key=4))
        for _ in range(200):
            n = int(rng.integers(1, 6))
            v = rng.exponential(1.0, (n, 16))
            cert = conclude_partial_sum(_rotation_input(v, initial=complex(*rng.standard_normal(2))))
            self.assertTrue(cert.passed)

    def test_epsilon_and_multipliers(self):
        """Test epsilon^2 = E|Z_n| / E max|Z_k| and |s| <= epsilon."""
        inp = _rotation_input(np.ones((2, 4)))
        cert = conclude_partial_sum(inp)
        self.assertAlmostEqual(cert.epsilon ** 2, cert.extra["final"] / cert.extra["peak"], places=12)
        self.assertTrue(np.all(np.sqrt(np.sum(cert.multipliers ** 2, axis=0)) <= cert.epsilon + 1e-12))

    def test_zero_input(self):
        """Test that all-zero sequences give lhs = rhs = 0."""
        zeros = [np.zeros(2)] * 2
        cert = conclude_partial_sum(IterationInput(zeros, zeros, zeros))
        self.assertEqual(cert.rhs, 0.0)
        self.assertEqual(cert.epsilon, 1.0)
        self.assertTrue(cert.passed)

    def test_failing_hypothesis_is_reported(self):
        """Test that a violated hypothesis marks the certificate inapplicable and warns."""
        inp = IterationInput([np.zeros(2)], [np.full(2, 5.0)], [np.zeros(2)], initial=1.0)
        with self.assertLogs("hardylab.iteration_engine", level="WARNING"):
            cert = conclude_partial_sum(inp)
        self.assertFalse(cert.applicable)
        self.assertFalse(cert.passed)

    def test_certificate_json(self):
        """Test the certificate serializes with its schema keys."""
        data = json.loads(conclude_partial_sum(_rotation_input(np.ones((2, 1)))).to_json())
        self.assertEqual(set(data), {"form", "steps", "epsilon", "lhs", "rhs", "pass", "applicable", "mode"})
        self.assertEqual(data["form"], "partial_sum")


class TestQuadratic:

    def test_equality_case(self):
        """Test v = u, w = 0 gives zero slack and lhs = E M_n."""
        rng = np.random.Generator(np.random.Philox(key=2))
        u = rng.exponential(1.0, (4, 32))
        inp = IterationInput(u, u, np.zeros_like(u))
        np.testing.assert_allclose(verify_hypothesis_quadratic(inp), 0.0, atol=1e-12)
        cert = conclude_quadratic(inp)
        assert cert.passed
        assert cert.lhs == pytest.approx(cert.rhs / 2.0)

    def test_empty_split(self):
        """Test v = w = 0 satisfies the hypothesis since M_k is nondecreasing."""
        u = np.abs(np.random.Generator(np.random.Philox(key=3)).standard_normal((3, 8)))
        inp = IterationInput(u, np.zeros_like(u), np.zeros_like(u))
        assert np.all(verify_hypothesis_quadratic(inp) >= -1e-12)
        cert = conclude_quadratic(inp)
        assert cert.passed
        assert cert.lhs == 0.0

    def test_overlarge_thick_part_is_inapplicable(self):
        """Test w = u breaks the hypothesis once M_{k-1} > 0."""
        u = np.ones((2, 4))
        inp = IterationInput(u, np.zeros_like(u), u)
        assert verify_hypothesis_quadratic(inp)[1] < 0
        assert not conclude_quadratic(inp).applicable

    def test_monte_carlo_tolerance_per_step(self):
        """Test per-step tolerances are broadcast and accepted."""
        u = np.ones((2, 4))
        inp = IterationInput(u, u * 1.0000001, np.zeros_like(u), mode="monte-carlo", tolerance=[1e-3, 1e-3])
        cert = conclude_quadratic(inp)
        assert cert.applicable
        assert cert.mode == "monte-carlo"


class TestDuality(unittest.TestCase):

    def test_multipliers_attain_the_bound(self):
        """Test E sum v_k s_k = epsilon E(sum v_k^2)^{1/2} when the square function never vanishes."""
        rng = np.random.Generator(np.random.Philox(key=12))
        for _ in range(50):
            v = rng.exponential(1.0, (3, 8)) + 1e-3
            cert = conclude_partial_sum(_rotation_input(v, initial=1.0 + rng.random()))
            paired = float(np.mean(np.sum(v * cert.multipliers, axis=0)))
            bound = cert.epsilon * float(np.mean(np.sqrt(np.sum(v ** 2, axis=0))))
            self.assertAlmostEqual(paired, bound, delta=1e-10)
            self.assertAlmostEqual(cert.duality_gap, 0.0, delta=1e-10)

    def test_vanishing_square_function_gets_zero_multipliers(self):
        """Test s_k = 0 where sum v_m^2 = 0, keeping the gap at zero."""
        v = np.array([[0.0, 1.0], [0.0, 2.0]])
        u = np.zeros_like(v)
        cert = conclude_quadratic(IterationInput(u, v, np.zeros_like(v)))
        np.testing.assert_array_equal(cert.multipliers[:, 0], 0.0)
        self.assertAlmostEqual(cert.duality_gap, 0.0, delta=1e-12)


class TestCertificateTypes:

    @pytest.mark.parametrize("conclude", [conclude_partial_sum, conclude_quadratic])
    def test_flags_are_python_types(self, conclude):
        """Test pass flags are bool and bounds are float, so certificates dump to JSON."""
        cert = conclude(_rotation_input(np.ones((2, 4))))
        assert type(cert.passed) is bool
        assert type(cert.conclusion_holds) is bool
        assert type(cert.rhs) is float
        assert json.loads(json.dumps(cert.to_dict()))["pass"] is cert.passed
