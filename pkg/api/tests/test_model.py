import math

import numpy as np
from django.test import SimpleTestCase

from api.spinglass.model import (
    SpinConfiguration, build_family, covariance, custom_family, edwards_anderson, long_range, mask_parity,
    p_spin, random_energy_model, sherrington_kirkpatrick, stability_report, subset_mask,
)
from api.utils.validation import ConfigError, InfeasibleError


class SpinConfigurationTests(SimpleTestCase):
    def test_bit_convention(self):
        sigma = SpinConfiguration.from_spins([1, -1, 1])
        self.assertEqual(sigma.bits, 0b101)
        self.assertEqual(sigma.spins, (1, -1, 1))

    def test_parity_matches_product_of_spins(self):
        sigma = SpinConfiguration.from_spins([1, -1, -1, 1])
        for sites in [(0,), (1,), (1, 2), (0, 1, 3), (0, 1, 2, 3)]:
            expected = math.prod(sigma.spins[s] for s in sites)
            self.assertEqual(sigma.parity(sites), expected)
            self.assertEqual(mask_parity(sigma.bits, subset_mask(sites)), expected)

    def test_rejects_bad_spins(self):
        with self.assertRaises(ConfigError):
            SpinConfiguration.from_spins([1, 0])
        with self.assertRaises(ConfigError):
            SpinConfiguration(bits=8, volume=3)


class PresetTests(SimpleTestCase):
    def test_ea_per_site_variance_is_dimension(self):
        for dimension, side in [(1, 5), (2, 3), (2, 4), (3, 2)]:
            family = edwards_anderson(dimension, side)
            self.assertAlmostEqual(family.per_site_variance, dimension, places=12)

    def test_ea_side_two_merges_double_bonds(self):
        family = edwards_anderson(1, 2)
        self.assertEqual(family.subsets, ((0, 1),))
        self.assertEqual(family.variances, (2.0,))

    def test_open_chain(self):
        family = edwards_anderson(1, 3, periodic=False)
        self.assertEqual(family.subsets, ((0, 1), (1, 2)))
        self.assertEqual(family.size, 2)

    def test_sk_per_site_variance(self):
        for n in (2, 5, 9):
            family = sherrington_kirkpatrick(n)
            self.assertEqual(family.size, n * (n - 1) // 2)
            self.assertAlmostEqual(family.per_site_variance, (n - 1) / (2 * n), places=14)

    def test_sk_deviation_convention(self):
        family = sherrington_kirkpatrick(4, convention='deviation')
        self.assertAlmostEqual(family.variances[0], 1 / 16)

    def test_rem_per_site_variance(self):
        for n in (1, 3, 6):
            family = random_energy_model(n)
            self.assertEqual(family.size, 2**n - 1)
            self.assertAlmostEqual(family.per_site_variance, 1 - 2.0**-n, places=12)

    def test_rem_cap(self):
        with self.assertRaises(InfeasibleError):
            random_energy_model(21)

    def test_p_spin(self):
        family = p_spin(5, 3)
        self.assertEqual(family.size, 10)
        self.assertAlmostEqual(family.variances[0], 5.0**-3)
        with self.assertRaises(ConfigError):
            p_spin(3, 4)

    def test_long_range_needs_alpha_above_half(self):
        with self.assertRaises(ConfigError):
            long_range(0.5, 1, 4)

    def test_long_range_minimum_image(self):
        family = long_range(1.0, 1, 6)
        variances = dict(family.terms)
        self.assertAlmostEqual(variances[(0, 5)], 1.0)
        self.assertAlmostEqual(variances[(0, 3)], 3.0**-2)

    def test_custom_family_canonical_order(self):
        family = custom_family([((2, 0), 1.0), ((1,), 0.5)], volume=3)
        self.assertEqual(family.subsets, ((0, 2), (1,)))
        self.assertAlmostEqual(stability_report(family).claimed_bound, 0.5)

    def test_custom_family_errors(self):
        with self.assertRaises(ConfigError):
            custom_family([((0, 3), 1.0)], volume=3)
        with self.assertRaises(ConfigError):
            custom_family([((0, 1), 1.0), ((1, 0), 2.0)], volume=2)
        with self.assertRaises(ConfigError):
            custom_family([((0, 1), 0.0)], volume=2)
        with self.assertRaises(InfeasibleError):
            custom_family([((0, 1), 1.0)], volume=25)

    def test_build_family(self):
        family = build_family('SK', n=4)
        self.assertEqual(family.describe(), 'SK(n=4)')
        with self.assertRaises(ConfigError):
            build_family('spin-ice', n=4)


class CovarianceTests(SimpleTestCase):
    def test_matches_direct_sum(self):
        family = custom_family([((0, 1), 0.7), ((1, 2, 3), 1.3), ((2,), 0.4)], volume=4)
        sigma = SpinConfiguration.from_spins([1, -1, 1, 1])
        tau = SpinConfiguration.from_spins([-1, -1, 1, -1])
        expected = sum(v * sigma.parity(x) * tau.parity(x) for x, v in family.terms)
        raw, normalized = covariance(family, sigma, tau)
        self.assertAlmostEqual(raw, expected, places=14)
        self.assertAlmostEqual(normalized, expected / 4, places=14)

    def test_diagonal_is_total_variance(self):
        family = sherrington_kirkpatrick(5)
        sigma = SpinConfiguration(bits=0b10110, volume=5)
        raw, _ = covariance(family, sigma, sigma)
        self.assertAlmostEqual(raw, family.total_variance, places=14)

    def test_profile_matches_covariance(self):
        family = edwards_anderson(2, 3)
        rng = np.random.default_rng(3)
        for _ in range(20):
            a, b = (int(v) for v in rng.integers(0, family.n_states, size=2))
            raw, _ = covariance(family, SpinConfiguration(a, 9), SpinConfiguration(b, 9))
            self.assertAlmostEqual(family.covariance_profile[a ^ b], raw, places=12)

    def test_symmetric_and_bounded_by_diagonal(self):
        rng = np.random.default_rng(5)
        for family in (sherrington_kirkpatrick(5), long_range(1.0, 1, 5), p_spin(5, 3)):
            for _ in range(20):
                sigma, tau = (SpinConfiguration(int(b), 5) for b in rng.integers(0, family.n_states, size=2))
                forward, _ = covariance(family, sigma, tau)
                backward, _ = covariance(family, tau, sigma)
                self.assertEqual(forward, backward)
                diagonal = math.sqrt(covariance(family, sigma, sigma)[0] * covariance(family, tau, tau)[0])
                self.assertLessEqual(abs(forward), diagonal + 1e-12, family.describe())

    def test_translation_covariance_on_periodic_lattice(self):
        family = edwards_anderson(2, 3)
        geometry = family.geometry
        rng = np.random.default_rng(8)
        for _ in range(10):
            a, b = (int(v) for v in rng.integers(0, family.n_states, size=2))
            raw, _ = covariance(family, SpinConfiguration(a, 9), SpinConfiguration(b, 9))
            for shift in geometry.translations():
                moved, _ = covariance(family, SpinConfiguration(geometry.translate(a, shift), 9),
                                      SpinConfiguration(geometry.translate(b, shift), 9))
                self.assertAlmostEqual(moved, raw, places=12)

    def test_volume_mismatch(self):
        family = sherrington_kirkpatrick(3)
        with self.assertRaises(ConfigError):
            covariance(family, SpinConfiguration(0, 3), SpinConfiguration(0, 4))


class StabilityTests(SimpleTestCase):
    def test_translation_invariant_shares(self):
        report = stability_report(edwards_anderson(2, 4))
        self.assertTrue(report.satisfied)
        self.assertAlmostEqual(report.site_share, 2.0)
        self.assertAlmostEqual(report.class_sum, 2.0)

    def test_long_range_claimed_constant_can_fail(self):
        report = stability_report(long_range(1.5, 1, 16))
        self.assertFalse(report.satisfied)
        self.assertEqual(report.effective_bound, report.per_site_variance)

    def test_long_range_slow_decay_within_constant(self):
        report = stability_report(long_range(0.75, 1, 16))
        self.assertTrue(report.satisfied)
        self.assertAlmostEqual(report.claimed_bound, 2.0)
