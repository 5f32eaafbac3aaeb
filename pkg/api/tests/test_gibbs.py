import math

import numpy as np
from django.test import SimpleTestCase
from scipy import stats

from api.spinglass.gibbs import (
    energies, enumerate_states, free_energy, gibbs_draw, gibbs_draw_states, internal_energy, omega, omega_mask,
)
from api.spinglass.model import SpinConfiguration, custom_family, random_energy_model, sherrington_kirkpatrick
from api.utils.numerics import central_difference
from api.utils.validation import ConfigError, EstimationError, InfeasibleError


def brute_energies(family, couplings):
    out = []
    for bits in range(family.n_states):
        sigma = SpinConfiguration(bits, family.volume)
        out.append(-sum(j * sigma.parity(x) for j, x in zip(couplings, family.subsets)))
    return np.array(out)


class EnergyTests(SimpleTestCase):
    def test_sparse_path_matches_brute_force(self):
        family = sherrington_kirkpatrick(3)
        couplings = np.array([0.3, -1.1, 0.8])
        np.testing.assert_allclose(energies(family, couplings), brute_energies(family, couplings), atol=1e-14)

    def test_transform_path_matches_brute_force(self):
        family = random_energy_model(3)
        couplings = np.linspace(-1.0, 1.0, family.size)
        np.testing.assert_allclose(energies(family, couplings), brute_energies(family, couplings), atol=1e-13)

    def test_batched_rows_match_single(self):
        family = sherrington_kirkpatrick(4)
        batch = np.random.default_rng(0).standard_normal((5, family.size))
        stacked = energies(family, batch)
        for row, couplings in enumerate(batch):
            np.testing.assert_allclose(stacked[row], energies(family, couplings))

    def test_wrong_coupling_count(self):
        with self.assertRaises(ValueError):
            energies(sherrington_kirkpatrick(3), np.zeros(2))


class GibbsTableTests(SimpleTestCase):
    def setUp(self):
        self.family = custom_family([((0, 1), 1.0)], volume=2)

    def test_single_coupling_closed_forms(self):
        beta, coupling = 0.8, 0.6
        table = enumerate_states(self.family, [coupling], beta)
        pressure, free = free_energy(table)
        self.assertAlmostEqual(pressure, math.log(4 * math.cosh(beta * coupling)), places=13)
        self.assertAlmostEqual(free, -pressure / beta, places=13)
        self.assertAlmostEqual(omega(table, self.family, [(0, 1)]), math.tanh(beta * coupling), places=13)
        self.assertAlmostEqual(internal_energy(table), -coupling * math.tanh(beta * coupling), places=13)
        self.assertAlmostEqual(omega(table, self.family, [(0,)]), 0.0, places=14)

    def test_probabilities_normalized(self):
        family = sherrington_kirkpatrick(5)
        table = enumerate_states(family, np.full(family.size, 3.0), 2.0)
        self.assertAlmostEqual(float(table.probabilities.sum()), 1.0, places=12)

    def test_spectrum_matches_single_pass(self):
        family = sherrington_kirkpatrick(4)
        couplings = np.random.default_rng(1).standard_normal(family.size)
        table = enumerate_states(family, couplings, 1.3)
        for mask in range(family.n_states):
            self.assertAlmostEqual(table.spectrum[mask], omega_mask(table, mask), places=12)
        self.assertEqual(table.spectrum[0], 1.0)

    def test_parity_product_uses_symmetric_difference(self):
        family = sherrington_kirkpatrick(3)
        table = enumerate_states(family, [0.5, -0.2, 0.9], 1.0)
        self.assertAlmostEqual(omega(table, family, [(0, 1), (1, 2)]), omega(table, family, [(0, 2)]), places=14)
        self.assertEqual(omega(table, family, [(0, 1), (0, 1)]), 1.0)

    def test_beta_zero(self):
        table = enumerate_states(self.family, [2.0], 0.0)
        self.assertAlmostEqual(float(table.log_z), math.log(4))
        self.assertAlmostEqual(omega(table, self.family, [(0, 1)]), 0.0, places=15)
        with self.assertRaises(EstimationError):
            free_energy(table)

    def test_errors(self):
        with self.assertRaises(EstimationError):
            enumerate_states(self.family, [1.0], -0.1)
        with self.assertRaises(ConfigError):
            omega(enumerate_states(self.family, [1.0], 1.0), self.family, [(0, 2)])
        with self.assertRaises(InfeasibleError):
            enumerate_states(sherrington_kirkpatrick(6), np.zeros(15), 1.0, max_volume=5)

    def test_draws_follow_gibbs_weights(self):
        family = sherrington_kirkpatrick(3)
        table = enumerate_states(family, [0.7, -0.4, 1.2], 1.0)
        rng = np.random.default_rng(11)
        counts = np.zeros(family.n_states)
        for _ in range(4000):
            counts[gibbs_draw(table, rng).bits] += 1
        np.testing.assert_allclose(counts / 4000, table.probabilities, atol=0.03)

    def test_batched_draws_pass_chi_square(self):
        family = sherrington_kirkpatrick(3)
        table = enumerate_states(family, [0.7, -0.4, 1.2], 1.0)
        states = gibbs_draw_states(table, np.random.default_rng(5), size=20000)
        counts = np.bincount(states, minlength=family.n_states)
        result = stats.chisquare(counts, table.probabilities * counts.sum())
        self.assertGreater(result.pvalue, 1e-3)


class ThermodynamicIdentityTests(SimpleTestCase):
    def setUp(self):
        self.family = sherrington_kirkpatrick(4)
        self.couplings = np.random.default_rng(11).standard_normal(self.family.size)

    def pressure(self, beta, couplings=None, family=None):
        family = family or self.family
        couplings = self.couplings if couplings is None else couplings
        return float(enumerate_states(family, couplings, beta).log_z)

    def test_pressure_derivative_is_minus_internal_energy(self):
        for beta in (0.3, 0.9, 1.6):
            slope = float(central_difference(self.pressure, beta, 1e-3))
            energy = internal_energy(enumerate_states(self.family, self.couplings, beta))
            self.assertAlmostEqual(-slope, float(energy), places=9)

    def test_pressure_is_convex_in_beta(self):
        betas = np.linspace(0.0, 2.0, 41)
        values = np.array([self.pressure(beta) for beta in betas])
        self.assertTrue(np.all(values[:-2] - 2 * values[1:-1] + values[2:] >= -1e-12))

    def test_gauge_flip_leaves_partition_function_unchanged(self):
        for site in range(self.family.volume):
            flipped = np.array([
                -j if site in subset else j for j, subset in zip(self.couplings, self.family.subsets)
            ])
            self.assertAlmostEqual(self.pressure(0.8, flipped), self.pressure(0.8), places=12)

    def test_disjoint_blocks_add(self):
        joint = custom_family([((0, 1), 1.0), ((2, 3), 1.0)], volume=4)
        block = custom_family([((0, 1), 1.0)], volume=2)
        couplings = [0.7, -1.3]
        total = self.pressure(1.2, couplings, joint)
        parts = self.pressure(1.2, [couplings[0]], block) + self.pressure(1.2, [couplings[1]], block)
        self.assertAlmostEqual(total, parts, places=12)
