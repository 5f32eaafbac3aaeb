import itertools
import math

import numpy as np
from django.test import SimpleTestCase
from scipy import integrate, stats

from api.spinglass.disorder import MonteCarlo, Quadrature
from api.spinglass.gibbs import enumerate_states
from api.spinglass.model import SpinConfiguration, covariance, custom_family, sherrington_kirkpatrick
from api.spinglass.observables import (
    ONE, ObservableFn, OverlapMonomial, omega_energy_monomial, omega_general_mc, omega_monomial_exact,
    overlap_matrix, parse_monomial, quenched_moment, site_overlap, sk_overlap_relation,
)
from api.utils.evaluation import QUADRATURE_REPLICAS
from api.utils.validation import ConfigError, EstimationError, InfeasibleError


def brute_force_omega(family, table, monomial, replicas):
    """Ω[G] by summing over all replica configurations."""
    probabilities = table.probabilities
    total = 0.0
    for states in itertools.product(range(family.n_states), repeat=replicas):
        weight = math.prod(probabilities[s] for s in states)
        value = 1.0
        for a, b in monomial.factors:
            _, q = covariance(family, SpinConfiguration(states[a - 1], family.volume),
                              SpinConfiguration(states[b - 1], family.volume))
            value *= q
        total += weight * value
    return total


class ParseMonomialTests(SimpleTestCase):
    def test_parse_and_print(self):
        monomial = parse_monomial('q[2,1]^2 * q[2,3]')
        self.assertEqual(monomial.factors, ((1, 2), (1, 2), (2, 3)))
        self.assertEqual(str(monomial), 'q[1,2]^2*q[2,3]')
        self.assertEqual(monomial.degree, 3)
        self.assertEqual(monomial.max_replica, 3)

    def test_constant(self):
        self.assertEqual(parse_monomial('1'), ONE)
        self.assertEqual(str(ONE), '1')

    def test_diagonal_factors(self):
        monomial = parse_monomial('q[1,1]*q[1,2]')
        self.assertEqual(monomial.diagonal_count, 1)
        self.assertEqual(monomial.off_diagonal, ((1, 2),))

    def test_errors(self):
        for text in ('q[1,2]+q[2,3]', 'q(1,2)', 'q[1,2]^0', 'q[0,1]', ''):
            with self.assertRaises(ConfigError, msg=text):
                parse_monomial(text)
        with self.assertRaises(ConfigError):
            parse_monomial('q[1,3]', replicas=2)


class ExactOmegaTests(SimpleTestCase):
    def setUp(self):
        self.family = custom_family([((0, 1), 0.8), ((1, 2), 1.2), ((0, 1, 2), 0.5)], volume=3)
        self.couplings = np.array([0.9, -0.4, 1.1])
        self.table = enumerate_states(self.family, self.couplings, 0.9)

    def test_matches_replica_enumeration(self):
        for text, replicas in [('q[1,2]', 2), ('q[1,2]^2', 2), ('q[1,2]*q[2,3]', 3),
                               ('q[1,1]*q[1,2]', 2), ('q[1,2]*q[1,3]*q[2,3]', 3)]:
            monomial = parse_monomial(text)
            exact = omega_monomial_exact(self.table, self.family, monomial)
            expected = brute_force_omega(self.family, self.table, monomial, replicas)
            self.assertAlmostEqual(exact, expected, places=12, msg=text)

    def test_replica_permutations_leave_omega_unchanged(self):
        for text in ('q[1,2]*q[2,3]', 'q[1,1]*q[1,2]', 'q[1,2]*q[1,3]*q[2,3]', 'q[1,2]^2*q[3,4]'):
            monomial = parse_monomial(text)
            value = omega_monomial_exact(self.table, self.family, monomial)
            labels = range(1, monomial.max_replica + 1)
            for image in itertools.permutations(labels):
                relabelled = monomial.relabel(dict(zip(labels, image)))
                self.assertAlmostEqual(omega_monomial_exact(self.table, self.family, relabelled), value,
                                       places=13, msg=f"{text} -> {relabelled}")

    def test_single_coupling_overlap(self):
        family = custom_family([((0, 1), 1.0)], volume=2)
        table = enumerate_states(family, [0.7], 1.2)
        value = omega_monomial_exact(table, family, OverlapMonomial(((1, 2),)))
        self.assertAlmostEqual(value, math.tanh(0.84) ** 2 / 2, places=14)

    def test_energy_attachment(self):
        monomial = parse_monomial('q[1,2]')
        exact = omega_energy_monomial(self.table, self.family, self.couplings, monomial, replica=1)
        energies = self.table.energies
        probabilities = self.table.probabilities
        expected = 0.0
        for a, b in itertools.product(range(8), repeat=2):
            _, q = covariance(self.family, SpinConfiguration(a, 3), SpinConfiguration(b, 3))
            expected += probabilities[a] * probabilities[b] * energies[a] / 3 * q
        self.assertAlmostEqual(exact, expected, places=12)

    def test_batched_table(self):
        batch = np.random.default_rng(2).standard_normal((4, self.family.size))
        table = enumerate_states(self.family, batch, 0.6)
        monomial = parse_monomial('q[1,2]*q[2,3]')
        values = omega_monomial_exact(table, self.family, monomial)
        for row, couplings in enumerate(batch):
            single = omega_monomial_exact(enumerate_states(self.family, couplings, 0.6), self.family, monomial)
            self.assertAlmostEqual(values[row], single, places=13)

    def test_caps(self):
        with self.assertRaises(InfeasibleError):
            omega_monomial_exact(self.table, self.family, parse_monomial('q[1,2]^4'))
        with self.assertRaises(InfeasibleError):
            omega_monomial_exact(self.table, self.family, parse_monomial('q[1,2]^3'), tuple_cap=26)


class OverlapTests(SimpleTestCase):
    def test_overlap_matrix_matches_covariance(self):
        family = sherrington_kirkpatrick(5)
        states = np.array([3, 17, 30])
        matrix = overlap_matrix(family, states)
        for a, b in itertools.product(range(3), repeat=2):
            _, expected = covariance(family, SpinConfiguration(int(states[a]), 5),
                                     SpinConfiguration(int(states[b]), 5))
            self.assertAlmostEqual(matrix[a, b], expected, places=14)

    def test_sk_site_overlap_relation(self):
        family = sherrington_kirkpatrick(6)
        sigma = SpinConfiguration.from_spins([1, 1, -1, 1, -1, -1])
        tau = SpinConfiguration.from_spins([1, -1, -1, 1, 1, -1])
        q_hat = site_overlap(sigma, tau)
        self.assertAlmostEqual(q_hat, 2 / 6)
        _, normalized = covariance(family, sigma, tau)
        self.assertAlmostEqual(sk_overlap_relation(q_hat, 6), normalized, places=14)


class QuenchedMomentTests(SimpleTestCase):
    def test_single_coupling_against_adaptive_integration(self):
        family = custom_family([((0, 1), 1.0)], volume=2)
        estimate = quenched_moment(family, 0.5, OverlapMonomial(((1, 2),)), Quadrature(40))
        density = stats.norm.pdf
        expected, _ = integrate.quad(lambda x: 0.5 * math.tanh(0.5 * x) ** 2 * density(x), -np.inf, np.inf,
                                     epsabs=1e-13)
        self.assertAlmostEqual(estimate.mean, expected, places=10)

    def test_beta_zero_vanishes(self):
        family = sherrington_kirkpatrick(4)
        estimate = quenched_moment(family, 0.0, parse_monomial('q[1,2]*q[2,3]'), MonteCarlo(50, 1))
        self.assertAlmostEqual(estimate.mean, 0.0, places=14)

    def test_self_overlap_is_deterministic(self):
        family = sherrington_kirkpatrick(4)
        estimate = quenched_moment(family, 1.0, parse_monomial('q[1,1]^2'), MonteCarlo(20, 1))
        self.assertAlmostEqual(estimate.mean, family.per_site_variance ** 2)
        self.assertEqual(estimate.stderr, 0.0)

    def test_replica_monte_carlo_agrees_with_exact(self):
        family = sherrington_kirkpatrick(4)
        scheme = MonteCarlo(60, 5)
        monomial = parse_monomial('q[1,2]')
        exact = quenched_moment(family, 1.2, monomial, scheme)
        sampled = quenched_moment(family, 1.2, ObservableFn.from_monomial(monomial, 1.0, replicas=2), scheme,
                                  draws=2000)
        self.assertLess(abs(exact.mean - sampled.mean), 0.01)

    def test_replica_monte_carlo_is_worker_independent(self):
        family = sherrington_kirkpatrick(4)
        observable = ObservableFn.clamped(parse_monomial('q[1,2]*q[2,3]'), -0.1, 0.1, replicas=3)
        scheme = MonteCarlo(40, 2)
        serial = quenched_moment(family, 0.9, observable, scheme, workers=1, draws=64)
        parallel = quenched_moment(family, 0.9, observable, scheme, workers=3, draws=64)
        self.assertEqual(serial.mean, parallel.mean)

    def test_replica_monte_carlo_under_quadrature_carries_replica_error(self):
        family = custom_family([((0, 1), 1.0)], volume=2)
        monomial = parse_monomial('q[1,2]')
        observable = ObservableFn.from_monomial(monomial, 1.0, replicas=2)
        exact = quenched_moment(family, 0.8, monomial, Quadrature(20))
        sampled = quenched_moment(family, 0.8, observable, Quadrature(20), draws=400, replica_seed=3)
        self.assertEqual(sampled.method, QUADRATURE_REPLICAS)
        self.assertEqual((sampled.seed, sampled.order), (3, 20))
        self.assertGreater(sampled.stderr, 0.0)
        self.assertLess(abs(sampled.mean - exact.mean), 5 * sampled.stderr)
        other = quenched_moment(family, 0.8, observable, Quadrature(20), draws=400, replica_seed=4)
        self.assertNotEqual(other.mean, sampled.mean)

    def test_bound_violation(self):
        family = sherrington_kirkpatrick(3)
        table = enumerate_states(family, [1.0, 1.0, 1.0], 1.0)
        observable = ObservableFn(lambda q: q[..., 0, 0] * 10.0, replicas=1, bound=1.0, name='big')
        with self.assertRaises(EstimationError):
            omega_general_mc(table, family, observable, 10, np.random.default_rng(0))
        with self.assertRaises(EstimationError):
            omega_general_mc(table, family, ObservableFn.from_monomial(ONE, 1.0), 1, np.random.default_rng(0))
