import math

from django.test import SimpleTestCase, override_settings
from rest_framework.test import APIClient


class StabilityViewTests(SimpleTestCase):
    def setUp(self):
        self.client = APIClient()

    def test_sk(self):
        response = self.client.post('/api/stability/', {'preset': 'SK', 'n': 6}, format='json')
        self.assertEqual(response.status_code, 200)
        body = response.json()
        self.assertEqual(body['family'], 'SK(n=6)')
        self.assertAlmostEqual(body['per_site_variance'], 5 / 12)
        self.assertTrue(body['satisfied'])

    def test_invalid_spec(self):
        response = self.client.post('/api/stability/', {'preset': 'EA', 'dimension': 2}, format='json')
        self.assertEqual(response.status_code, 400)

    def test_domain_error_maps_to_status(self):
        response = self.client.post('/api/stability/', {'preset': 'long_range', 'alpha': 0.4, 'dimension': 1,
                                                        'side': 4}, format='json')
        self.assertEqual(response.status_code, 400)


class MomentViewTests(SimpleTestCase):
    def setUp(self):
        self.client = APIClient()

    def test_quadrature_moment(self):
        payload = {
            'family': {'preset': 'custom', 'volume': 2, 'terms': [{'sites': [0, 1], 'variance': 1.0}]},
            'beta': 0.0,
            'observable': 'q[1,1]',
            'scheme': {'kind': 'quadrature', 'order': 8},
        }
        response = self.client.post('/api/moment/', payload, format='json')
        self.assertEqual(response.status_code, 200)
        body = response.json()
        self.assertEqual(body['observable'], 'q[1,1]')
        self.assertTrue(math.isclose(body['estimate']['mean'], 0.5))
        self.assertEqual(body['estimate']['method'], 'quadrature')

    def test_monte_carlo_moment(self):
        payload = {
            'family': {'preset': 'sk', 'n': 4},
            'beta': 1.0,
            'observable': 'q[1,2]',
            'scheme': {'kind': 'mc', 'samples': 50, 'seed': 3},
        }
        response = self.client.post('/api/moment/', payload, format='json')
        self.assertEqual(response.status_code, 200)
        self.assertGreater(response.json()['estimate']['stderr'], 0.0)

    def test_bad_observable(self):
        payload = {
            'family': {'preset': 'sk', 'n': 4},
            'beta': 1.0,
            'observable': 'q[1,2',
            'scheme': {'kind': 'mc', 'samples': 50, 'seed': 3},
        }
        response = self.client.post('/api/moment/', payload, format='json')
        self.assertEqual(response.status_code, 400)
        self.assertIn('observable', response.json())

    def test_request_caps(self):
        payload = {
            'family': {'preset': 'sk', 'n': 16},
            'beta': 1.0,
            'observable': 'q[1,2]',
            'scheme': {'kind': 'mc', 'samples': 50, 'seed': 3},
        }
        self.assertEqual(self.client.post('/api/moment/', payload, format='json').status_code, 422)
        payload['family'] = {'preset': 'sk', 'n': 4}
        payload['scheme']['samples'] = 5000
        self.assertEqual(self.client.post('/api/moment/', payload, format='json').status_code, 422)

    @override_settings(WORKBENCH={'QUADRATURE_NODE_CAP': 1000, 'MONOMIAL_TUPLE_CAP': 5})
    def test_workbench_caps_apply_to_requests(self):
        payload = {
            'family': {'preset': 'sk', 'n': 4},
            'beta': 1.0,
            'observable': 'q[1,2]',
            'scheme': {'kind': 'mc', 'samples': 50, 'seed': 3},
        }
        self.assertEqual(self.client.post('/api/moment/', payload, format='json').status_code, 422)
        payload['observable'] = 'q[1,1]'
        payload['scheme'] = {'kind': 'quadrature', 'order': 4}
        self.assertEqual(self.client.post('/api/moment/', payload, format='json').status_code, 422)
        payload['family'] = {'preset': 'custom', 'volume': 2, 'terms': [{'sites': [0, 1], 'variance': 1.0}]}
        payload['observable'] = 'q[1,2]'
        self.assertEqual(self.client.post('/api/moment/', payload, format='json').status_code, 200)
