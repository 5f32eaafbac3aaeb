import csv
import json
import tempfile
from io import StringIO
from pathlib import Path

from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, override_settings

from api.acceptance import (
    SUITES, check_dual_computation, check_energy_identities, check_stability_constants, check_wick, run_suite,
)
from api.config import parse_config
from api.experiment_runner import ExperimentRunner, ResultWriter, sweep
from api.spinglass.disorder import chunk_length
from api.utils.validation import InfeasibleError

CLASSICAL_TOML = """
[family]
preset = "SK"
n = {n}

[grid]
beta_min = 0.2
beta_max = 1.5

[observables]
replicas = 2

[scheme]
kind = "mc"
samples = 120
seed = 7

[checks]
run = ["classical"]
"""

FAILING_TOML = """
[family]
preset = "custom"
volume = 2
claimed_bound = 0.1
terms = [{ sites = [0, 1], variance = 1.0 }]

[grid]
beta_min = 0.0
beta_max = 1.0

[observables]
replicas = 2

[scheme]
kind = "quadrature"

[checks]
run = ["stability"]
"""


def classical_config(n=3, samples=120, points=21, checks=('classical',), **sections):
    return parse_config({
        'family': {'preset': 'sk', 'n': n},
        'grid': {'beta_min': 0.2, 'beta_max': 1.5, 'points': points},
        'observables': {'replicas': 2},
        'scheme': {'kind': 'mc', 'samples': samples, 'seed': 7},
        'checks': {'run': list(checks), **sections},
    })


def read_rows(path):
    with open(path, newline='') as handle:
        return list(csv.DictReader(handle))


class ExperimentRunnerTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.root = Path(self.tmp.name)

    def test_classical_run_writes_results(self):
        summary = ExperimentRunner(classical_config()).run(self.root)
        rows = read_rows(self.root / 'results.csv')
        self.assertEqual(len(rows), 44)
        residuals = [r for r in rows if r['quantity'].endswith('-residual')]
        integrals = [r for r in rows if r['quantity'].endswith('-integral')]
        self.assertEqual((len(residuals), len(integrals)), (42, 2))
        self.assertTrue(all(r['hard'] == 'soft' for r in rows))
        self.assertTrue(summary.passed)

        document = json.loads((self.root / 'summary.json').read_text())
        self.assertEqual(document['checks']['classical']['rows'], 44)
        self.assertEqual(len(document['integrals']), 2)
        self.assertEqual(float(integrals[0]['value']), document['integrals'][0]['value'])

        curve = read_rows(self.root / 'classical-classical-first.curve.csv')
        self.assertEqual(len(curve), 21)
        self.assertEqual(curve[0]['residual'], residuals[0]['value'])

    def test_results_do_not_depend_on_workers(self):
        config = classical_config(samples=2 * chunk_length(classical_config().family) + 50, points=5)
        self.assertGreater(config.scheme.samples, chunk_length(config.family))
        outputs = []
        for workers in (1, 3):
            directory = self.root / f"w{workers}"
            ExperimentRunner(config, workers=workers).run(directory)
            rows = read_rows(directory / 'results.csv')
            for row in rows:
                row.pop('wall_time')
            outputs.append((rows, (directory / 'classical-classical-second.curve.csv').read_bytes()))
        self.assertEqual(outputs[0], outputs[1])

    def test_hard_failure_is_reported(self):
        config = parse_config({
            'family': {'preset': 'custom', 'volume': 2, 'claimed_bound': 0.1,
                       'terms': [{'sites': [0, 1], 'variance': 1.0}]},
            'grid': {'beta_min': 0.0, 'beta_max': 1.0},
            'observables': {'replicas': 2},
            'scheme': {'kind': 'quadrature'},
            'checks': {'run': ['stability']},
        })
        summary = ExperimentRunner(config).execute()
        self.assertFalse(summary.passed)
        self.assertEqual(summary.hard_failures[0].quantity, 'per-site-variance')

    def test_variance_bounds_emit_energy_variance_curve(self):
        config = classical_config(checks=('variance-bounds',), points=5, variance_betas=[0.5],
                                  variance_samples=200)
        summary = ExperimentRunner(config).run(self.root)
        values = [r for r in summary.records if r.quantity == 'energy-variance-value']
        self.assertEqual(len(values), 5)
        self.assertTrue(all(r.value >= 0.0 and r.hard is False for r in values))
        integral = next(r for r in summary.records if r.quantity == 'energy-variance-integral')
        self.assertEqual(integral.scheme, 'mc(n=200,seed=7)')
        self.assertGreater(integral.value, 0.0)
        self.assertLess(integral.extra['ci_lower'], integral.extra['ci_upper'])
        curve = read_rows(self.root / 'variance-bounds-energy-variance.curve.csv')
        self.assertEqual(len(curve), 5)

        result = sweep(config, [3, 4], output_dir=self.root / 'sweep')
        trend = [r for r in result.rows if r['quantity'] == 'energy-variance-integral']
        self.assertEqual([r['N'] for r in trend], ['3', '4', 'slope'])

    def test_exact_checks_record_the_settled_order(self):
        config = parse_config({
            'family': {'preset': 'ea', 'dimension': 1, 'side': 3, 'periodic': False},
            'grid': {'beta_min': 0.2, 'beta_max': 1.5},
            'observables': {'replicas': 2},
            'scheme': {'kind': 'quadrature', 'order': 40},
            'checks': {'run': ['delta-dual', 'wick', 'energy-identities'], 'delta_betas': [1.1]},
        })
        summary = ExperimentRunner(config).execute()
        self.assertTrue(summary.passed, [(r.check, r.quantity, r.value) for r in summary.hard_failures])
        orders = {int(r.scheme.split('=')[1].rstrip(')')) for r in summary.records}
        self.assertGreater(max(orders), 40)

    @override_settings(WORKBENCH={'QUADRATURE_NODE_CAP': 100, 'MONOMIAL_TUPLE_CAP': 10**6})
    def test_node_cap_setting_is_honoured(self):
        config = parse_config({
            'family': {'preset': 'sk', 'n': 3},
            'grid': {'beta_min': 0.2, 'beta_max': 1.5, 'points': 3},
            'observables': {'replicas': 2},
            'scheme': {'kind': 'quadrature', 'order': 10},
            'checks': {'run': ['gg']},
        })
        self.assertEqual(config.scheme.node_cap, 100)
        with self.assertRaises(InfeasibleError):
            ExperimentRunner(config).execute()

    @override_settings(WORKBENCH={'QUADRATURE_NODE_CAP': 10**7, 'MONOMIAL_TUPLE_CAP': 2})
    def test_tuple_cap_setting_is_honoured(self):
        with self.assertRaises(InfeasibleError):
            ExperimentRunner(classical_config(checks=('gg',), points=3)).execute()

    def test_sweep_writes_scaling_rows(self):
        result = sweep(classical_config(), [3, 4], output_dir=self.root)
        rows = read_rows(self.root / 'scaling.csv')
        self.assertEqual(len(rows), len(result.rows))
        self.assertEqual(len(rows), 6)
        slopes = [r for r in rows if r['N'] == 'slope']
        self.assertEqual(len(slopes), 2)
        self.assertTrue(all(r['ci_lower'] == 'n/a' for r in slopes))
        self.assertTrue((self.root / 'N3' / 'results.csv').exists())
        self.assertTrue((self.root / 'N4' / 'summary.json').exists())

    def test_single_size_has_no_slope(self):
        result = sweep(classical_config(), [3], output_dir=self.root)
        slopes = [row for row in result.rows if row['N'] == 'slope']
        self.assertEqual(len(slopes), 2)
        self.assertTrue(all(row['integral_abs'] == 'n/a' for row in slopes))


class AcceptanceTests(SimpleTestCase):
    def test_suites(self):
        self.assertLess(len(SUITES['desk']), len(SUITES['full']))

    def test_exact_checks_pass(self):
        summary = run_suite('desk', checks=[check_stability_constants, check_energy_identities])
        self.assertTrue(summary.passed, [r.quantity for r in summary.hard_failures])
        claimed = [r for r in summary.records if r.quantity == 'per-site-variance-claimed']
        self.assertTrue(any(r.passed is False for r in claimed))
        with tempfile.TemporaryDirectory() as tmp:
            ResultWriter(Path(tmp)).write(summary, {'suite': 'desk'})
            self.assertEqual(len(read_rows(Path(tmp) / 'results.csv')), len(summary.records))

    def test_dual_and_wick_checks_pass(self):
        summary = run_suite('desk', checks=[check_dual_computation, check_wick])
        self.assertTrue(summary.passed, [(r.quantity, r.family, r.beta, r.value) for r in summary.hard_failures])
        hot = [r for r in summary.records if r.beta == 1.1 and r.family.startswith('custom')]
        self.assertTrue(hot)
        self.assertTrue(all(r.scheme != 'quadrature(order=40)' for r in hot))


class CommandTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.root = Path(self.tmp.name)

    def write(self, name, text):
        path = self.root / name
        path.write_text(text)
        return str(path)

    def test_run_succeeds(self):
        out = StringIO()
        call_command('run', self.write('ok.toml', CLASSICAL_TOML.format(n=3)), '--out', str(self.root / 'out'),
                     stdout=out)
        self.assertIn('All hard checks passed', out.getvalue())
        self.assertTrue((self.root / 'out' / 'results.csv').exists())

    def test_exit_codes(self):
        cases = [
            (self.write('missing.toml', '') + '.absent', 2),
            (self.write('bad.toml', CLASSICAL_TOML.format(n='"four"')), 2),
            (self.write('big.toml', CLASSICAL_TOML.format(n=30)), 3),
            (self.write('fail.toml', FAILING_TOML), 1),
        ]
        for path, code in cases:
            with self.assertRaises(CommandError, msg=path) as caught:
                call_command('run', path, '--out', str(self.root / 'out'), stdout=StringIO())
            self.assertEqual(caught.exception.returncode, code, path)

    def test_sweep_command(self):
        path = self.write('sweep.toml', CLASSICAL_TOML.format(n=3))
        out = StringIO()
        call_command('sweep', path, '--sizes', '3,4', '--out', str(self.root / 'sweep'), stdout=out)
        self.assertTrue((self.root / 'sweep' / 'scaling.csv').exists())
        self.assertIn('slope', out.getvalue())
        with self.assertRaises(CommandError) as caught:
            call_command('sweep', path, '--sizes', 'three', stdout=StringIO())
        self.assertEqual(caught.exception.returncode, 2)

    def test_sweep_size_over_cap(self):
        path = self.write('cap.toml', CLASSICAL_TOML.format(n=3))
        with self.assertRaises(CommandError) as caught:
            call_command('sweep', path, '--sizes', '3,40', '--out', str(self.root / 'cap'), stdout=StringIO())
        self.assertEqual(caught.exception.returncode, 3)
        self.assertFalse((self.root / 'cap' / 'N3').exists())
