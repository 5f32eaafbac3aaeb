from django.core.management.base import BaseCommand

from ...config import load_config
from ...experiment_runner import ExperimentRunner
from ._common import add_runtime_arguments, exit_codes, fail_on_hard_failures


class Command(BaseCommand):
    help = 'Run the identity checks of a TOML config; writes results.csv, summary.json and *.curve.csv'

    def add_arguments(self, parser):
        parser.add_argument('config', help='Path to the TOML run configuration')
        add_runtime_arguments(parser)

    def handle(self, *args, **options):
        with exit_codes():
            config = load_config(options['config'], output_dir=options['out'], workers=options['workers'])
            summary = ExperimentRunner(config).run()
            self.stdout.write(f"Results in {summary.output_dir}")
            fail_on_hard_failures(summary, self.stdout)
