from django.core.management.base import BaseCommand

from ...acceptance import SUITES, run_suite
from ...experiment_runner import ResultWriter
from ._common import add_runtime_arguments, exit_codes, fail_on_hard_failures


class Command(BaseCommand):
    help = 'Run the built-in acceptance suite (desk: fast exact checks; full: adds the Monte Carlo campaigns)'

    def add_arguments(self, parser):
        parser.add_argument('--suite', choices=sorted(SUITES), default='desk')
        add_runtime_arguments(parser)

    def handle(self, *args, **options):
        with exit_codes():
            summary = run_suite(options['suite'], workers=options['workers'] or 1)
            if options['out'] is not None:
                ResultWriter(options['out']).write(summary, {'suite': options['suite']})
            fail_on_hard_failures(summary, self.stdout)
