from django.core.management.base import BaseCommand, CommandError

from ...config import load_config
from ...experiment_runner import sweep
from ...utils.validation import CheckFailure
from ._common import add_runtime_arguments, exit_codes


def parse_sizes(text: str):
    try:
        sizes = [int(part) for part in text.split(',') if part.strip()]
    except ValueError as exc:
        raise CommandError(f"--sizes expects a comma-separated list of integers, got '{text}'", returncode=2) from exc
    if not sizes:
        raise CommandError("--sizes is empty", returncode=2)
    return sizes


class Command(BaseCommand):
    help = 'Run the configured checks at several system sizes and write scaling.csv'

    def add_arguments(self, parser):
        parser.add_argument('config', help='Path to the TOML run configuration')
        parser.add_argument('--sizes', required=True, help='Comma-separated sizes, e.g. 4,8,12')
        add_runtime_arguments(parser)

    def handle(self, *args, **options):
        sizes = parse_sizes(options['sizes'])
        with exit_codes():
            config = load_config(options['config'], output_dir=options['out'], workers=options['workers'])
            summary = sweep(config, sizes, workers=options['workers'], output_dir=options['out'])
            for row in summary.rows:
                self.stdout.write(
                    f"{row['N']:>6} {row['check']:<10} {row['quantity']:<28} {row['observable']:<16} "
                    f"{row['integral_abs']} ± {row['stderr']}"
                )
            if not summary.passed:
                failed = [n for n, run in summary.runs.items() if not run.passed]
                raise CheckFailure(f"Hard checks failed at sizes {failed}")
