"""Shared option handling for the workbench commands."""

from contextlib import contextmanager
from pathlib import Path

from django.core.management.base import CommandError

from ...utils.logging import setup_logger
from ...utils.validation import CheckFailure, WorkbenchError

logger = setup_logger(__name__)


def add_runtime_arguments(parser):
    parser.add_argument('--workers', type=int, default=None, help='Worker threads (results do not depend on it)')
    parser.add_argument('--out', type=Path, default=None, help='Output directory')


@contextmanager
def exit_codes():
    """Map workbench errors to CommandError exit codes: config 2, infeasible 3, failed check 1."""
    try:
        yield
    except WorkbenchError as exc:
        logger.error(f"{type(exc).__name__}: {exc.detail}")
        raise CommandError(str(exc.detail), returncode=exc.exit_code) from exc


def fail_on_hard_failures(summary, stdout):
    if summary.passed:
        stdout.write(f"All hard checks passed ({len(summary.records)} rows)")
        return
    for record in summary.hard_failures:
        stdout.write(
            f"FAIL {record.check}:{record.quantity} {record.observable} β={record.beta} "
            f"value={record.value:.3e} bound={record.bound}"
        )
    raise CheckFailure(f"{len(summary.hard_failures)} hard check(s) failed")
