"""Experiment runner: executes the configured checks and writes reproducible result files."""

import csv
import json
import math
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from glass_workbench import __version__

from .config import RunConfig, node_cap, tuple_cap
from .spinglass.constants import (
    CANCELLATION_TOLERANCE, CONFIDENCE_LEVEL, DUAL_TOLERANCE, ENERGY_MEAN_TOLERANCE,
    ENERGY_SECOND_MOMENT_TOLERANCE, MC_AGREEMENT_SIGMAS, WICK_TOLERANCE,
)
from .spinglass.disorder import Quadrature, builtin_probes, converged_wick_check
from .spinglass.identities import (
    DeltaReport, ResidualCurve, VarianceReport, classical_identities, converged_delta_reports,
    delta2_schwarz_check, delta_reports, energy_variance_curve, free_energy_variance, gg_residuals,
    internal_energy_identity_check, internal_energy_second_moment_check, internal_energy_variance,
    magnitude_interval, self_overlap_cancellation, sum_rule,
)
from .spinglass.model import stability_report
from .spinglass.observables import ONE, OverlapMonomial
from .utils.evaluation import SCHEMA_VERSION, ResultRecord
from .utils.logging import setup_logger
from .utils.validation import ConfigError

logger = setup_logger(__name__)

RESULTS_FILE = 'results.csv'
SUMMARY_FILE = 'summary.json'
SCALING_FILE = 'scaling.csv'
SCALING_COLUMNS = ['N', 'check', 'quantity', 'observable', 'integral_abs', 'stderr', 'ci_lower', 'ci_upper']
NOT_AVAILABLE = 'n/a'


def _number(value) -> str:
    return repr(float(value))


def _slug(text: str) -> str:
    return re.sub(r'[^0-9a-z]+', '_', text.lower()).strip('_') or 'one'


@dataclass
class RunSummary:
    """Records, curves and the pass/fail verdict of one run."""
    records: List[ResultRecord]
    curves: List[Tuple[str, str, ResidualCurve]] = field(default_factory=list)
    output_dir: Optional[Path] = None

    @property
    def hard_failures(self) -> List[ResultRecord]:
        return [r for r in self.records if r.hard and r.passed is False]

    @property
    def soft_warnings(self) -> List[ResultRecord]:
        return [r for r in self.records if not r.hard and r.passed is False]

    @property
    def passed(self) -> bool:
        return not self.hard_failures

    def as_dict(self, config: Optional[Dict] = None) -> Dict:
        """summary.json content; every number is copied from a results.csv row or counts rows."""
        checks: Dict[str, Dict[str, int]] = {}
        for record in self.records:
            entry = checks.setdefault(record.check, {'rows': 0, 'hard_checks': 0, 'failed': 0, 'soft_warnings': 0})
            entry['rows'] += 1
            if record.passed is not None and record.hard:
                entry['hard_checks'] += 1
            if record.passed is False:
                entry['failed' if record.hard else 'soft_warnings'] += 1
        integrals = [
            {
                'check': r.check, 'quantity': r.quantity, 'observable': r.observable,
                'family': r.family, 'value': r.value, 'stderr': r.stderr,
            }
            for r in self.records if r.quantity.endswith('-integral')
        ]
        return {
            'schema_version': SCHEMA_VERSION,
            'code_version': __version__,
            'config': config or {},
            'passed': self.passed,
            'hard_failures': [f"{r.check}:{r.quantity}:{r.observable}:{r.beta}" for r in self.hard_failures],
            'soft_warnings': [f"{r.check}:{r.quantity}:{r.observable}:{r.beta}" for r in self.soft_warnings],
            'checks': checks,
            'integrals': integrals,
        }


class ResultWriter:
    """Single writer for results.csv, summary.json and the *.curve.csv files."""

    def __init__(self, output_dir: Path):
        self.output_dir = Path(output_dir)

    def write(self, summary: RunSummary, config: Optional[Dict] = None) -> Path:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        with (self.output_dir / RESULTS_FILE).open('w', newline='') as handle:
            writer = csv.DictWriter(handle, fieldnames=ResultRecord.columns(), lineterminator='\n')
            writer.writeheader()
            for record in summary.records:
                writer.writerow(record.as_row())
        with (self.output_dir / SUMMARY_FILE).open('w') as handle:
            json.dump(summary.as_dict(config), handle, indent=2, sort_keys=True)
            handle.write('\n')
        for check, observable, curve in summary.curves:
            name = f"{check}-{curve.name}" + (f"-{_slug(observable)}" if observable else '')
            with (self.output_dir / f"{name}.curve.csv").open('w', newline='') as handle:
                writer = csv.writer(handle, lineterminator='\n')
                writer.writerow(['beta', 'residual', 'stderr'])
                for row in curve.rows():
                    writer.writerow([_number(row['beta']), _number(row['residual']), _number(row['stderr'])])
        summary.output_dir = self.output_dir
        logger.info(f"Wrote {len(summary.records)} records to {self.output_dir / RESULTS_FILE}")
        return self.output_dir


class ExperimentRunner:
    """Runs identity checks for one validated configuration."""

    def __init__(self, config: RunConfig, workers: Optional[int] = None):
        """Initialize the runner.

        Args:
            config: Validated run configuration
            workers: Overrides the configured worker count
        """
        self.config = config
        self.workers = workers or config.workers
        self.family = config.family
        default = OverlapMonomial(((1, 2),)) if config.replicas >= 2 else ONE
        self.observables = config.observables or (default,)
        self._checks: Dict[str, Callable[[], Tuple[List[ResultRecord], list]]] = {
            'stability': self._check_stability,
            'classical': self._check_classical,
            'gg': self._check_gg,
            'delta-dual': self._check_delta_dual,
            'wick': self._check_wick,
            'energy-identities': self._check_energy_identities,
            'variance-bounds': self._check_variance_bounds,
        }

    def _record(self, check: str, quantity: str, value: float, **fields) -> ResultRecord:
        fields.setdefault('scheme', self.config.scheme.describe())
        fields.setdefault('seed', self.config.scheme.seed)
        return ResultRecord(
            check=check,
            quantity=quantity,
            family=self.family.describe(),
            value=float(value),
            code_version=__version__,
            **fields,
        )

    def _curve_records(self, check: str, curve: ResidualCurve, observable: str = '',
                       replicas: Optional[int] = None, point: str = 'residual', **fields) -> List[ResultRecord]:
        beta_min, beta_max = self.config.beta_range
        records = [
            self._record(check, f"{curve.name}-{point}", value, stderr=float(stderr), beta=float(beta),
                         observable=observable, replicas=replicas, hard=False, **fields)
            for beta, value, stderr in zip(curve.betas, curve.values, curve.stderrs)
        ]
        low, high = curve.interval
        records.append(self._record(
            check, f"{curve.name}-integral", curve.integral, stderr=curve.integral_stderr,
            beta=beta_min, beta_max=beta_max, observable=observable, replicas=replicas, hard=False,
            extra={'measure': curve.measure, 'ci_lower': low, 'ci_upper': high}, **fields,
        ))
        return records

    def _check_stability(self):
        report = stability_report(self.family)
        records = [self._record(
            'stability', 'per-site-variance', report.per_site_variance,
            bound=report.claimed_bound, passed=report.satisfied, scheme='', seed=0,
        )]
        for quantity, value in (('site-share', report.site_share), ('class-sum', report.class_sum)):
            if value is not None:
                records.append(self._record('stability', quantity, value, scheme='', seed=0, hard=False))
        return records, []

    def _check_classical(self):
        curves = classical_identities(
            self.family, self.config.beta_range, self.config.scheme,
            points=self.config.points, measure=self.config.measure, workers=self.workers,
            tuple_cap=tuple_cap(),
        )
        records = []
        for curve in curves:
            records += self._curve_records('classical', curve)
        return records, [('classical', '', curve) for curve in curves]

    def _check_gg(self):
        records, curves = [], []
        for observable in self.observables:
            label = str(observable)
            for curve in gg_residuals(
                self.family, self.config.replicas, observable, self.config.beta_range, self.config.scheme,
                points=self.config.points, measure=self.config.measure, workers=self.workers,
                tuple_cap=tuple_cap(),
            ):
                records += self._curve_records('gg', curve, label, self.config.replicas)
                curves.append(('gg', label, curve))
        return records, curves

    def _dual_records(self, report: DeltaReport, tolerance: Optional[float] = None,
                      scheme: Optional[str] = None) -> List[ResultRecord]:
        spread = math.hypot(report.closed.stderr, report.definitional.stderr)
        if tolerance is None:
            tolerance = DUAL_TOLERANCE + MC_AGREEMENT_SIGMAS * spread
        common = {'beta': report.beta, 'observable': report.observable, 'replicas': report.replicas,
                  'scheme': scheme or self.config.scheme.describe()}
        return [
            self._record('delta-dual', f"{report.quantity}-closed", report.closed.mean,
                         stderr=report.closed.stderr, hard=False, **common),
            self._record('delta-dual', f"{report.quantity}-definitional", report.definitional.mean,
                         stderr=report.definitional.stderr, hard=False, **common),
            self._record('delta-dual', f"{report.quantity}-discrepancy", report.discrepancy,
                         stderr=spread, bound=tolerance, passed=report.discrepancy <= tolerance, **common),
        ]

    def _check_delta_dual(self):
        records = []
        replicas, scheme, cap = self.config.replicas, self.config.scheme, tuple_cap()
        for observable in self.observables:
            for beta in self.config.delta_betas:
                if isinstance(scheme, Quadrature):
                    (first, second, rule), used = converged_delta_reports(
                        self.family, beta, replicas, observable, scheme.order, self.workers, cap,
                        scheme.node_cap,
                    )
                else:
                    used = scheme
                    first, second = delta_reports(self.family, beta, replicas, observable, scheme,
                                                  self.workers, cap)
                    rule = sum_rule(self.family, beta, replicas, observable, scheme, self.workers, cap,
                                    delta1=first.closed, delta2=second.closed)
                cancellation = self_overlap_cancellation(self.family, beta, replicas, observable, used,
                                                         self.workers, cap)
                for report in (first, second, rule):
                    records += self._dual_records(report, scheme=used.describe())
                scale = max(1.0, abs(cancellation.closed.mean))
                records += self._dual_records(cancellation, CANCELLATION_TOLERANCE * scale, used.describe())
        return records, []

    def _check_wick(self):
        records = []
        for beta in self.config.delta_betas:
            for probe in builtin_probes(self.family, beta):
                residual, used = converged_wick_check(probe, self.family, order=self.config.exact_order,
                                                      node_cap=node_cap())
                records.append(self._record(
                    'wick', 'wick-residual', residual, beta=beta, observable=probe.name,
                    bound=WICK_TOLERANCE, passed=residual <= WICK_TOLERANCE,
                    scheme=used.describe(), seed=0,
                ))
        return records, []

    def _check_energy_identities(self):
        records = []
        order, cap = self.config.exact_order, node_cap()
        for beta in self.config.delta_betas:
            mean = internal_energy_identity_check(self.family, beta, order, cap)
            second = internal_energy_second_moment_check(self.family, beta, order, cap)
            records += [
                self._record('energy-identities', 'energy-mean-residual', mean.residual, beta=beta,
                             bound=ENERGY_MEAN_TOLERANCE, passed=mean.residual <= ENERGY_MEAN_TOLERANCE,
                             extra=dict(mean.diagnostics), seed=0,
                             scheme=f"quadrature(order={mean.order})"),
                self._record('energy-identities', 'energy-second-moment-residual', second.residual, beta=beta,
                             bound=ENERGY_SECOND_MOMENT_TOLERANCE,
                             passed=second.residual <= ENERGY_SECOND_MOMENT_TOLERANCE,
                             extra=dict(second.diagnostics), seed=0,
                             scheme=f"quadrature(order={second.order})"),
                self._record('energy-identities', 'energy-second-moment-double-sum-gap',
                             second.diagnostics['double_sum_only'], beta=beta, hard=False, seed=0,
                             scheme=f"quadrature(order={second.order})"),
            ]
        return records, []

    def _variance_record(self, report: VarianceReport, hard: bool = True, observable: str = '') -> ResultRecord:
        config = self.config
        return self._record(
            'variance-bounds', report.quantity, report.value, stderr=report.stderr, beta=report.beta,
            bound=report.bound, passed=report.satisfied, hard=hard, observable=observable,
            scheme=f"mc(n={report.n_samples},seed={config.variance_seed})", seed=config.variance_seed,
            extra={'ci_lower': report.ci_lower, 'ci_upper': report.ci_upper},
        )

    def _check_variance_bounds(self):
        records = []
        config = self.config
        for beta in config.variance_betas:
            records.append(self._variance_record(free_energy_variance(
                self.family, beta, config.variance_samples, config.variance_seed, self.workers)))
            records.append(self._variance_record(internal_energy_variance(
                self.family, beta, config.variance_samples, config.variance_seed, self.workers)))
            for observable in self.observables:
                report = delta2_schwarz_check(self.family, beta, config.replicas, observable,
                                              config.variance_samples, config.variance_seed, self.workers)
                records.append(self._variance_record(report, hard=False, observable=str(observable)))
        curve = energy_variance_curve(self.family, config.beta_range, config.variance_samples,
                                      config.variance_seed, config.points, config.measure, self.workers)
        records += self._curve_records(
            'variance-bounds', curve, point='value', seed=config.variance_seed,
            scheme=f"mc(n={config.variance_samples},seed={config.variance_seed})",
        )
        return records, [('variance-bounds', '', curve)]

    def execute(self) -> RunSummary:
        """Run every configured check in the configured order."""
        summary = RunSummary(records=[])
        for check in self.config.checks:
            logger.info(f"Running {check} on {self.family.describe()} with {self.workers} worker(s)")
            start = time.perf_counter()
            records, curves = self._checks[check]()
            elapsed = time.perf_counter() - start
            for record in records:
                record.wall_time = elapsed
            summary.records += records
            summary.curves += curves
            failed = sum(1 for r in records if r.passed is False)
            logger.info(f"Finished {check} in {elapsed:.2f}s: {len(records)} rows, {failed} failed")
            for record in records:
                if record.passed is False and not record.hard:
                    logger.warning(f"Soft check {check}:{record.quantity} at β={record.beta} did not hold")
        return summary

    def run(self, output_dir: Optional[Path] = None) -> RunSummary:
        """Execute the checks and write results.csv, summary.json and the curve files."""
        summary = self.execute()
        ResultWriter(output_dir or self.config.output_dir).write(summary, self.config.as_dict())
        return summary


def _fit_slope(sizes: Sequence[int], magnitudes: Sequence[float]) -> Optional[Tuple[float, float, float, float]]:
    """Log-log slope of |integral| against N with its confidence interval, when a fit is possible."""
    points = [(n, m) for n, m in zip(sizes, magnitudes) if m > 0]
    if len(points) < 2:
        return None
    x = np.log([n for n, _ in points])
    y = np.log([m for _, m in points])
    fit = stats.linregress(x, y)
    if len(points) < 3:
        return float(fit.slope), math.nan, math.nan, math.nan
    half = stats.t.ppf(0.5 + CONFIDENCE_LEVEL / 2.0, len(points) - 2) * fit.stderr
    return float(fit.slope), float(fit.stderr), float(fit.slope - half), float(fit.slope + half)


@dataclass
class SweepSummary:
    runs: Dict[int, RunSummary]
    rows: List[Dict[str, str]]

    @property
    def passed(self) -> bool:
        return all(run.passed for run in self.runs.values())


def sweep(config: RunConfig, sizes: Iterable[int], workers: Optional[int] = None,
          output_dir: Optional[Path] = None) -> SweepSummary:
    """Run the configured checks at every size and fit the finite-size trend of the integrals.

    Raises:
        InfeasibleError: a size is over the enumeration cap (checked before any work)
        ConfigError: no sizes given
    """
    sizes = sorted(dict.fromkeys(int(n) for n in sizes))
    if not sizes:
        raise ConfigError("Sweep needs at least one size")
    configs = {n: config.with_size(n) for n in sizes}
    root = Path(output_dir or config.output_dir)
    runs = {}
    for n, sized in configs.items():
        logger.info(f"Sweep: size {n} ({sized.family.describe()})")
        runs[n] = ExperimentRunner(sized, workers).run(root / f"N{n}")

    groups: Dict[Tuple[str, str, str], List[Tuple[int, ResultRecord]]] = {}
    for n, run in runs.items():
        for record in run.records:
            if record.quantity.endswith('-integral'):
                groups.setdefault((record.check, record.quantity, record.observable), []).append((n, record))

    rows = []
    for (check, quantity, observable), entries in groups.items():
        magnitudes = []
        intervals = []
        for n, record in entries:
            low, high = record.extra['ci_lower'], record.extra['ci_upper']
            mag_low, mag_high = magnitude_interval(low, high)
            magnitudes.append(abs(record.value))
            intervals.append((mag_low, mag_high))
            rows.append({
                'N': str(n), 'check': check, 'quantity': quantity, 'observable': observable,
                'integral_abs': _number(abs(record.value)), 'stderr': _number(record.stderr),
                'ci_lower': _number(mag_low), 'ci_upper': _number(mag_high),
            })
        fit = _fit_slope([n for n, _ in entries], magnitudes)
        slope_row = {'N': 'slope', 'check': check, 'quantity': quantity, 'observable': observable}
        if fit is None:
            slope_row.update({'integral_abs': NOT_AVAILABLE, 'stderr': NOT_AVAILABLE,
                              'ci_lower': NOT_AVAILABLE, 'ci_upper': NOT_AVAILABLE})
        else:
            slope_row.update({
                'integral_abs': _number(fit[0]),
                'stderr': NOT_AVAILABLE if math.isnan(fit[1]) else _number(fit[1]),
                'ci_lower': NOT_AVAILABLE if math.isnan(fit[2]) else _number(fit[2]),
                'ci_upper': NOT_AVAILABLE if math.isnan(fit[3]) else _number(fit[3]),
            })
        rows.append(slope_row)
        if len(entries) > 1 and not intervals[-1][1] < intervals[0][0]:
            logger.warning(
                f"{check}:{quantity} {observable}: |integral| at N={entries[-1][0]} is not below "
                f"N={entries[0][0]} with {CONFIDENCE_LEVEL:.0%} confidence"
            )

    root.mkdir(parents=True, exist_ok=True)
    with (root / SCALING_FILE).open('w', newline='') as handle:
        writer = csv.DictWriter(handle, fieldnames=SCALING_COLUMNS, lineterminator='\n')
        writer.writeheader()
        writer.writerows(rows)
    logger.info(f"Wrote {len(rows)} scaling rows to {root / SCALING_FILE}")
    return SweepSummary(runs=runs, rows=rows)
