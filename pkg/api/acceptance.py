"""Built-in acceptance suite run by `manage.py verify`.

The desk suite holds the exact quadrature checks, the stability constants and
the trivial cases; the full suite adds the Monte Carlo finite-size campaigns
and the variance bounds.
"""

import math
import time
from typing import Callable, Dict, List, Optional

from scipy.special import zeta

from glass_workbench import __version__

from .experiment_runner import RunSummary
from .spinglass.constants import (
    CANCELLATION_TOLERANCE, DUAL_TOLERANCE, ENERGY_MEAN_TOLERANCE, ENERGY_SECOND_MOMENT_TOLERANCE,
    EXACT_QUADRATURE_ORDER, STABILITY_TOLERANCE, WICK_TOLERANCE,
)
from .spinglass.disorder import MonteCarlo, Quadrature, builtin_probes, converged_wick_check
from .spinglass.identities import (
    classical_identities, converged_delta_reports, delta1_closed, delta2_closed, energy_variance_curve,
    free_energy_variance, gg_residuals, internal_energy_identity_check, internal_energy_second_moment_check,
    internal_energy_variance, self_overlap_cancellation,
)
from .spinglass.model import (
    InteractionFamily, SpinConfiguration, covariance, custom_family, edwards_anderson, long_range,
    random_energy_model, sherrington_kirkpatrick, stability_report,
)
from .spinglass.observables import ONE, OverlapMonomial, parse_monomial, quenched_moment
from .utils.evaluation import ResultRecord
from .utils.logging import setup_logger
from .utils.numerics import bootstrap_rng

logger = setup_logger(__name__)

SUITE_SEED = 20240601
DUAL_BETAS = (0.3, 0.7, 1.1)
ENERGY_BETAS = DUAL_BETAS
SCALING_SIZES = (4, 8, 12)
SCALING_SAMPLES = 2000
SCALING_RANGE = (0.2, 1.5)
VARIANCE_BETAS = (0.5, 1.0)
SCHWARZ_TRIPLES = 1000


def _row(check: str, quantity: str, family: InteractionFamily, value: float, **fields) -> ResultRecord:
    fields.setdefault('scheme', 'exact')
    return ResultRecord(check=check, quantity=quantity, family=family.describe(), value=float(value),
                        code_version=__version__, **fields)


def small_families() -> List[InteractionFamily]:
    """Families with at most three couplings on at most three sites."""
    return [
        custom_family([((0, 1), 1.0)], volume=2),
        edwards_anderson(1, 3, periodic=False),
        sherrington_kirkpatrick(3),
    ]


def dual_cases():
    """(observable, R) pairs of the dual-computation grid."""
    return [
        (parse_monomial('q[1,2]'), 2),
        (parse_monomial('q[1,2]'), 3),
        (parse_monomial('q[1,2]*q[2,3]'), 3),
    ]


def check_dual_computation(workers: int) -> List[ResultRecord]:
    """Δ₁ and Δ₂ closed against definitional, and the sum rule, under converged quadrature."""
    records = []
    for family in small_families():
        for observable, replicas in dual_cases():
            for beta in DUAL_BETAS:
                reports, scheme = converged_delta_reports(family, beta, replicas, observable, workers=workers)
                for report in reports:
                    records.append(_row(
                        'delta-dual', f"{report.quantity}-discrepancy", family, report.discrepancy,
                        beta=beta, observable=str(observable), replicas=replicas, scheme=scheme.describe(),
                        bound=DUAL_TOLERANCE, passed=report.discrepancy <= DUAL_TOLERANCE,
                    ))
    return records


def check_wick(workers: int) -> List[ResultRecord]:
    records = []
    for family in small_families():
        for beta in DUAL_BETAS:
            for probe in builtin_probes(family, beta):
                residual, scheme = converged_wick_check(probe, family)
                records.append(_row(
                    'wick', 'wick-residual', family, residual, beta=beta, observable=probe.name,
                    scheme=scheme.describe(), bound=WICK_TOLERANCE, passed=residual <= WICK_TOLERANCE,
                ))
    return records


def check_energy_identities(workers: int) -> List[ResultRecord]:
    single, chain = small_families()[:2]
    records = []
    for beta in ENERGY_BETAS:
        mean = internal_energy_identity_check(single, beta)
        records.append(_row('energy-identities', 'energy-mean-residual', single, mean.residual, beta=beta,
                            scheme=f"quadrature(order={mean.order})", bound=ENERGY_MEAN_TOLERANCE,
                            passed=mean.residual <= ENERGY_MEAN_TOLERANCE))
        for family in (single, chain):
            second = internal_energy_second_moment_check(family, beta)
            records.append(_row('energy-identities', 'energy-second-moment-residual', family, second.residual,
                                beta=beta, scheme=f"quadrature(order={second.order})",
                                bound=ENERGY_SECOND_MOMENT_TOLERANCE,
                                passed=second.residual <= ENERGY_SECOND_MOMENT_TOLERANCE))
    return records



def check_stability_constants(workers: int) -> List[ResultRecord]:
    """Per-site variances of the presets against their closed forms and claimed constants."""
    records = []
    expected = []
    for dimension, side in ((1, 5), (2, 4), (3, 2)):
        expected.append((edwards_anderson(dimension, side), float(dimension)))
    for n in (4, 8, 12):
        expected.append((sherrington_kirkpatrick(n), (n - 1) / (2 * n)))
    for n in (4, 10):
        expected.append((random_energy_model(n), 1.0 - 2.0 ** (-n)))
    for family, value in expected:
        gap = abs(family.per_site_variance - value)
        records.append(_row('stability', 'per-site-variance-exact', family, family.per_site_variance,
                            bound=value, passed=gap <= STABILITY_TOLERANCE))
    for alpha in (0.75, 1.5):
        for side in (4, 8, 16):
            family = long_range(alpha, 1, side)
            report = stability_report(family)
            # summing |n|^(-2α) over one side of the chain is bounded by ζ(2α)
            records.append(_row('stability', 'per-site-variance-zeta', family, report.per_site_variance,
                                bound=float(zeta(2.0 * alpha)),
                                passed=report.per_site_variance <= zeta(2.0 * alpha) + STABILITY_TOLERANCE))
            records.append(_row('stability', 'per-site-variance-claimed', family, report.per_site_variance,
                                bound=report.claimed_bound, passed=report.satisfied, hard=False))
    return records


def check_trivial_cases(workers: int) -> List[ResultRecord]:
    """β = 0 zeros, constant-observable cancellations, self-overlap cancellation,
    the covariance Schwarz bound and worker-count determinism."""
    records = []
    scheme = Quadrature(EXACT_QUADRATURE_ORDER)
    overlap = OverlapMonomial(((1, 2),))
    for family in small_families():
        zeros = {
            'delta1-beta0': delta1_closed(family, 0.0, 2, overlap, scheme, workers).mean,
            'delta2-beta0': delta2_closed(family, 0.0, 2, overlap, scheme, workers).mean,
            'overlap-beta0': quenched_moment(family, 0.0, overlap, scheme, workers).mean,
            'delta1-constant': delta1_closed(family, 0.7, 3, ONE, scheme, workers).mean,
            'delta2-constant': delta2_closed(family, 0.7, 3, ONE, scheme, workers).mean,
        }
        for quantity, value in zeros.items():
            records.append(_row('trivial', quantity, family, value, scheme=scheme.describe(),
                                bound=CANCELLATION_TOLERANCE, passed=abs(value) <= CANCELLATION_TOLERANCE))
        for observable, replicas in dual_cases():
            report = self_overlap_cancellation(family, 0.7, replicas, observable, scheme, workers)
            records.append(_row('trivial', 'self-overlap-cancellation', family, report.discrepancy, beta=0.7,
                                observable=str(observable), replicas=replicas, scheme=scheme.describe(),
                                bound=CANCELLATION_TOLERANCE, passed=report.discrepancy <= CANCELLATION_TOLERANCE))

    rng = bootstrap_rng(SUITE_SEED, 0)
    worst = -math.inf
    for _ in range(SCHWARZ_TRIPLES):
        volume = int(rng.integers(2, 9))
        terms = {}
        for _ in range(int(rng.integers(1, 12))):
            size = int(rng.integers(1, volume + 1))
            subset = tuple(sorted(rng.choice(volume, size=size, replace=False).tolist()))
            terms[subset] = float(rng.exponential())
        family = custom_family(list(terms.items()), volume)
        sigma = SpinConfiguration(int(rng.integers(0, 1 << volume)), volume)
        tau = SpinConfiguration(int(rng.integers(0, 1 << volume)), volume)
        raw, _ = covariance(family, sigma, tau)
        worst = max(worst, abs(raw) - family.total_variance)
    records.append(ResultRecord(
        check='trivial', quantity='covariance-schwarz-excess', family=f"random-custom(x{SCHWARZ_TRIPLES})",
        scheme='exact', value=worst, bound=STABILITY_TOLERANCE, passed=worst <= STABILITY_TOLERANCE,
        code_version=__version__,
    ))

    family = sherrington_kirkpatrick(6)
    mc = MonteCarlo(3000, SUITE_SEED)
    serial = quenched_moment(family, 0.8, overlap, mc, workers=1)
    parallel = quenched_moment(family, 0.8, overlap, mc, workers=max(workers, 4))
    identical = serial.mean == parallel.mean and serial.stderr == parallel.stderr
    records.append(_row('trivial', 'worker-determinism', family, parallel.mean - serial.mean, beta=0.8,
                        scheme=mc.describe(), seed=mc.seed, bound=0.0, passed=identical))
    return records


def check_finite_size_trend(workers: int) -> List[ResultRecord]:
    """Integrated classical and GG residuals shrink from the smallest to the largest SK size (soft)."""
    scheme = MonteCarlo(SCALING_SAMPLES, SUITE_SEED)
    integrals: Dict[str, Dict[int, tuple]] = {}
    records = []
    for n in SCALING_SIZES:
        family = sherrington_kirkpatrick(n)
        curves = list(classical_identities(family, SCALING_RANGE, scheme, workers=workers))
        curves += list(gg_residuals(family, 2, OverlapMonomial(((1, 2),)), SCALING_RANGE, scheme,
                                    workers=workers))
        for curve in curves:
            integrals.setdefault(curve.name, {})[n] = curve.magnitude_interval()
            records.append(_row('scaling', f"{curve.name}-integral", family, curve.integral,
                                stderr=curve.integral_stderr, beta=SCALING_RANGE[0], beta_max=SCALING_RANGE[1],
                                scheme=scheme.describe(), seed=scheme.seed, hard=False))
    smallest, largest = SCALING_SIZES[0], SCALING_SIZES[-1]
    for name, by_size in integrals.items():
        shrinks = by_size[largest][1] < by_size[smallest][0]
        records.append(ResultRecord(
            check='scaling', quantity=f"{name}-trend", family=f"SK(n={smallest}..{largest})",
            value=by_size[largest][1] - by_size[smallest][0], passed=shrinks, hard=False,
            scheme=scheme.describe(), seed=scheme.seed, code_version=__version__,
        ))
    return records


def check_variance_bounds(workers: int) -> List[ResultRecord]:
    family = sherrington_kirkpatrick(10)
    records = []
    for beta in VARIANCE_BETAS:
        for report in (free_energy_variance(family, beta, SCALING_SAMPLES, SUITE_SEED, workers),
                       internal_energy_variance(family, beta, SCALING_SAMPLES, SUITE_SEED, workers)):
            records.append(_row(
                'variance-bounds', report.quantity, family, report.value, stderr=report.stderr, beta=beta,
                bound=report.bound, passed=report.satisfied, seed=SUITE_SEED,
                scheme=MonteCarlo(SCALING_SAMPLES, SUITE_SEED).describe(),
                extra={'ci_upper': report.ci_upper},
            ))
    curve = energy_variance_curve(family, SCALING_RANGE, SCALING_SAMPLES, SUITE_SEED, workers=workers)
    low, high = curve.interval
    # V(u) is non-negative, so its integral over the range is too
    records.append(_row(
        'variance-bounds', 'energy-variance-integral', family, curve.integral, stderr=curve.integral_stderr,
        beta=SCALING_RANGE[0], beta_max=SCALING_RANGE[1], seed=SUITE_SEED,
        scheme=MonteCarlo(SCALING_SAMPLES, SUITE_SEED).describe(), passed=curve.integral >= 0.0,
        extra={'measure': curve.measure, 'ci_lower': low, 'ci_upper': high},
    ))
    return records


DESK_CHECKS: List[Callable[[int], List[ResultRecord]]] = [
    check_dual_computation,
    check_wick,
    check_energy_identities,
    check_stability_constants,
    check_trivial_cases,
]

SUITES = {
    'desk': DESK_CHECKS,
    'full': DESK_CHECKS + [check_finite_size_trend, check_variance_bounds],
}


def run_suite(name: str, workers: int = 1, checks: Optional[List[Callable]] = None) -> RunSummary:
    """Run a named suite and collect its records."""
    summary = RunSummary(records=[])
    for check in checks or SUITES[name]:
        start = time.perf_counter()
        logger.info(f"Acceptance: {check.__name__}")
        records = check(workers)
        elapsed = time.perf_counter() - start
        for record in records:
            record.wall_time = elapsed
        failed = [r for r in records if r.passed is False and r.hard]
        logger.info(f"Acceptance: {check.__name__} done in {elapsed:.1f}s, {len(failed)} hard failure(s)")
        summary.records += records
    return summary
