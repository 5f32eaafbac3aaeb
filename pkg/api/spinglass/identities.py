"""Ghirlanda-Guerra building blocks, their β-averaged residuals and the self-averaging bounds.

For an overlap monomial G over replicas 1..R, with h = H/|Λ| and ⟨-⟩ = Av(Ω[-]):

    Δ₁G = Σ_l Av(Ω[h_l G] - Ω[h_l]Ω[G])       = -(1/|Λ|) ∂⟨G⟩/∂β
    Δ₂G = Σ_l [Av(Ω[h_l]Ω[G]) - ⟨h⟩⟨G⟩]       = R Cov_J(ω(h), Ω[G])

and Gaussian integration by parts turns both into overlap moments:

    Δ₁G = -β ⟨G [Σ_{k≠l} q_lk - 2R Σ_l q_{l,R+1} + R(R+1) q_{R+1,R+2}]⟩
    Δ₂G = -βR [Σ_k ⟨G q_{k,R+1}⟩ - (R+1)⟨G q_{R+1,R+2}⟩ + ⟨G⟩⟨q_12⟩]

Every function here evaluates the per-sample pieces on one Gibbs table per
disorder sample (or quadrature node) and combines the column means, so the
closed and definitional forms see identical couplings.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..utils.evaluation import QuenchedEstimate
from ..utils.logging import setup_logger
from ..utils.numerics import (
    bootstrap_indices, bootstrap_rng, central_difference, integration_weights, percentile_interval,
)
from ..utils.validation import ConfigError, EstimationError, InfeasibleError, validate_replica_indices
from .constants import (
    BETA_STEP, BOOTSTRAP_RESAMPLES, CONFIDENCE_LEVEL, DEFAULT_GRID_POINTS, ENERGY_VARIANCE_FACTOR,
    EXACT_QUADRATURE_ORDER, FREE_ENERGY_QUADRATIC, FREE_ENERGY_QUARTIC, MIN_GRID_POINTS,
    MIN_VARIANCE_SAMPLES, MONOMIAL_TUPLE_CAP, QUADRATURE_NODE_CAP, VARIANCE_TOLERANCE,
)
from .disorder import DisorderValues, MonteCarlo, Quadrature, Scheme, evaluate_disorder, refine_quadrature
from .gibbs import GibbsTable, enumerate_states, internal_energy
from .model import InteractionFamily, stability_report
from .observables import OverlapMonomial, omega_energy_monomial, omega_monomial_exact

logger = setup_logger(__name__)

BOOTSTRAP_STREAM = 2

MEASURE_BETA = 'beta'
MEASURE_BETA_SQUARED = 'beta2'
MEASURES = (MEASURE_BETA, MEASURE_BETA_SQUARED)

MAX_ENERGY_CHECK_COUPLINGS = 3

Term = Tuple[float, OverlapMonomial]


@dataclass(frozen=True)
class DeltaReport:
    """Closed-form and definitional values of one identity building block."""
    quantity: str
    beta: float
    replicas: int
    observable: str
    closed: QuenchedEstimate
    definitional: QuenchedEstimate

    @property
    def discrepancy(self) -> float:
        return abs(self.closed.mean - self.definitional.mean)


def magnitude_interval(low: float, high: float) -> Tuple[float, float]:
    """Interval of |x| implied by an interval [low, high] of x."""
    if low <= 0.0 <= high:
        return 0.0, max(-low, high)
    return min(abs(low), abs(high)), max(abs(low), abs(high))


@dataclass(frozen=True, eq=False)
class ResidualCurve:
    """Per-β residuals of one identity and their integral over [β₁, β₂] in the chosen measure."""
    name: str
    measure: str
    betas: np.ndarray
    values: np.ndarray
    stderrs: np.ndarray
    integral: float
    integral_stderr: float
    interval: Tuple[float, float]

    @property
    def abscissae(self) -> np.ndarray:
        return self.betas ** 2 if self.measure == MEASURE_BETA_SQUARED else self.betas

    def recomputed_integral(self) -> float:
        """The composite rule applied to the stored per-β values."""
        return float(integration_weights(self.abscissae) @ self.values)

    def magnitude_interval(self) -> Tuple[float, float]:
        """Confidence interval of |integral|."""
        return magnitude_interval(*self.interval)

    def rows(self) -> List[Dict[str, float]]:
        return [
            {'beta': float(b), 'residual': float(v), 'stderr': float(s)}
            for b, v, s in zip(self.betas, self.values, self.stderrs)
        ]


@dataclass(frozen=True)
class VarianceReport:
    """A disorder-fluctuation estimate checked against its upper bound."""
    quantity: str
    beta: float
    volume: int
    value: float
    stderr: float
    ci_lower: float
    ci_upper: float
    bound: float
    satisfied: bool
    n_samples: int


@dataclass(frozen=True)
class EnergyIdentityReport:
    """Both sides of an integration-by-parts energy identity, plus the enumerated moment."""
    quantity: str
    beta: float
    lhs: float
    rhs: float
    enumerated: float
    residual: float
    diagnostics: Dict[str, float] = field(default_factory=dict)
    order: int = EXACT_QUADRATURE_ORDER


def _require_monomial(observable, replicas: int) -> OverlapMonomial:
    if not isinstance(observable, OverlapMonomial):
        raise ConfigError("Identity checks need an overlap monomial observable")
    if replicas < 1:
        raise ConfigError(f"Replica count must be at least 1, got {replicas}")
    result = validate_replica_indices(observable.factors, replicas)
    if not result.is_valid:
        raise ConfigError(result.error)
    return observable


def delta1_terms(observable: OverlapMonomial, replicas: int) -> List[Term]:
    """Coefficients of Σ_{k≠l} q_lk - 2R Σ_l q_{l,R+1} + R(R+1) q_{R+1,R+2}, each times G."""
    r = replicas
    terms: List[Term] = [
        (2.0, observable.times((a, b))) for a in range(1, r + 1) for b in range(a + 1, r + 1)
    ]
    terms += [(-2.0 * r, observable.times((l, r + 1))) for l in range(1, r + 1)]
    terms.append((float(r * (r + 1)), observable.times((r + 1, r + 2))))
    return terms


def delta1_diagonal_terms(observable: OverlapMonomial, replicas: int) -> List[Term]:
    """The pre-cancellation self-overlaps: +Σ_l G q_ll and -R G q_{R+1,R+1}."""
    r = replicas
    terms: List[Term] = [(1.0, observable.times((l, l))) for l in range(1, r + 1)]
    terms.append((-float(r), observable.times((r + 1, r + 1))))
    return terms


def delta2_terms(observable: OverlapMonomial, replicas: int) -> List[Term]:
    """Σ_k G q_{k,R+1} - (R+1) G q_{R+1,R+2}; the ⟨G⟩⟨q_12⟩ product is added from separate means."""
    r = replicas
    terms: List[Term] = [(1.0, observable.times((k, r + 1))) for k in range(1, r + 1)]
    terms.append((-float(r + 1), observable.times((r + 1, r + 2))))
    return terms


def _combination(table: GibbsTable, family: InteractionFamily, terms: Sequence[Term],
                 cache: Dict[OverlapMonomial, np.ndarray], tuple_cap: int) -> np.ndarray:
    total = 0.0
    for coefficient, monomial in terms:
        if monomial not in cache:
            cache[monomial] = omega_monomial_exact(table, family, monomial, tuple_cap=tuple_cap)
        total = total + coefficient * cache[monomial]
    return np.asarray(total, dtype=float)


def _closed_columns(family: InteractionFamily, beta: float, replicas: int,
                    observable: OverlapMonomial, tuple_cap: int) -> Callable[[np.ndarray], np.ndarray]:
    """Per-sample [Δ₁ bracket, Δ₂ linear part, Ω[G], Ω[q_12]]."""
    first = delta1_terms(observable, replicas)
    second = delta2_terms(observable, replicas)
    overlap = OverlapMonomial(((1, 2),))

    def columns(couplings: np.ndarray) -> np.ndarray:
        table = enumerate_states(family, couplings, beta)
        cache: Dict[OverlapMonomial, np.ndarray] = {}
        return np.column_stack([
            _combination(table, family, first, cache, tuple_cap),
            _combination(table, family, second, cache, tuple_cap),
            _combination(table, family, [(1.0, observable)], cache, tuple_cap),
            _combination(table, family, [(1.0, overlap)], cache, tuple_cap),
        ])
    return columns


def delta1_closed(family: InteractionFamily, beta: float, replicas: int, observable: OverlapMonomial,
                  scheme: Scheme, workers: int = 1,
                  tuple_cap: int = MONOMIAL_TUPLE_CAP) -> QuenchedEstimate:
    """Δ₁G from its overlap expansion, -β⟨G·bracket⟩.

    Raises:
        ConfigError: G uses a replica above R
        InfeasibleError: G·q over the exact-evaluation caps
    """
    observable = _require_monomial(observable, replicas)
    terms = delta1_terms(observable, replicas)

    def bracket(couplings: np.ndarray) -> np.ndarray:
        table = enumerate_states(family, couplings, beta)
        return _combination(table, family, terms, {}, tuple_cap)
    return evaluate_disorder(bracket, family, scheme, workers).estimate().scaled(-beta)


def delta1_definitional(family: InteractionFamily, beta: float, observable: OverlapMonomial,
                        scheme: Scheme, step: float = BETA_STEP, workers: int = 1,
                        tuple_cap: int = MONOMIAL_TUPLE_CAP) -> QuenchedEstimate:
    """Δ₁G = -(1/|Λ|) ∂⟨G⟩/∂β, by a Richardson central difference of Ω[G] per sample.

    Raises:
        EstimationError: β - step < 0
    """
    if beta - step < 0:
        raise EstimationError(f"β-derivative at β={beta} needs β - h >= 0 (h={step})")
    observable = _require_monomial(observable, max(observable.max_replica, 1))

    def derivative(couplings: np.ndarray) -> np.ndarray:
        def moment(b: float) -> np.ndarray:
            table = enumerate_states(family, couplings, b)
            return np.asarray(omega_monomial_exact(table, family, observable, tuple_cap=tuple_cap))
        return central_difference(moment, beta, step)
    return evaluate_disorder(derivative, family, scheme, workers).estimate().scaled(-1.0 / family.volume)


def delta2_closed(family: InteractionFamily, beta: float, replicas: int, observable: OverlapMonomial,
                  scheme: Scheme, workers: int = 1,
                  tuple_cap: int = MONOMIAL_TUPLE_CAP) -> QuenchedEstimate:
    """Δ₂G = -βR[Σ_k ⟨G q_{k,R+1}⟩ - (R+1)⟨G q_{R+1,R+2}⟩ + ⟨G⟩⟨q_12⟩].

    The last term is the product of two quenched means; its error enters
    through the delta method.
    """
    observable = _require_monomial(observable, replicas)
    values = evaluate_disorder(_closed_columns(family, beta, replicas, observable, tuple_cap),
                               family, scheme, workers)
    return values.combine(lambda m: -beta * replicas * (m[1] + m[2] * m[3]))


def delta2_definitional(family: InteractionFamily, beta: float, replicas: int,
                        observable: OverlapMonomial, scheme: Scheme, workers: int = 1,
                        tuple_cap: int = MONOMIAL_TUPLE_CAP) -> QuenchedEstimate:
    """Δ₂G = R Cov_J(ω(h), Ω[G]) with ω(h) = 𝒰/|Λ| taken from the enumerated energies."""
    observable = _require_monomial(observable, replicas)

    def columns(couplings: np.ndarray) -> np.ndarray:
        table = enumerate_states(family, couplings, beta)
        energy = np.asarray(internal_energy(table)) / family.volume
        moment = np.asarray(omega_monomial_exact(table, family, observable, tuple_cap=tuple_cap))
        return np.column_stack([energy, moment, energy * moment])
    values = evaluate_disorder(columns, family, scheme, workers)
    return values.combine(lambda m: replicas * (m[2] - m[0] * m[1]))


def delta_reports(family: InteractionFamily, beta: float, replicas: int, observable: OverlapMonomial,
                  scheme: Scheme, workers: int = 1,
                  tuple_cap: int = MONOMIAL_TUPLE_CAP) -> Tuple[DeltaReport, DeltaReport]:
    """Closed against definitional Δ₁G and Δ₂G on the same samples."""
    label = str(observable)
    first = DeltaReport(
        'delta1', beta, replicas, label,
        delta1_closed(family, beta, replicas, observable, scheme, workers, tuple_cap),
        delta1_definitional(family, beta, observable, scheme, workers=workers, tuple_cap=tuple_cap),
    )
    second = DeltaReport(
        'delta2', beta, replicas, label,
        delta2_closed(family, beta, replicas, observable, scheme, workers, tuple_cap),
        delta2_definitional(family, beta, replicas, observable, scheme, workers, tuple_cap),
    )
    logger.debug(
        f"Δ at β={beta}, R={replicas}, G={label}: "
        f"Δ₁ gap {first.discrepancy:.3e}, Δ₂ gap {second.discrepancy:.3e}"
    )
    return first, second


def sum_rule(family: InteractionFamily, beta: float, replicas: int, observable: OverlapMonomial,
             scheme: Scheme, workers: int = 1, tuple_cap: int = MONOMIAL_TUPLE_CAP,
             delta1: Optional[QuenchedEstimate] = None,
             delta2: Optional[QuenchedEstimate] = None) -> DeltaReport:
    """Δ₁G + Δ₂G from the closed forms against Σ_l[⟨h_l G⟩ - ⟨h⟩⟨G⟩] computed directly.

    Closed-form estimates already computed on the same scheme can be passed in.
    """
    observable = _require_monomial(observable, replicas)

    def columns(couplings: np.ndarray) -> np.ndarray:
        table = enumerate_states(family, couplings, beta)
        weighted = sum(
            np.asarray(omega_energy_monomial(table, family, couplings, observable, l, tuple_cap))
            for l in range(1, replicas + 1)
        )
        energy = np.asarray(internal_energy(table)) / family.volume
        moment = np.asarray(omega_monomial_exact(table, family, observable, tuple_cap=tuple_cap))
        return np.column_stack([np.broadcast_to(weighted, energy.shape), energy, moment])
    direct = evaluate_disorder(columns, family, scheme, workers).combine(
        lambda m: m[0] - replicas * m[1] * m[2]
    )
    first = delta1 or delta1_closed(family, beta, replicas, observable, scheme, workers, tuple_cap)
    second = delta2 or delta2_closed(family, beta, replicas, observable, scheme, workers, tuple_cap)
    closed = first.with_value(first.mean + second.mean, math.hypot(first.stderr, second.stderr))
    return DeltaReport('sum-rule', beta, replicas, str(observable), closed, direct)


def converged_delta_reports(family: InteractionFamily, beta: float, replicas: int,
                            observable: OverlapMonomial, order: int = EXACT_QUADRATURE_ORDER,
                            workers: int = 1, tuple_cap: int = MONOMIAL_TUPLE_CAP,
                            node_cap: int = QUADRATURE_NODE_CAP,
                            ) -> Tuple[Tuple[DeltaReport, DeltaReport, DeltaReport], Quadrature]:
    """Δ₁, Δ₂ and the sum rule under quadrature, the order raised from `order` until they settle.

    Settling is judged on the closed forms, the direct sum rule and the Δ₂
    covariance; the β-derivative of Δ₁ carries finite-difference rounding of
    its own and follows the same order.

    Returns:
        ((Δ₁ report, Δ₂ report, sum-rule report), quadrature scheme used)
    """
    def compute(scheme: Quadrature) -> Tuple[DeltaReport, DeltaReport, DeltaReport]:
        first, second = delta_reports(family, beta, replicas, observable, scheme, workers, tuple_cap)
        rule = sum_rule(family, beta, replicas, observable, scheme, workers, tuple_cap,
                        delta1=first.closed, delta2=second.closed)
        return first, second, rule

    def settled(reports: Tuple[DeltaReport, DeltaReport, DeltaReport]) -> List[float]:
        first, second, rule = reports
        return [first.closed.mean, second.closed.mean, second.definitional.mean, rule.definitional.mean]

    return refine_quadrature(compute, settled, order, node_cap)


def self_overlap_cancellation(family: InteractionFamily, beta: float, replicas: int,
                              observable: OverlapMonomial, scheme: Scheme, workers: int = 1,
                              tuple_cap: int = MONOMIAL_TUPLE_CAP) -> DeltaReport:
    """Δ₁G with and without the self-overlap terms Σ_l G q_ll - R G q_{R+1,R+1}; they cancel."""
    observable = _require_monomial(observable, replicas)
    plain = delta1_terms(observable, replicas)
    full = plain + delta1_diagonal_terms(observable, replicas)

    def columns(couplings: np.ndarray) -> np.ndarray:
        table = enumerate_states(family, couplings, beta)
        cache: Dict[OverlapMonomial, np.ndarray] = {}
        return np.column_stack([
            _combination(table, family, plain, cache, tuple_cap),
            _combination(table, family, full, cache, tuple_cap),
        ])
    values = evaluate_disorder(columns, family, scheme, workers)
    without = values.estimate(0).scaled(-beta)
    with_diagonal = values.estimate(1).scaled(-beta)
    return DeltaReport('self-overlap', beta, replicas, str(observable), without, with_diagonal)


def beta_grid(beta_range: Tuple[float, float], points: int = DEFAULT_GRID_POINTS,
              measure: str = MEASURE_BETA_SQUARED) -> np.ndarray:
    """Increasing β grid, uniform in β² (default) or in β.

    Raises:
        ConfigError: fewer than three points, negative β₁, β₂ < β₁ or unknown measure
    """
    low, high = (float(b) for b in beta_range)
    if points < MIN_GRID_POINTS:
        raise ConfigError(f"β grid needs at least {MIN_GRID_POINTS} points, got {points}")
    if low < 0 or high < low:
        raise ConfigError(f"Invalid β range [{low}, {high}]")
    if measure not in MEASURES:
        raise ConfigError(f"Unknown integration measure '{measure}'; expected one of {MEASURES}")
    if measure == MEASURE_BETA_SQUARED:
        return np.sqrt(np.linspace(low * low, high * high, points))
    return np.linspace(low, high, points)


def _curves(family: InteractionFamily, betas: np.ndarray, measure: str, scheme: Scheme,
            columns_at: Callable[[float], Callable[[np.ndarray], np.ndarray]],
            residuals: Dict[str, Callable[[np.ndarray], float]], workers: int) -> List[ResidualCurve]:
    """Residual curves sharing one evaluation per β and one set of bootstrap resamples."""
    per_beta: List[DisorderValues] = [
        evaluate_disorder(columns_at(float(beta)), family, scheme, workers) for beta in betas
    ]
    abscissae = betas ** 2 if measure == MEASURE_BETA_SQUARED else betas
    weights = integration_weights(abscissae)
    resamples = None
    if isinstance(scheme, MonteCarlo):
        rng = bootstrap_rng(scheme.seed, BOOTSTRAP_STREAM)
        indices = bootstrap_indices(scheme.samples, rng, BOOTSTRAP_RESAMPLES)
        resamples = [values.resampled_means(indices) for values in per_beta]

    curves = []
    for name, residual in residuals.items():
        estimates = [values.combine(residual) for values in per_beta]
        curve_values = np.array([e.mean for e in estimates])
        stderrs = np.array([e.stderr for e in estimates])
        integral = float(weights @ curve_values)
        if resamples is None:
            spread, interval = 0.0, (integral, integral)
        else:
            replicates = np.array([
                [residual(row) for row in means] for means in resamples
            ]).T @ weights
            spread = float(np.std(replicates, ddof=1))
            interval = percentile_interval(replicates, CONFIDENCE_LEVEL)
        curves.append(ResidualCurve(name, measure, betas, curve_values, stderrs,
                                    integral, spread, interval))
    return curves


def gg_residuals(family: InteractionFamily, replicas: int, observable: OverlapMonomial,
                 beta_range: Tuple[float, float], scheme: Scheme,
                 points: int = DEFAULT_GRID_POINTS, measure: str = MEASURE_BETA_SQUARED,
                 workers: int = 1,
                 tuple_cap: int = MONOMIAL_TUPLE_CAP) -> Tuple[ResidualCurve, ResidualCurve]:
    """Integrands of the two Ghirlanda-Guerra identities and their β-averages.

    The first curve is ⟨G·bracket⟩ = -Δ₁G/β and the second is
    Σ_k⟨G q_{k,R+1}⟩ - (R+1)⟨G q_{R+1,R+2}⟩ + ⟨G⟩⟨q_12⟩ = -Δ₂G/(βR); both are
    evaluated directly so they stay defined at β = 0.
    """
    observable = _require_monomial(observable, replicas)
    betas = beta_grid(beta_range, points, measure)
    logger.info(
        f"GG residuals for {family.describe()}, G={observable}, R={replicas}, "
        f"β∈[{betas[0]:g}, {betas[-1]:g}] ({points} points, {scheme.describe()})"
    )
    first, second = _curves(
        family, betas, measure, scheme,
        lambda beta: _closed_columns(family, beta, replicas, observable, tuple_cap),
        {'gg-first': lambda m: m[0], 'gg-second': lambda m: m[1] + m[2] * m[3]},
        workers,
    )
    return first, second


def classical_identities(family: InteractionFamily, beta_range: Tuple[float, float], scheme: Scheme,
                         points: int = DEFAULT_GRID_POINTS, measure: str = MEASURE_BETA_SQUARED,
                         workers: int = 1,
                         tuple_cap: int = MONOMIAL_TUPLE_CAP) -> Tuple[ResidualCurve, ResidualCurve]:
    """r₁ = ⟨q12 q23⟩ - ½⟨q12²⟩ - ½⟨q12⟩² and r₂ = ⟨q12 q34⟩ - ⅓⟨q12²⟩ - ⅔⟨q12⟩² over a β grid."""
    betas = beta_grid(beta_range, points, measure)
    monomials = [
        OverlapMonomial(((1, 2), (2, 3))),
        OverlapMonomial(((1, 2), (1, 2))),
        OverlapMonomial(((1, 2), (3, 4))),
        OverlapMonomial(((1, 2),)),
    ]

    def columns_at(beta: float) -> Callable[[np.ndarray], np.ndarray]:
        def columns(couplings: np.ndarray) -> np.ndarray:
            table = enumerate_states(family, couplings, beta)
            return np.column_stack([
                np.asarray(omega_monomial_exact(table, family, m, tuple_cap=tuple_cap))
                for m in monomials
            ])
        return columns

    logger.info(f"Classical identities for {family.describe()} over {points} β points, {scheme.describe()}")
    first, second = _curves(
        family, betas, measure, scheme, columns_at,
        {
            'classical-first': lambda m: m[0] - 0.5 * m[1] - 0.5 * m[3] ** 2,
            'classical-second': lambda m: m[2] - m[1] / 3.0 - 2.0 * m[3] ** 2 / 3.0,
        },
        workers,
    )
    return first, second


def free_energy_bound(beta: float, per_site_bound: float, volume: int) -> float:
    """|Λ| (¼β²c̄ + 35/36 β⁴c̄²)."""
    return volume * (FREE_ENERGY_QUADRATIC * beta**2 * per_site_bound
                     + FREE_ENERGY_QUARTIC * beta**4 * per_site_bound**2)


def energy_variance_bound(beta: float, per_site_bound: float) -> float:
    """15 β² c̄²."""
    return ENERGY_VARIANCE_FACTOR * beta**2 * per_site_bound**2


def _variance_report(quantity: str, beta: float, family: InteractionFamily, samples: np.ndarray,
                     bound: float, seed: int) -> VarianceReport:
    variance = float(np.var(samples, ddof=1))
    indices = bootstrap_indices(len(samples), bootstrap_rng(seed, BOOTSTRAP_STREAM), BOOTSTRAP_RESAMPLES)
    replicates = np.var(samples[indices], axis=1, ddof=1)
    low, high = percentile_interval(replicates, CONFIDENCE_LEVEL)
    report = VarianceReport(
        quantity=quantity,
        beta=beta,
        volume=family.volume,
        value=variance,
        stderr=float(np.std(replicates, ddof=1)),
        ci_lower=low,
        ci_upper=high,
        bound=bound,
        satisfied=high <= bound + VARIANCE_TOLERANCE,
        n_samples=len(samples),
    )
    if not report.satisfied:
        logger.warning(f"{quantity} variance {variance:.6g} (upper CI {high:.6g}) exceeds bound {bound:.6g}")
    return report


def _per_sample(family: InteractionFamily, beta: float, samples: int, seed: int, workers: int,
                fn: Callable[[GibbsTable], np.ndarray]) -> np.ndarray:
    if samples < MIN_VARIANCE_SAMPLES:
        raise EstimationError(f"Variance reports need at least {MIN_VARIANCE_SAMPLES} samples, got {samples}")
    values = evaluate_disorder(
        lambda couplings: fn(enumerate_states(family, couplings, beta)),
        family, MonteCarlo(samples, seed), workers,
    )
    return values.values[:, 0]


def free_energy_variance(family: InteractionFamily, beta: float, samples: int, seed: int,
                         workers: int = 1) -> VarianceReport:
    """Sample variance of the random pressure 𝒜 = ln Z against |Λ| c(β)."""
    pressures = _per_sample(family, beta, samples, seed, workers, lambda table: table.log_z)
    bound = free_energy_bound(beta, stability_report(family).effective_bound, family.volume)
    return _variance_report('free-energy', beta, family, pressures, bound, seed)


def internal_energy_variance(family: InteractionFamily, beta: float, samples: int, seed: int,
                             workers: int = 1) -> VarianceReport:
    """Sample variance of u = 𝒰/|Λ| against 15β²c̄²."""
    energies = _per_sample(family, beta, samples, seed, workers,
                           lambda table: np.asarray(internal_energy(table)) / family.volume)
    bound = energy_variance_bound(beta, stability_report(family).effective_bound)
    return _variance_report('internal-energy', beta, family, energies, bound, seed)


def energy_variance_curve(family: InteractionFamily, beta_range: Tuple[float, float], samples: int,
                          seed: int, points: int = DEFAULT_GRID_POINTS,
                          measure: str = MEASURE_BETA_SQUARED, workers: int = 1) -> ResidualCurve:
    """V(u) over a β grid and its integral, the quantity that controls the Δ residuals on average.

    Every β uses the same coupling samples; the interval comes from resampling
    those samples jointly across the grid.
    """
    if samples < MIN_VARIANCE_SAMPLES:
        raise EstimationError(f"Variance reports need at least {MIN_VARIANCE_SAMPLES} samples, got {samples}")
    betas = beta_grid(beta_range, points, measure)

    def columns(couplings: np.ndarray) -> np.ndarray:
        return np.column_stack([
            np.asarray(internal_energy(enumerate_states(family, couplings, float(beta)))) / family.volume
            for beta in betas
        ])
    energies = evaluate_disorder(columns, family, MonteCarlo(samples, seed), workers).values
    values = np.var(energies, axis=0, ddof=1)
    indices = bootstrap_indices(samples, bootstrap_rng(seed, BOOTSTRAP_STREAM), BOOTSTRAP_RESAMPLES)
    replicates = np.stack([np.var(energies[rows], axis=0, ddof=1) for rows in indices])
    weights = integration_weights(betas ** 2 if measure == MEASURE_BETA_SQUARED else betas)
    integrals = replicates @ weights
    logger.info(f"V(u) curve for {family.describe()} over {points} β points, {samples} samples")
    return ResidualCurve(
        name='energy-variance',
        measure=measure,
        betas=betas,
        values=values,
        stderrs=np.std(replicates, axis=0, ddof=1),
        integral=float(weights @ values),
        integral_stderr=float(np.std(integrals, ddof=1)),
        interval=percentile_interval(integrals, CONFIDENCE_LEVEL),
    )


def delta2_schwarz_check(family: InteractionFamily, beta: float, replicas: int,
                         observable: OverlapMonomial, samples: int, seed: int,
                         workers: int = 1) -> VarianceReport:
    """(Δ₂G/R)² against 2 V(u) M², with M = c̄^degree bounding |G|."""
    scheme = MonteCarlo(samples, seed)
    delta = delta2_definitional(family, beta, replicas, observable, scheme, workers)
    energy = internal_energy_variance(family, beta, samples, seed, workers)
    per_site = stability_report(family).effective_bound
    squared = (delta.mean / replicas) ** 2
    spread = 2.0 * abs(delta.mean) * delta.stderr / replicas**2
    bound = 2.0 * energy.value * observable.bound(per_site) ** 2
    return VarianceReport(
        quantity='delta2-schwarz',
        beta=beta,
        volume=family.volume,
        value=squared,
        stderr=spread,
        ci_lower=max(squared - 2.0 * spread, 0.0),
        ci_upper=squared + 2.0 * spread,
        bound=bound,
        satisfied=squared <= bound + VARIANCE_TOLERANCE,
        n_samples=samples,
    )


def _require_quadrature_family(family: InteractionFamily) -> None:
    if family.size > MAX_ENERGY_CHECK_COUPLINGS:
        raise InfeasibleError(
            f"Energy identity checks need K <= {MAX_ENERGY_CHECK_COUPLINGS}, got {family.size}"
        )


def _exact_means(columns: Callable[[np.ndarray], np.ndarray], family: InteractionFamily, order: int,
                 node_cap: int, converge: bool) -> Tuple[np.ndarray, int]:
    if not converge:
        return evaluate_disorder(columns, family, Quadrature(order, node_cap)).means(), order
    means, scheme = refine_quadrature(
        lambda s: evaluate_disorder(columns, family, s).means(), lambda m: m, order, node_cap
    )
    return means, scheme.order


def internal_energy_identity_check(family: InteractionFamily, beta: float,
                                   order: int = EXACT_QUADRATURE_ORDER,
                                   node_cap: int = QUADRATURE_NODE_CAP,
                                   converge: bool = True) -> EnergyIdentityReport:
    """Av(Σ_X J_X ω(σ_X)) against Σ_X βΔ²_X[1 - Av ω²(σ_X)], and -Av(𝒰) against the same.

    With H = -Σ J_X σ_X the enumerated 𝒰 equals minus the left side; the
    residual is the larger gap of the two consistent pairings and the
    opposite-sign pairing is kept as a diagnostic.
    """
    _require_quadrature_family(family)
    masks = family.masks

    def columns(couplings: np.ndarray) -> np.ndarray:
        table = enumerate_states(family, couplings, beta)
        parities = table.spectrum[..., masks]
        return np.column_stack([
            np.sum(couplings * parities, axis=-1),
            np.asarray(internal_energy(table)),
            parities ** 2,
        ])
    means, used = _exact_means(columns, family, order, node_cap, converge)
    lhs, enumerated = float(means[0]), float(means[1])
    rhs = float(np.sum(beta * family.variance_array * (1.0 - means[2:])))
    residual = max(abs(lhs - rhs), abs(-enumerated - rhs))
    return EnergyIdentityReport(
        quantity='internal-energy-mean', beta=beta, lhs=lhs, rhs=rhs, enumerated=enumerated,
        residual=residual, diagnostics={'opposite_sign': abs(enumerated - rhs)},
        order=used,
    )


def internal_energy_second_moment_check(family: InteractionFamily, beta: float,
                                        order: int = EXACT_QUADRATURE_ORDER,
                                        node_cap: int = QUADRATURE_NODE_CAP,
                                        converge: bool = True) -> EnergyIdentityReport:
    """Av(𝒰²) against its integration-by-parts expansion.

    The expansion is Σ_X Δ²_X Av ω²(σ_X) plus the double sum over (X, Y) of
    β²Δ²_XΔ²_Y Av[1 - ω²_X - ω²_Y + 6ω²_Xω²_Y - 6ω_Xω_Yω_XY + ω²_XY]; the
    double sum alone is reported as the 'double_sum_only' diagnostic.
    """
    _require_quadrature_family(family)
    masks = family.masks
    size = family.size

    def columns(couplings: np.ndarray) -> np.ndarray:
        table = enumerate_states(family, couplings, beta)
        spectrum = table.spectrum
        single = spectrum[..., masks]
        joint = spectrum[..., masks[:, None] ^ masks[None, :]]
        brackets = (
            1.0 - single[..., :, None] ** 2 - single[..., None, :] ** 2
            + 6.0 * single[..., :, None] ** 2 * single[..., None, :] ** 2
            - 6.0 * single[..., :, None] * single[..., None, :] * joint
            + joint ** 2
        )
        table_second = np.sum(table.probabilities * table.energies, axis=-1) ** 2
        return np.column_stack([
            np.sum(couplings * single, axis=-1) ** 2,
            table_second,
            single ** 2,
            brackets.reshape(len(couplings), size * size),
        ])
    means, used = _exact_means(columns, family, order, node_cap, converge)
    lhs, enumerated = float(means[0]), float(means[1])
    squares = means[2:2 + size]
    brackets = means[2 + size:2 + size + size * size].reshape(size, size)
    variances = family.variance_array
    double_sum = float(beta**2 * variances @ brackets @ variances)
    diagonal = float(variances @ squares)
    rhs = diagonal + double_sum
    return EnergyIdentityReport(
        quantity='internal-energy-second-moment', beta=beta, lhs=lhs, rhs=rhs, enumerated=enumerated,
        residual=max(abs(lhs - rhs), abs(enumerated - rhs)),
        diagnostics={'double_sum_only': abs(lhs - double_sum), 'diagonal_term': diagonal},
        order=used,
    )
