"""Coupling realizations, tensor Gauss-Hermite quadrature and Monte Carlo disorder averages.

Every average over the couplings goes through `evaluate_disorder`, which
cuts the sample (or node) index range into chunks whose boundaries depend
only on the family, evaluates the chunks on a thread pool and stacks the
results in index order. Reductions therefore see the same array whatever
the worker count.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, TypeVar, Union

import numpy as np
from numpy.polynomial.hermite import hermgauss

from ..utils.evaluation import MONTE_CARLO, QUADRATURE, QuenchedEstimate
from ..utils.logging import setup_logger
from ..utils.numerics import central_difference, delta_method, tree_mean
from ..utils.validation import ConfigError, EstimationError, InfeasibleError
from .constants import (
    CHUNK_SIZE, DEFAULT_QUADRATURE_ORDER, EXACT_QUADRATURE_ORDER, MAX_BATCH_ELEMENTS, MAX_EXACT_ORDER,
    MIN_MC_SAMPLES, QUADRATURE_CONVERGENCE, QUADRATURE_GROWTH, QUADRATURE_NODE_CAP, WEIGHT_SUM_TOLERANCE,
    WICK_STEP,
)
from .gibbs import enumerate_states, omega_mask
from .model import InteractionFamily

logger = setup_logger(__name__)

DISORDER_STREAM = 0
REPLICA_STREAM = 1
MAX_WICK_COUPLINGS = 3

T = TypeVar("T")


@dataclass(frozen=True)
class MonteCarlo:
    """Average over n independent coupling draws of a seeded counter-based stream."""
    samples: int
    seed: int

    method = MONTE_CARLO

    def describe(self) -> str:
        return f"mc(n={self.samples},seed={self.seed})"


@dataclass(frozen=True)
class Quadrature:
    """Tensor-product Gauss-Hermite rule with `order` nodes per active coupling."""
    order: int = DEFAULT_QUADRATURE_ORDER
    node_cap: int = field(default=QUADRATURE_NODE_CAP, compare=False)

    method = QUADRATURE
    seed = 0

    def describe(self) -> str:
        return f"quadrature(order={self.order})"


Scheme = Union[MonteCarlo, Quadrature]


@dataclass(frozen=True, eq=False)
class DisorderSample:
    """One realization of the couplings, aligned with the family's subset order."""
    couplings: np.ndarray
    index: int
    seed: int

    def __len__(self) -> int:
        return len(self.couplings)


def coupling_stream(seed: int, index: int, stream: int = DISORDER_STREAM) -> np.random.Generator:
    """Philox generator keyed by (seed, stream, sample index); no state is shared between samples."""
    if seed < 0 or index < 0:
        raise ConfigError(f"Seed and sample index must be non-negative, got seed={seed}, index={index}")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(stream, index))))


def _draw(family: InteractionFamily, seed: int, index: int) -> np.ndarray:
    # coupling k always takes the k-th normal of the (seed, index) stream
    normals = coupling_stream(seed, index).standard_normal(family.size)
    return np.where(family.variance_array > 0.0, np.sqrt(family.variance_array) * normals, 0.0)


def sample_disorder(family: InteractionFamily, seed: int, index: int) -> DisorderSample:
    """Draw J_X ~ N(0, Δ²_X) for every subset; Δ²_X = 0 couplings are exactly 0."""
    couplings = _draw(family, seed, index)
    couplings.setflags(write=False)
    return DisorderSample(couplings=couplings, index=index, seed=seed)


def sample_couplings(family: InteractionFamily, seed: int, indices: Iterable[int]) -> np.ndarray:
    """Couplings of several sample indices stacked as (n, K)."""
    rows = [_draw(family, seed, index) for index in indices]
    if not rows:
        return np.zeros((0, family.size))
    return np.vstack(rows)


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    """Per-dimension Gauss-Hermite nodes and weights for the active couplings."""
    order: int
    size: int
    active: np.ndarray
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def dimensions(self) -> int:
        return len(self.active)

    @property
    def node_count(self) -> int:
        return self.order ** self.dimensions

    def points(self, start: int, stop: int) -> Tuple[np.ndarray, np.ndarray]:
        """Couplings (m, K) and product weights (m,) of tensor nodes start..stop-1."""
        flat = np.arange(start, stop)
        couplings = np.zeros((flat.size, self.size))
        weights = np.ones(flat.size)
        if self.dimensions == 0:
            return couplings, weights
        digits = np.unravel_index(flat, (self.order,) * self.dimensions)
        for dim, (coupling, digit) in enumerate(zip(self.active, digits)):
            couplings[:, coupling] = self.nodes[dim, digit]
            weights = weights * self.weights[dim, digit]
        return couplings, weights


def quadrature_grid(family: InteractionFamily, order: int = DEFAULT_QUADRATURE_ORDER,
                    node_cap: int = QUADRATURE_NODE_CAP) -> QuadratureGrid:
    """Gauss-Hermite nodes rescaled so coupling k has variance Δ²_k; zero-variance couplings drop out.

    Raises:
        ConfigError: order < 1
        InfeasibleError: order^K exceeds the node cap
    """
    if order < 1:
        raise ConfigError(f"Quadrature order must be positive, got {order}")
    active = family.active
    if order ** len(active) > node_cap:
        raise InfeasibleError(
            f"Quadrature of order {order} over {len(active)} couplings needs "
            f"{order}^{len(active)} nodes; cap is {node_cap}"
        )
    abscissae, raw_weights = hermgauss(order)
    unit_weights = raw_weights / raw_weights.sum()
    if abs(unit_weights.sum() - 1.0) > WEIGHT_SUM_TOLERANCE:
        raise InfeasibleError(f"Gauss-Hermite weights of order {order} do not normalize")
    scales = np.sqrt(2.0 * family.variance_array[active])
    nodes = scales[:, None] * abscissae[None, :]
    weights = np.tile(unit_weights, (len(active), 1))
    logger.debug(f"Quadrature grid: order {order}, {len(active)} dimensions, {order ** len(active)} nodes")
    return QuadratureGrid(order=order, size=family.size, active=active, nodes=nodes, weights=weights)


@dataclass(frozen=True, eq=False)
class DisorderValues:
    """Per-sample (or per-node) values of one or more disorder functions."""
    values: np.ndarray
    weights: Optional[np.ndarray]
    scheme: Scheme

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def columns(self) -> int:
        return self.values.shape[1]

    def means(self) -> np.ndarray:
        return tree_mean(self.values, self.weights)

    def mean_covariance(self) -> np.ndarray:
        """Covariance matrix of the column means (zero for quadrature)."""
        if self.weights is not None:
            return np.zeros((self.columns, self.columns))
        if self.n < MIN_MC_SAMPLES:
            raise EstimationError(f"Monte Carlo stderr needs n >= {MIN_MC_SAMPLES}, got {self.n}")
        centered = self.values - self.means()
        return (centered.T @ centered) / (self.n - 1) / self.n

    def _estimate(self, mean: float, stderr: float) -> QuenchedEstimate:
        order = self.scheme.order if self.weights is not None else None
        return QuenchedEstimate(
            mean=float(mean),
            stderr=0.0 if self.weights is not None else float(stderr),
            n_samples=self.n,
            method=self.scheme.method,
            seed=self.scheme.seed,
            order=order,
        )

    def estimate(self, column: int = 0) -> QuenchedEstimate:
        means = self.means()
        covariance = self.mean_covariance()
        return self._estimate(means[column], np.sqrt(max(covariance[column, column], 0.0)))

    def combine(self, fn: Callable[[np.ndarray], float]) -> QuenchedEstimate:
        """Estimate of a smooth function of the column means; stderr by the delta method."""
        means = self.means()
        value = float(fn(means))
        if self.weights is not None:
            return self._estimate(value, 0.0)
        gradient = np.zeros(self.columns)
        for column in range(self.columns):
            step = 1e-6 * max(1.0, abs(means[column]))
            up, down = means.copy(), means.copy()
            up[column] += step
            down[column] -= step
            gradient[column] = (fn(up) - fn(down)) / (2.0 * step)
        return self._estimate(value, delta_method(gradient, self.mean_covariance()))

    def resampled_means(self, indices: np.ndarray) -> np.ndarray:
        """Column means of bootstrap resamples, shape (resamples, columns)."""
        return np.stack([tree_mean(self.values[rows]) for rows in indices])


def chunk_length(family: InteractionFamily) -> int:
    """Samples per chunk; fixed by the family so results do not depend on the worker count."""
    return max(1, min(CHUNK_SIZE, MAX_BATCH_ELEMENTS // family.n_states))


def evaluate_disorder(fn: Callable[..., np.ndarray], family: InteractionFamily,
                      scheme: Scheme, workers: int = 1,
                      node_cap: Optional[int] = None,
                      with_indices: bool = False) -> DisorderValues:
    """Evaluate fn on every disorder sample or quadrature node of the scheme.

    Args:
        fn: Maps couplings (B, K) to values (B,) or (B, m)
        family: Interaction family
        scheme: MonteCarlo or Quadrature
        workers: Thread count; results are bit-identical for any value
        node_cap: Quadrature feasibility cap; defaults to the scheme's own
        with_indices: Also pass the sample (or node) indices of the chunk to fn

    Returns:
        DisorderValues: Stacked values in sample/node order
    """
    length = chunk_length(family)
    if isinstance(scheme, MonteCarlo):
        if scheme.samples < 1:
            raise EstimationError(f"Monte Carlo needs at least one sample, got {scheme.samples}")
        total = scheme.samples
        grid = None
    else:
        grid = quadrature_grid(family, scheme.order, scheme.node_cap if node_cap is None else node_cap)
        total = grid.node_count
    bounds = [(start, min(start + length, total)) for start in range(0, total, length)]

    def run(bound: Tuple[int, int]) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        start, stop = bound
        if grid is None:
            couplings, weights = sample_couplings(family, scheme.seed, range(start, stop)), None
        else:
            couplings, weights = grid.points(start, stop)
        if with_indices:
            values = np.asarray(fn(couplings, np.arange(start, stop)), dtype=float)
        else:
            values = np.asarray(fn(couplings), dtype=float)
        return values.reshape(stop - start, -1), weights

    logger.debug(f"Evaluating {total} disorder points of {family.describe()} in {len(bounds)} chunks")
    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, bounds))
    else:
        parts = [run(bound) for bound in bounds]
    values = np.concatenate([part[0] for part in parts])
    weights = None if grid is None else np.concatenate([part[1] for part in parts])
    return DisorderValues(values=values, weights=weights, scheme=scheme)


def quenched_average(fn: Callable[..., np.ndarray], family: InteractionFamily,
                     scheme: Scheme, workers: int = 1,
                     node_cap: Optional[int] = None,
                     with_indices: bool = False) -> QuenchedEstimate:
    """Av(fn) over the couplings: Monte Carlo mean with stderr, or exact tensor quadrature.

    Raises:
        EstimationError: Monte Carlo with n < 2
        InfeasibleError: quadrature grid over the node cap
    """
    if isinstance(scheme, MonteCarlo) and scheme.samples < MIN_MC_SAMPLES:
        raise EstimationError(f"Monte Carlo stderr needs n >= {MIN_MC_SAMPLES}, got {scheme.samples}")
    return evaluate_disorder(fn, family, scheme, workers, node_cap, with_indices).estimate(0)


def refine_quadrature(compute: Callable[[Quadrature], T], values: Callable[[T], Sequence[float]],
                      order: int = EXACT_QUADRATURE_ORDER, node_cap: int = QUADRATURE_NODE_CAP,
                      tolerance: float = QUADRATURE_CONVERGENCE,
                      max_order: int = MAX_EXACT_ORDER) -> Tuple[T, Quadrature]:
    """Raise the quadrature order until two successive orders agree.

    The order grows by QUADRATURE_GROWTH from `order` until the tracked values
    of consecutive orders differ by at most `tolerance`; the result of the
    higher order is returned with its scheme. When the next order would pass
    max_order or the node cap, the last result is returned and a warning logged.

    Args:
        compute: Runs the computation under a given quadrature scheme
        values: Numbers of a result that must settle
        order: Starting order
        node_cap: Quadrature feasibility cap
        tolerance: Largest accepted change between consecutive orders
        max_order: Highest order tried
    """
    scheme = Quadrature(order, node_cap)
    result = compute(scheme)
    current = np.asarray(values(result), dtype=float)
    while True:
        following = max(scheme.order + 1, math.ceil(scheme.order * QUADRATURE_GROWTH))
        if following > max_order:
            logger.warning(f"Quadrature not settled below order {max_order}; keeping order {scheme.order}")
            return result, scheme
        candidate_scheme = Quadrature(following, node_cap)
        try:
            candidate = compute(candidate_scheme)
        except InfeasibleError as exc:
            logger.warning(f"Quadrature refinement stopped at order {scheme.order}: {exc.detail}")
            return result, scheme
        refined = np.asarray(values(candidate), dtype=float)
        gap = float(np.max(np.abs(refined - current))) if refined.size else 0.0
        result, scheme, current = candidate, candidate_scheme, refined
        if gap <= tolerance:
            logger.debug(f"Quadrature settled at order {scheme.order} (change {gap:.2e})")
            return result, scheme


@dataclass(frozen=True)
class ProbeFunction:
    """Smooth bounded function of the couplings used to exercise Gaussian integration by parts."""
    name: str
    fn: Callable[[np.ndarray], np.ndarray]

    def __call__(self, couplings: np.ndarray) -> np.ndarray:
        return self.fn(np.asarray(couplings, dtype=float))


def coordinate_probe(index: int = 0) -> ProbeFunction:
    return ProbeFunction(f"x{index}", lambda x: x[..., index])


def polynomial_probe(coefficients: Sequence[float], index: int = 0) -> ProbeFunction:
    """Σ_i c_i x^i in one coupling, degree at most 4."""
    if len(coefficients) > 5:
        raise ConfigError(f"Polynomial probes have degree <= 4, got {len(coefficients) - 1}")
    coefficients = tuple(float(c) for c in coefficients)
    name = '+'.join(f"{c:g}*x{index}^{power}" for power, c in enumerate(coefficients) if c)
    return ProbeFunction(name or '0', lambda x: np.polynomial.polynomial.polyval(x[..., index], coefficients))


def tanh_probe(beta: float, indices: Optional[Sequence[int]] = None) -> ProbeFunction:
    """Π_k tanh(β x_k) over the chosen couplings."""
    def fn(x: np.ndarray) -> np.ndarray:
        chosen = range(x.shape[-1]) if indices is None else indices
        return np.prod(np.tanh(beta * x[..., list(chosen)]), axis=-1)
    return ProbeFunction(f"tanh-product(beta={beta})", fn)


def magnetization_probe(family: InteractionFamily, beta: float, index: int = 0) -> ProbeFunction:
    """Gibbs expectation ω(σ_X) of the family's index-th subset, as a function of the couplings."""
    mask = int(family.masks[index])

    def fn(x: np.ndarray) -> np.ndarray:
        return np.asarray(omega_mask(enumerate_states(family, x, beta), mask))
    return ProbeFunction(f"omega(sigma_{family.subsets[index]},beta={beta})", fn)


def builtin_probes(family: InteractionFamily, beta: float) -> List[ProbeFunction]:
    """The standard probe suite: linear, quadratic, quartic, tanh products, Gibbs magnetization."""
    return [
        coordinate_probe(0),
        polynomial_probe([0.0, 0.0, 1.0]),
        polynomial_probe([0.5, -1.0, 0.25, 0.0, -0.125]),
        tanh_probe(beta),
        magnetization_probe(family, beta),
    ]


def _wick_means(probe: ProbeFunction, family: InteractionFamily, scheme: Quadrature,
                step: float) -> np.ndarray:
    active = list(family.active)

    def fn(x: np.ndarray) -> np.ndarray:
        psi = probe(x)
        columns = [x[:, i] * psi for i in active]
        for j in active:
            def shifted(t: float, j: int = j) -> np.ndarray:
                moved = x.copy()
                moved[:, j] += t
                return probe(moved)
            columns.append(central_difference(shifted, 0.0, step))
        columns.extend(x[:, i] * x[:, j] for i in active for j in active)
        return np.column_stack(columns)

    return evaluate_disorder(fn, family, scheme).means()


def _wick_residual(probe: ProbeFunction, means: np.ndarray, dims: int) -> float:
    lhs = means[:dims]
    derivatives = means[dims:2 * dims]
    second_moments = means[2 * dims:].reshape(dims, dims)
    residuals = np.abs(lhs - second_moments @ derivatives)
    logger.debug(f"Wick check {probe.name}: residuals {residuals}")
    return float(residuals.max())


def _require_wick_family(family: InteractionFamily) -> int:
    if family.size > MAX_WICK_COUPLINGS:
        raise InfeasibleError(f"Integration-by-parts check needs K <= {MAX_WICK_COUPLINGS}, got {family.size}")
    return len(family.active)


def wick_check(probe: ProbeFunction, family: InteractionFamily,
               order: int = EXACT_QUADRATURE_ORDER, step: float = WICK_STEP,
               node_cap: int = QUADRATURE_NODE_CAP) -> float:
    """Max over i of |Av(x_i ψ) - Σ_j Av(x_i x_j) Av(∂ψ/∂x_j)| by quadrature of a fixed order.

    Derivatives are central differences with one Richardson step.

    Raises:
        InfeasibleError: more than three couplings, or grid over the node cap
    """
    dims = _require_wick_family(family)
    if not dims:
        return 0.0
    return _wick_residual(probe, _wick_means(probe, family, Quadrature(order, node_cap), step), dims)


def converged_wick_check(probe: ProbeFunction, family: InteractionFamily,
                         order: int = EXACT_QUADRATURE_ORDER, step: float = WICK_STEP,
                         node_cap: int = QUADRATURE_NODE_CAP) -> Tuple[float, Quadrature]:
    """wick_check with the order raised from `order` until the averages settle.

    Returns:
        (residual, scheme): the residual and the quadrature it was computed with
    """
    dims = _require_wick_family(family)
    if not dims:
        return 0.0, Quadrature(order, node_cap)
    means, scheme = refine_quadrature(
        lambda scheme: _wick_means(probe, family, scheme, step), lambda m: m, order, node_cap,
    )
    return _wick_residual(probe, means, dims), scheme
