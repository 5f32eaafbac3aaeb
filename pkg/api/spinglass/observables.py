"""Generalized-overlap observables over R replicas and their product-state expectations Ω[G].

The overlap between replicas a and b is the normalized covariance
q_ab = c_Λ(σ^a, σ^b) = (1/|Λ|) Σ_X Δ²_X σ^a_X σ^b_X. A monomial in the q_ab
expands into a sum over subset tuples whose terms factor replica by replica,
Ω[Π_r σ^r_{m_r}] = Π_r ω(σ_{m_r}), and every ω(σ_m) is one entry of the
table's Walsh-Hadamard spectrum.
"""

import re
from dataclasses import dataclass
from typing import Callable, Dict, Iterator, Optional, Tuple, Union

import numpy as np

from ..utils.evaluation import QUADRATURE_REPLICAS, QuenchedEstimate
from ..utils.logging import setup_logger
from ..utils.validation import ConfigError, EstimationError, InfeasibleError, validate_replica_indices
from .constants import MAX_BATCH_ELEMENTS, MAX_MONOMIAL_DEGREE, MIN_MC_SAMPLES, MONOMIAL_TUPLE_CAP
from .disorder import REPLICA_STREAM, Scheme, coupling_stream, evaluate_disorder
from .gibbs import GibbsTable, enumerate_states, gibbs_draw_states, unbatch
from .model import InteractionFamily, SpinConfiguration

logger = setup_logger(__name__)

Pair = Tuple[int, int]

DEFAULT_REPLICA_DRAWS = 256

_FACTOR = re.compile(r'q\[\s*(\d+)\s*,\s*(\d+)\s*\](?:\s*\^\s*(\d+))?')


@dataclass(frozen=True)
class OverlapMonomial:
    """Product of overlap factors q[a,b] (1-based replicas, a = b allowed)."""
    factors: Tuple[Pair, ...] = ()

    def __post_init__(self):
        normalized = tuple(sorted((min(a, b), max(a, b)) for a, b in self.factors))
        if any(a < 1 for a, _ in normalized):
            raise ConfigError("Replica indices are 1-based")
        object.__setattr__(self, 'factors', normalized)

    @property
    def degree(self) -> int:
        return len(self.factors)

    @property
    def max_replica(self) -> int:
        return max((b for _, b in self.factors), default=0)

    @property
    def off_diagonal(self) -> Tuple[Pair, ...]:
        return tuple(pair for pair in self.factors if pair[0] != pair[1])

    @property
    def diagonal_count(self) -> int:
        return self.degree - len(self.off_diagonal)

    def times(self, *pairs: Pair) -> 'OverlapMonomial':
        return OverlapMonomial(self.factors + tuple(pairs))

    def relabel(self, mapping: Dict[int, int]) -> 'OverlapMonomial':
        """Monomial with replica labels sent through mapping (unmapped labels kept)."""
        return OverlapMonomial(tuple((mapping.get(a, a), mapping.get(b, b)) for a, b in self.factors))

    def bound(self, per_site_bound: float) -> float:
        """|G| ≤ c̄^degree since every |q_ab| ≤ c̄."""
        return per_site_bound ** self.degree

    def __str__(self) -> str:
        if not self.factors:
            return '1'
        parts = []
        for pair in dict.fromkeys(self.factors):
            power = self.factors.count(pair)
            parts.append(f"q[{pair[0]},{pair[1]}]" + (f"^{power}" if power > 1 else ''))
        return '*'.join(parts)


ONE = OverlapMonomial()


def parse_monomial(text: str, replicas: Optional[int] = None) -> OverlapMonomial:
    """Parse `q[1,2]*q[2,3]`, `q[1,2]^2` or `1` into an OverlapMonomial.

    Args:
        text: Product of q[a,b] factors with optional integer powers
        replicas: Declared replica count R; indices above it are rejected

    Raises:
        ConfigError: syntax error or replica index out of range
    """
    source = text.strip()
    if source == '1':
        return ONE
    factors = []
    for token in source.split('*'):
        match = _FACTOR.fullmatch(token.strip())
        if match is None:
            raise ConfigError(f"Cannot parse factor '{token.strip()}' in observable '{text}'")
        a, b, power = int(match.group(1)), int(match.group(2)), int(match.group(3) or 1)
        if power < 1:
            raise ConfigError(f"Powers must be positive integers in '{text}'")
        factors.extend([(a, b)] * power)
    monomial = OverlapMonomial(tuple(factors))
    if replicas is not None:
        result = validate_replica_indices(monomial.factors, replicas)
        if not result.is_valid:
            raise ConfigError(result.error)
    return monomial


@dataclass(frozen=True)
class ObservableFn:
    """Bounded function of the R x R overlap matrix.

    fn maps overlap matrices of shape (..., R, R) to values of shape (...).
    """
    fn: Callable[[np.ndarray], np.ndarray]
    replicas: int
    bound: float
    name: str = 'G'

    def __call__(self, overlaps: np.ndarray) -> np.ndarray:
        values = np.asarray(self.fn(overlaps), dtype=float)
        if np.any(np.abs(values) > self.bound * (1.0 + 1e-12)):
            raise EstimationError(f"Observable {self.name} exceeds its declared bound {self.bound}")
        return values

    @classmethod
    def from_monomial(cls, monomial: OverlapMonomial, bound: float,
                      replicas: Optional[int] = None) -> 'ObservableFn':
        def fn(q: np.ndarray) -> np.ndarray:
            out = np.ones(q.shape[:-2])
            for a, b in monomial.factors:
                out = out * q[..., a - 1, b - 1]
            return out
        return cls(fn, replicas or max(monomial.max_replica, 1), bound, str(monomial))

    @classmethod
    def clamped(cls, monomial: OverlapMonomial, low: float = -1.0, high: float = 1.0,
                replicas: Optional[int] = None) -> 'ObservableFn':
        inner = cls.from_monomial(monomial, max(abs(low), abs(high)), replicas)
        return cls(lambda q: np.clip(inner.fn(q), low, high), inner.replicas,
                   max(abs(low), abs(high)), f"clamp({monomial},{low:g},{high:g})")


Observable = Union[OverlapMonomial, ObservableFn]


def _tuple_blocks(count: int, degree: int, block: int) -> Iterator[np.ndarray]:
    """Index tuples over range(count)^degree in lexicographic order, `block` rows at a time."""
    total = count ** degree
    for start in range(0, total, block):
        flat = np.arange(start, min(start + block, total))
        yield np.stack(np.unravel_index(flat, (count,) * degree), axis=-1)


def omega_monomial_exact(table: GibbsTable, family: InteractionFamily, monomial: OverlapMonomial,
                         attachments: Optional[Dict[int, int]] = None,
                         tuple_cap: int = MONOMIAL_TUPLE_CAP) -> Union[float, np.ndarray]:
    """Ω[σ^{l}_{m_l} ... · G] for a monomial G, exactly, on one table or a batch.

    Args:
        table: Gibbs table (single or batched)
        family: Interaction family the table was built from
        monomial: Overlap monomial G
        attachments: Optional {replica: mask} parities multiplied into G
        tuple_cap: Cap on the number of subset tuples

    Raises:
        InfeasibleError: too many off-diagonal factors or subset tuples
    """
    attachments = attachments or {}
    pairs = monomial.off_diagonal
    degree = len(pairs)
    if degree > MAX_MONOMIAL_DEGREE:
        raise InfeasibleError(f"Exact evaluation supports degree <= {MAX_MONOMIAL_DEGREE}, got {monomial}")
    active = family.active
    if len(active) ** degree > tuple_cap:
        raise InfeasibleError(
            f"{monomial} needs {len(active)}^{degree} subset tuples; cap is {tuple_cap}"
        )
    constant = family.per_site_variance ** monomial.diagonal_count
    replica_ids = sorted({r for pair in pairs for r in pair} | set(attachments))
    column = {replica: position for position, replica in enumerate(replica_ids)}
    base = np.zeros(len(replica_ids), dtype=np.int64)
    for replica, mask in attachments.items():
        base[column[replica]] ^= mask
    spectrum = table.spectrum
    lead = spectrum.shape[:-1]

    if degree == 0:
        value = np.ones(lead)
        for mask in base:
            value = value * spectrum[..., int(mask)]
        return unbatch(constant * value)
    if len(active) == 0:
        return unbatch(np.zeros(lead))

    masks = family.masks[active]
    scaled = family.variance_array[active] / family.volume
    batch = int(np.prod(lead)) if lead else 1
    block = max(1, MAX_BATCH_ELEMENTS // (batch * max(len(replica_ids), 1)))
    partial = []
    for tuples in _tuple_blocks(len(active), degree, block):
        replica_masks = np.tile(base, (len(tuples), 1))
        weights = np.ones(len(tuples))
        for factor, (a, b) in enumerate(pairs):
            chosen = masks[tuples[:, factor]]
            replica_masks[:, column[a]] ^= chosen
            replica_masks[:, column[b]] ^= chosen
            weights = weights * scaled[tuples[:, factor]]
        terms = np.prod(spectrum[..., replica_masks], axis=-1)
        partial.append(np.sum(terms * weights, axis=-1))
    value = np.sum(np.stack(partial), axis=0) if len(partial) > 1 else partial[0]
    return unbatch(constant * value)


def omega_energy_monomial(table: GibbsTable, family: InteractionFamily, couplings: np.ndarray,
                          monomial: OverlapMonomial, replica: int,
                          tuple_cap: int = MONOMIAL_TUPLE_CAP) -> Union[float, np.ndarray]:
    """Ω[h(σ^l) G] with h = H/|Λ| = -(1/|Λ|) Σ_Y J_Y σ_Y, exactly."""
    couplings = np.asarray(couplings, dtype=float)
    total = 0.0
    for index in family.active:
        attached = omega_monomial_exact(
            table, family, monomial, {replica: int(family.masks[index])}, tuple_cap,
        )
        total = total - couplings[..., index] * attached
    return unbatch(np.asarray(total) / family.volume)


def overlap_matrix(family: InteractionFamily, states: np.ndarray) -> np.ndarray:
    """Normalized covariances q_ab for replica state words of shape (..., R)."""
    states = np.asarray(states, dtype=np.int64)
    xor = states[..., :, None] ^ states[..., None, :]
    return family.covariance_profile[xor] / family.volume


def omega_general_mc(table: GibbsTable, family: InteractionFamily, observable: ObservableFn,
                     draws: int, rng: np.random.Generator) -> Tuple[float, float]:
    """Replica Monte Carlo estimate of Ω[G] on one table: R exact draws per evaluation.

    Returns:
        Tuple[float, float]: (mean, stderr)

    Raises:
        EstimationError: fewer than two draws
    """
    if draws < MIN_MC_SAMPLES:
        raise EstimationError(f"Replica Monte Carlo needs at least {MIN_MC_SAMPLES} draws, got {draws}")
    states = gibbs_draw_states(table, rng, (draws, observable.replicas))
    values = observable(overlap_matrix(family, states))
    return float(np.mean(values)), float(np.std(values, ddof=1) / np.sqrt(draws))


def quenched_moment(family: InteractionFamily, beta: float, observable: Observable, scheme: Scheme,
                    workers: int = 1, draws: int = DEFAULT_REPLICA_DRAWS,
                    tuple_cap: int = MONOMIAL_TUPLE_CAP,
                    replica_seed: Optional[int] = None) -> QuenchedEstimate:
    """⟨G⟩ = Av(Ω[G]) for a monomial (exact Ω) or a general bounded observable (replica MC).

    Replica draws of sample (or node) i use their own stream keyed by
    `replica_seed` (the scheme seed by default) and i, so results do not
    depend on the worker count. Under quadrature the replica error of each
    node is propagated through the weights and the estimate is labelled
    QUADRATURE_REPLICAS.
    """
    if isinstance(observable, OverlapMonomial):
        if observable.off_diagonal == ():
            # q_aa is deterministic
            constant = family.per_site_variance ** observable.degree
            return evaluate_disorder(lambda x: np.full(len(x), constant), family, scheme).estimate()

        def exact(couplings: np.ndarray) -> np.ndarray:
            table = enumerate_states(family, couplings, beta)
            return omega_monomial_exact(table, family, observable, tuple_cap=tuple_cap)
        return evaluate_disorder(exact, family, scheme, workers).estimate()

    seed = scheme.seed if replica_seed is None else replica_seed

    def sampled(couplings: np.ndarray, indices: np.ndarray) -> np.ndarray:
        out = np.empty((len(couplings), 2))
        for row, (values, index) in enumerate(zip(couplings, indices)):
            table = enumerate_states(family, values, beta)
            rng = coupling_stream(seed, int(index), REPLICA_STREAM)
            out[row] = omega_general_mc(table, family, observable, draws, rng)
        return out
    logger.debug(f"Replica Monte Carlo for {observable.name} with {draws} draws per sample")
    values = evaluate_disorder(sampled, family, scheme, workers, with_indices=True)
    if values.weights is None:
        # the scatter across coupling samples already contains the replica noise
        return values.estimate(0)
    return QuenchedEstimate(
        mean=float(values.means()[0]),
        stderr=float(np.sqrt(np.sum((values.weights * values.values[:, 1]) ** 2))),
        n_samples=values.n,
        method=QUADRATURE_REPLICAS,
        seed=seed,
        order=scheme.order,
    )


def site_overlap(sigma: SpinConfiguration, tau: SpinConfiguration) -> float:
    """q̂ = (1/N) Σ_i σ_i τ_i."""
    if sigma.volume != tau.volume:
        raise ConfigError(f"Configurations of volume {sigma.volume} and {tau.volume} differ")
    differing = (sigma.bits ^ tau.bits).bit_count()
    return 1.0 - 2.0 * differing / sigma.volume


def sk_overlap_relation(q_hat: float, n: int) -> float:
    """Normalized SK covariance from the site overlap: c = (q̂² - 1/N)/2 (variance convention)."""
    return (q_hat * q_hat - 1.0 / n) / 2.0

