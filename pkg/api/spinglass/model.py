"""Interaction families of Gaussian subset-interaction Hamiltonians.

H(σ) = -Σ_X J_X σ_X with independent J_X ~ N(0, Δ²_X). A family fixes which
subsets X interact and with what variance; everything downstream (disorder
sampling, enumeration, overlaps) reads the family's canonical subset order.

Spin convention: bit i of a configuration word is 1 iff σ_i = +1, so
σ_X(s) = (-1)**(|X| + popcount(s & mask(X))).
"""

import math
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations, product
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from ..utils.logging import setup_logger
from ..utils.numerics import parity_signs, tree_sum, walsh_hadamard
from ..utils.validation import ConfigError, InfeasibleError, validate_subset, validate_volume
from .constants import MAX_VOLUME, REM_MAX_VOLUME, SK_VARIANCE_CONVENTIONS, STABILITY_TOLERANCE

logger = setup_logger(__name__)

Subset = Tuple[int, ...]


def subset_mask(sites: Iterable[int]) -> int:
    """Bit mask of a set of sites."""
    mask = 0
    for site in sites:
        mask |= 1 << int(site)
    return mask


def mask_parity(bits: int, mask: int) -> int:
    """σ_X for the configuration word `bits` and the subset mask of X."""
    return -1 if (mask.bit_count() + (bits & mask).bit_count()) & 1 else 1


@dataclass(frozen=True)
class SpinConfiguration:
    """One Ising configuration of |Λ| sites stored as a bit word."""
    bits: int
    volume: int

    def __post_init__(self):
        if self.volume < 1:
            raise ConfigError(f"Volume must be positive, got {self.volume}")
        if not 0 <= self.bits < (1 << self.volume):
            raise ConfigError(f"Bit word {self.bits} does not fit {self.volume} sites")

    @classmethod
    def from_spins(cls, spins: Sequence[int]) -> 'SpinConfiguration':
        bits = 0
        for site, spin in enumerate(spins):
            if spin not in (1, -1):
                raise ConfigError(f"Spins must be +1 or -1, got {spin} at site {site}")
            if spin == 1:
                bits |= 1 << site
        return cls(bits=bits, volume=len(spins))

    @property
    def spins(self) -> Tuple[int, ...]:
        return tuple(1 if (self.bits >> site) & 1 else -1 for site in range(self.volume))

    def parity(self, sites: Iterable[int]) -> int:
        return mask_parity(self.bits, subset_mask(sites))


@dataclass(frozen=True)
class Geometry:
    """Lattice metadata: side lengths per axis and boundary condition.

    Mean-field presets use kind 'complete' on a ring of N sites so that
    cyclic relabelling still acts as a translation.
    """
    kind: str
    dims: Tuple[int, ...]
    periodic: bool = True

    @property
    def volume(self) -> int:
        return math.prod(self.dims)

    @property
    def tag(self) -> str:
        if self.kind != 'lattice':
            return self.kind
        shape = 'x'.join(str(side) for side in self.dims)
        return f"{'torus' if self.periodic else 'box'}[{shape}]"

    def coordinates(self, site: int) -> Tuple[int, ...]:
        coords = []
        for side in self.dims:
            coords.append(site % side)
            site //= side
        return tuple(coords)

    def site(self, coords: Sequence[int]) -> int:
        index, stride = 0, 1
        for coord, side in zip(coords, self.dims):
            index += (coord % side) * stride
            stride *= side
        return index

    def shift_site(self, site: int, shift: Sequence[int]) -> int:
        coords = self.coordinates(site)
        return self.site([c + s for c, s in zip(coords, shift)])

    def translate(self, bits: int, shift: Sequence[int]) -> int:
        """Move the spin at every site n to n + shift (periodic wrap)."""
        moved = 0
        for site in range(self.volume):
            if (bits >> site) & 1:
                moved |= 1 << self.shift_site(site, shift)
        return moved

    def translations(self) -> Iterator[Tuple[int, ...]]:
        return product(*(range(side) for side in self.dims))


@dataclass(frozen=True)
class InteractionFamily:
    """Interacting subsets X (canonical lexicographic order) with variances Δ²_X."""
    subsets: Tuple[Subset, ...]
    variances: Tuple[float, ...]
    volume: int
    geometry: Geometry
    preset: str
    parameters: Tuple[Tuple[str, object], ...] = ()
    claimed_bound: Optional[float] = None

    @property
    def size(self) -> int:
        """Subset count K."""
        return len(self.subsets)

    @property
    def terms(self) -> List[Tuple[Subset, float]]:
        return list(zip(self.subsets, self.variances))

    @property
    def n_states(self) -> int:
        return 1 << self.volume

    @cached_property
    def masks(self) -> np.ndarray:
        return np.array([subset_mask(subset) for subset in self.subsets], dtype=np.int64)

    @cached_property
    def variance_array(self) -> np.ndarray:
        return np.array(self.variances, dtype=float)

    @cached_property
    def subset_sizes(self) -> np.ndarray:
        return np.array([len(subset) for subset in self.subsets], dtype=np.int64)

    @cached_property
    def active(self) -> np.ndarray:
        """Indices of couplings with Δ²_X > 0."""
        return np.flatnonzero(self.variance_array > 0.0)

    @cached_property
    def total_variance(self) -> float:
        """Σ_X Δ²_X, the σ-independent diagonal of the covariance."""
        return math.fsum(self.variances)

    @property
    def per_site_variance(self) -> float:
        return self.total_variance / self.volume

    @cached_property
    def covariance_profile(self) -> np.ndarray:
        """Raw covariance C(σ, τ) as a function of the word σ XOR τ."""
        weights = np.zeros(self.n_states)
        np.add.at(weights, self.masks, self.variance_array)
        return walsh_hadamard(weights)

    @property
    def parameter_dict(self) -> Dict[str, object]:
        return dict(self.parameters)

    def describe(self) -> str:
        args = ','.join(f"{key}={value}" for key, value in self.parameters)
        return f"{self.preset}({args})"

    def scaled(self, factor: float) -> 'InteractionFamily':
        """Same subsets with every variance multiplied by factor (factor 0 gives a disorder-free family)."""
        if factor < 0:
            raise ConfigError(f"Variance scale must be non-negative, got {factor}")
        return InteractionFamily(
            subsets=self.subsets,
            variances=tuple(factor * v for v in self.variances),
            volume=self.volume,
            geometry=self.geometry,
            preset=self.preset,
            parameters=self.parameters + (('scale', factor),),
            claimed_bound=None if self.claimed_bound is None else factor * self.claimed_bound,
        )

    def site_share(self, site: int = 0) -> float:
        """Σ_{X ∋ site} Δ²_X / |X|."""
        return math.fsum(v / len(x) for x, v in self.terms if site in x)

    def translation_class_sum(self) -> float:
        """Σ over translation classes X̃ of Δ²_X̃ (one representative per class).

        Equals the per-site variance when every class has |Λ| members, i.e. on
        periodic lattices with side > 2 and no subset fixed by a translation.
        """
        classes: Dict[Subset, float] = {}
        for subset, variance in self.terms:
            images = (
                tuple(sorted(self.geometry.shift_site(s, shift) for s in subset))
                for shift in self.geometry.translations()
            )
            classes.setdefault(min(images), variance)
        return math.fsum(classes.values())


@dataclass(frozen=True)
class StabilityReport:
    """Per-site variance against the preset's stability constant c̄."""
    per_site_variance: float
    claimed_bound: float
    satisfied: bool
    site_share: Optional[float] = None
    class_sum: Optional[float] = None

    @property
    def effective_bound(self) -> float:
        """A constant that is guaranteed to bound the per-site variance."""
        return max(self.claimed_bound, self.per_site_variance)


def _lattice_geometry(dimension: int, side: int, periodic: bool) -> Geometry:
    if dimension < 1:
        raise ConfigError(f"Lattice dimension must be at least 1, got {dimension}")
    if side < 2:
        raise ConfigError(f"Side length must be at least 2, got {side}")
    return Geometry(kind='lattice', dims=(side,) * dimension, periodic=periodic)


def _family(terms: Dict[Subset, float], volume: int, geometry: Geometry, preset: str,
            parameters: Dict[str, object], claimed_bound: Optional[float]) -> InteractionFamily:
    ordered = sorted(terms.items())
    family = InteractionFamily(
        subsets=tuple(subset for subset, _ in ordered),
        variances=tuple(float(variance) for _, variance in ordered),
        volume=volume,
        geometry=geometry,
        preset=preset,
        parameters=tuple(parameters.items()),
        claimed_bound=claimed_bound,
    )
    logger.debug(f"Built {family.describe()}: K={family.size}, |Λ|={volume}")
    return family


def edwards_anderson(dimension: int, side: int, periodic: bool = True,
                     max_volume: int = MAX_VOLUME) -> InteractionFamily:
    """Nearest-neighbour bonds with Δ²_X = 1 (bonds joining the same pair twice are merged)."""
    geometry = _lattice_geometry(dimension, side, periodic)
    validate_volume(geometry.volume, max_volume)
    terms: Dict[Subset, float] = {}
    for site in range(geometry.volume):
        coords = geometry.coordinates(site)
        for axis in range(dimension):
            if coords[axis] + 1 == side and not periodic:
                continue
            neighbour = list(coords)
            neighbour[axis] += 1
            bond = tuple(sorted((site, geometry.site(neighbour))))
            terms[bond] = terms.get(bond, 0.0) + 1.0
    params = {'d': dimension, 'L': side, 'periodic': periodic}
    return _family(terms, geometry.volume, geometry, 'EA', params, float(dimension))


def long_range(alpha: float, dimension: int, side: int, periodic: bool = True,
               max_volume: int = MAX_VOLUME) -> InteractionFamily:
    """All pairs with Δ²_X = |n - n'|^(-2dα), minimum-image distance when periodic."""
    if alpha <= 0.5:
        raise ConfigError(f"Long-range exponent needs α > 1/2, got {alpha}")
    geometry = _lattice_geometry(dimension, side, periodic)
    validate_volume(geometry.volume, max_volume)
    terms: Dict[Subset, float] = {}
    for first, second in combinations(range(geometry.volume), 2):
        offsets = [abs(a - b) for a, b in zip(geometry.coordinates(first), geometry.coordinates(second))]
        if periodic:
            offsets = [min(offset, side - offset) for offset in offsets]
        distance = math.sqrt(sum(offset * offset for offset in offsets))
        terms[(first, second)] = distance ** (-2.0 * dimension * alpha)
    params = {'alpha': alpha, 'd': dimension, 'L': side, 'periodic': periodic}
    return _family(terms, geometry.volume, geometry, 'long_range', params,
                   (2.0 * alpha - 1.0) ** (-dimension))


def sherrington_kirkpatrick(n: int, convention: str = 'variance',
                            max_volume: int = MAX_VOLUME) -> InteractionFamily:
    """All pairs i<j; Δ²_ij = 1/N ('variance') or 1/N² ('deviation', reading Δ_ij = 1/N)."""
    if n < 2:
        raise ConfigError(f"SK needs N >= 2, got {n}")
    if convention not in SK_VARIANCE_CONVENTIONS:
        raise ConfigError(f"Unknown SK variance convention '{convention}'")
    validate_volume(n, max_volume)
    variance = 1.0 / n if convention == 'variance' else 1.0 / n**2
    terms = {pair: variance for pair in combinations(range(n), 2)}
    params = {'n': n} if convention == 'variance' else {'n': n, 'convention': convention}
    return _family(terms, n, Geometry('complete', (n,)), 'SK', params, 1.0)


def p_spin(n: int, p: int, max_volume: int = MAX_VOLUME) -> InteractionFamily:
    """All size-p subsets with Δ²_X = N^(-p)."""
    if n < 2:
        raise ConfigError(f"p-spin needs N >= 2, got {n}")
    if not 1 <= p <= n:
        raise ConfigError(f"p-spin needs 1 <= p <= N, got p={p}, N={n}")
    validate_volume(n, max_volume)
    variance = float(n) ** (-p)
    terms = {subset: variance for subset in combinations(range(n), p)}
    return _family(terms, n, Geometry('complete', (n,)), 'p_spin', {'n': n, 'p': p}, 1.0)


def random_energy_model(n: int, max_volume: int = REM_MAX_VOLUME) -> InteractionFamily:
    """Every nonempty subset with Δ²_X = N 2^(-N); energies of distinct states are independent."""
    if n < 1:
        raise ConfigError(f"REM needs N >= 1, got {n}")
    if n > max_volume:
        raise InfeasibleError(f"REM({n}) has 2^{n}-1 subsets; cap is N <= {max_volume}")
    variance = n * 2.0 ** (-n)
    terms = {
        tuple(site for site in range(n) if (mask >> site) & 1): variance
        for mask in range(1, 1 << n)
    }
    return _family(terms, n, Geometry('complete', (n,)), 'REM', {'n': n}, 1.0)


def custom_family(terms: Sequence[Tuple[Iterable[int], float]], volume: int,
                  claimed_bound: Optional[float] = None,
                  max_volume: int = MAX_VOLUME) -> InteractionFamily:
    """Explicit (subset, variance) list; c̄ defaults to the family's own per-site variance."""
    validate_volume(volume, max_volume)
    collected: Dict[Subset, float] = {}
    for sites, variance in terms:
        subset = validate_subset(sites, volume)
        if subset in collected:
            raise ConfigError(f"Duplicate subset {subset}")
        variance = float(variance)
        if not math.isfinite(variance) or variance < 0:
            raise ConfigError(f"Variance of {subset} must be finite and >= 0, got {variance}")
        collected[subset] = variance
    if not any(v > 0 for v in collected.values()):
        raise ConfigError("At least one subset needs a positive variance")
    if claimed_bound is None:
        claimed_bound = math.fsum(collected.values()) / volume
    return _family(collected, volume, Geometry('custom', (volume,), periodic=False), 'custom',
                   {'volume': volume, 'K': len(collected)}, float(claimed_bound))


PRESETS = {
    'ea': edwards_anderson,
    'long_range': long_range,
    'sk': sherrington_kirkpatrick,
    'p_spin': p_spin,
    'rem': random_energy_model,
    'custom': custom_family,
}


def build_family(preset: str, **parameters) -> InteractionFamily:
    """Build an interaction family from a preset name and its parameters.

    Args:
        preset: One of EA, long_range, SK, p_spin, REM, custom (case-insensitive)
        **parameters: Preset parameters (dimension/side/periodic, alpha, n, p,
            convention, terms/volume/claimed_bound, max_volume)

    Returns:
        InteractionFamily: Family in canonical subset order

    Raises:
        ConfigError: unknown preset or invalid parameters
        InfeasibleError: volume over the enumeration cap
    """
    builder = PRESETS.get(preset.lower().replace('-', '_'))
    if builder is None:
        raise ConfigError(f"Unknown preset '{preset}'; expected one of {sorted(PRESETS)}")
    try:
        return builder(**parameters)
    except TypeError as exc:
        raise ConfigError(f"Invalid parameters for preset '{preset}': {exc}") from exc


def covariance(family: InteractionFamily, sigma: SpinConfiguration,
               tau: SpinConfiguration) -> Tuple[float, float]:
    """Covariance of the Hamiltonian at two configurations.

    Returns:
        Tuple[float, float]: (raw Σ_X Δ²_X σ_X τ_X, normalized raw/|Λ|)

    Raises:
        ConfigError: a configuration does not live on the family's volume
    """
    if sigma.volume != family.volume or tau.volume != family.volume:
        raise ConfigError(
            f"Configurations of volume {sigma.volume}/{tau.volume} do not match |Λ|={family.volume}"
        )
    # σ_X τ_X depends on σ XOR τ only
    signs = parity_signs(sigma.bits ^ tau.bits, family.masks)
    raw = float(tree_sum(family.variance_array * signs))
    return raw, raw / family.volume


def stability_report(family: InteractionFamily,
                     tolerance: float = STABILITY_TOLERANCE) -> StabilityReport:
    """Per-site variance (1/|Λ|)Σ_X Δ²_X checked against the preset's constant c̄."""
    per_site = family.per_site_variance
    bound = family.claimed_bound if family.claimed_bound is not None else per_site
    site_share = class_sum = None
    if family.geometry.periodic:
        site_share = family.site_share(0)
        if family.geometry.kind == 'lattice':
            class_sum = family.translation_class_sum()
    report = StabilityReport(
        per_site_variance=per_site,
        claimed_bound=bound,
        satisfied=per_site <= bound + tolerance,
        site_share=site_share,
        class_sum=class_sum,
    )
    if not report.satisfied:
        logger.warning(
            f"{family.describe()}: per-site variance {per_site:.6g} exceeds claimed c̄={bound:.6g}"
        )
    return report
