"""Exact-enumeration thermodynamics for one or a batch of disorder samples."""

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import logsumexp

from ..utils.logging import setup_logger
from ..utils.numerics import parity_signs, walsh_hadamard
from ..utils.validation import EstimationError, validate_subset, validate_volume
from .constants import MAX_VOLUME
from .model import InteractionFamily, SpinConfiguration, subset_mask

logger = setup_logger(__name__)

# DisorderSample instances are accepted too (anything with a `couplings` attribute)
CouplingInput = Union[np.ndarray, Sequence[float]]


def _readonly(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def unbatch(values: np.ndarray) -> Union[float, np.ndarray]:
    values = np.asarray(values)
    return float(values) if values.ndim == 0 else values


def state_signs(family: InteractionFamily, index: int) -> np.ndarray:
    """σ_X(s) over all 2^N states for the family's index-th subset."""
    states = np.arange(family.n_states, dtype=np.int64)
    signs = parity_signs(states, family.masks[index])
    return signs if family.subset_sizes[index] % 2 == 0 else -signs


def coupling_matrix(family: InteractionFamily, couplings: CouplingInput) -> np.ndarray:
    """Couplings as a float array of shape (..., K)."""
    values = getattr(couplings, 'couplings', couplings)
    values = np.asarray(values, dtype=float)
    if values.shape[-1:] != (family.size,):
        raise ValueError(f"Expected {family.size} couplings per sample, got shape {values.shape}")
    return values


def energies(family: InteractionFamily, couplings: np.ndarray) -> np.ndarray:
    """H(σ) = -Σ_X J_X σ_X for every state, shape (..., 2^N).

    Sparse families (K <= N) accumulate subset by subset in canonical order;
    dense families go through one Walsh-Hadamard transform.
    """
    couplings = coupling_matrix(family, couplings)
    lead = couplings.shape[:-1]
    if family.size <= family.volume:
        out = np.zeros(lead + (family.n_states,))
        for index in range(family.size):
            out -= couplings[..., index, None] * state_signs(family, index)
        return out
    odd = (family.subset_sizes % 2).astype(bool)
    spectrum = np.zeros(lead + (family.n_states,))
    spectrum[..., family.masks] = np.where(odd, -couplings, couplings)
    return -walsh_hadamard(spectrum)


@dataclass(frozen=True, eq=False)
class GibbsTable:
    """Per-state energies and Boltzmann log-weights of one sample, or a leading batch of samples."""
    beta: float
    volume: int
    energies: np.ndarray
    log_weights: np.ndarray
    log_z: np.ndarray

    @property
    def batched(self) -> bool:
        return self.energies.ndim > 1

    @property
    def n_states(self) -> int:
        return self.energies.shape[-1]

    @cached_property
    def probabilities(self) -> np.ndarray:
        return _readonly(np.exp(self.log_weights - np.expand_dims(self.log_z, -1)))

    @cached_property
    def spectrum(self) -> np.ndarray:
        """ω(σ_m) for every mask m at once, shape (..., 2^N)."""
        transform = walsh_hadamard(self.probabilities)
        sizes = np.bitwise_count(np.arange(self.n_states, dtype=np.int64)) % 2
        transform[..., sizes == 1] *= -1.0
        transform[..., 0] = 1.0
        return _readonly(transform)

    @cached_property
    def cdf(self) -> np.ndarray:
        if self.batched:
            raise ValueError("Exact sampling needs a single-sample table")
        return _readonly(np.cumsum(self.probabilities))


def enumerate_states(family: InteractionFamily, couplings: CouplingInput, beta: float,
                     max_volume: int = MAX_VOLUME) -> GibbsTable:
    """Enumerate all 2^N states for the given couplings at inverse temperature beta.

    Args:
        family: Interaction family
        couplings: DisorderSample, (K,) or (B, K) coupling array
        beta: Inverse temperature (>= 0)
        max_volume: Enumeration cap

    Returns:
        GibbsTable: Energies, log-weights and log Z (batched if couplings were)

    Raises:
        InfeasibleError: volume over the cap
    """
    validate_volume(family.volume, max_volume)
    if beta < 0:
        raise EstimationError(f"β must be non-negative, got {beta}")
    state_energies = energies(family, couplings)
    log_weights = -beta * state_energies
    log_z = logsumexp(log_weights, axis=-1)
    return GibbsTable(
        beta=float(beta),
        volume=family.volume,
        energies=_readonly(state_energies),
        log_weights=_readonly(log_weights),
        log_z=np.asarray(log_z),
    )


def free_energy(table: GibbsTable) -> Tuple[np.ndarray, np.ndarray]:
    """Random pressure A = ln Z and free energy F = -A/β.

    Raises:
        EstimationError: β = 0, where F is undefined
    """
    if table.beta == 0:
        raise EstimationError("Free energy F is undefined at β = 0")
    pressure = unbatch(table.log_z)
    return pressure, -pressure / table.beta


def internal_energy(table: GibbsTable) -> np.ndarray:
    """Gibbs mean energy 𝒰 = Σ_σ H(σ) p(σ)."""
    return unbatch(np.sum(table.probabilities * table.energies, axis=-1))


def target_mask(targets: Iterable[Iterable[int]]) -> int:
    """Mask of the parity product σ_X1 ... σ_Xm (the symmetric difference of the X_i)."""
    mask = 0
    for sites in targets:
        mask ^= subset_mask(sites)
    return mask


def omega_mask(table: GibbsTable, mask: int) -> np.ndarray:
    """ω(σ_m) for one mask in a single pass over the states."""
    if mask == 0:
        return unbatch(np.ones(table.log_z.shape))
    states = np.arange(table.n_states, dtype=np.int64)
    signs = parity_signs(states, mask)
    if int(mask).bit_count() % 2:
        signs = -signs
    return unbatch(np.sum(table.probabilities * signs, axis=-1))


def omega(table: GibbsTable, family: InteractionFamily,
          targets: Iterable[Iterable[int]]) -> np.ndarray:
    """Gibbs expectation of the parity product σ_X1 ... σ_Xm.

    Raises:
        ConfigError: a target subset leaves the volume
    """
    subsets = [validate_subset(sites, family.volume) for sites in targets]
    return omega_mask(table, target_mask(subsets))


def gibbs_draw_states(table: GibbsTable, rng: np.random.Generator,
                      size: Optional[int] = None) -> np.ndarray:
    """Exact draws from the enumerated distribution by inverse CDF, as state words."""
    cdf = table.cdf
    uniforms = rng.random(size) * cdf[-1]
    states = np.searchsorted(cdf, uniforms, side='right')
    return np.minimum(states, table.n_states - 1)


def gibbs_draw(table: GibbsTable, rng: np.random.Generator) -> SpinConfiguration:
    """One exact sample from the Gibbs distribution of a single-sample table."""
    return SpinConfiguration(bits=int(gibbs_draw_states(table, rng)), volume=table.volume)
