"""Exceptions and input validation shared by the CLI, the REST views and the domain code."""

from dataclasses import dataclass
from typing import Dict, Iterable, Optional

from rest_framework import status
from rest_framework.exceptions import APIException


class WorkbenchError(APIException):
    """Base exception for workbench errors."""
    status_code = status.HTTP_400_BAD_REQUEST
    default_detail = 'Workbench error occurred.'
    default_code = 'workbench_error'
    exit_code = 1


class ConfigError(WorkbenchError):
    """Malformed configuration, observable or family specification."""
    default_detail = 'Invalid configuration.'
    default_code = 'config_error'
    exit_code = 2


class InfeasibleError(WorkbenchError):
    """A computation exceeds an enumeration, quadrature or work cap."""
    status_code = status.HTTP_422_UNPROCESSABLE_ENTITY
    default_detail = 'Requested computation is infeasible.'
    default_code = 'infeasible'
    exit_code = 3


class EstimationError(WorkbenchError):
    """An estimator precondition does not hold."""
    default_detail = 'Estimator precondition violated.'
    default_code = 'estimation_error'
    exit_code = 2


class CheckFailure(WorkbenchError):
    """At least one hard check failed."""
    default_detail = 'A hard check failed.'
    default_code = 'check_failure'
    exit_code = 1


@dataclass
class ValidationResult:
    """Result of a validation operation."""
    is_valid: bool
    error: Optional[str] = None
    data: Optional[Dict] = None


def validate_volume(volume: int, cap: int) -> None:
    """Reject volumes that cannot be enumerated.

    Args:
        volume: Number of sites |Λ|
        cap: Enumeration cap

    Raises:
        ConfigError: volume is not positive
        InfeasibleError: volume exceeds the cap
    """
    if volume < 1:
        raise ConfigError(f"Volume must be positive, got {volume}")
    if volume > cap:
        raise InfeasibleError(f"Volume {volume} exceeds the enumeration cap {cap}")


def validate_subset(sites: Iterable[int], volume: int) -> tuple:
    """Validate one interaction subset and return it as a sorted tuple.

    Args:
        sites: Site indices of the subset
        volume: Number of sites |Λ|

    Returns:
        tuple: Sorted site indices

    Raises:
        ConfigError: empty subset, repeated site or site outside the volume
    """
    subset = tuple(sorted(int(site) for site in sites))
    if not subset:
        raise ConfigError("Interaction subsets must be nonempty")
    if len(set(subset)) != len(subset):
        raise ConfigError(f"Subset {subset} repeats a site")
    if subset[0] < 0 or subset[-1] >= volume:
        raise ConfigError(f"Subset {subset} is not contained in {{0,...,{volume - 1}}}")
    return subset


def validate_replica_indices(pairs: Iterable[tuple], replicas: int) -> ValidationResult:
    """Check that every replica index used by an observable is within 1..R.

    Args:
        pairs: Replica index pairs (a, b)
        replicas: Declared replica count R

    Returns:
        ValidationResult: Invalid result names the offending index
    """
    for a, b in pairs:
        for index in (a, b):
            if index < 1:
                return ValidationResult(False, f"Replica index {index} must be at least 1")
            if index > replicas:
                return ValidationResult(
                    False, f"Replica index {index} in q[{a},{b}] exceeds replica count R={replicas}"
                )
    return ValidationResult(True)
