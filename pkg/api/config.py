"""TOML run configurations: parsing, validation and the resolved RunConfig."""

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, Optional, Tuple

from django.conf import settings

from .serializers import SIZE_PARAMETER, FamilySpecSerializer, RunConfigSerializer
from .spinglass.constants import MONOMIAL_TUPLE_CAP, QUADRATURE_NODE_CAP
from .spinglass.disorder import MonteCarlo, Quadrature, Scheme
from .spinglass.model import InteractionFamily, build_family
from .spinglass.observables import OverlapMonomial
from .utils.logging import setup_logger
from .utils.validation import ConfigError

logger = setup_logger(__name__)


def _flatten_errors(errors, prefix: str = '') -> str:
    if isinstance(errors, dict):
        return '; '.join(_flatten_errors(value, f"{prefix}{key}.") for key, value in errors.items())
    if isinstance(errors, list):
        return '; '.join(_flatten_errors(value, prefix) for value in errors)
    return f"{prefix.rstrip('.')}: {errors}" if prefix else str(errors)


def workbench_setting(name: str, default=None):
    return getattr(settings, 'WORKBENCH', {}).get(name, default)


def node_cap() -> int:
    """Largest quadrature grid (nodes) a request may build."""
    return workbench_setting('QUADRATURE_NODE_CAP', QUADRATURE_NODE_CAP)


def tuple_cap() -> int:
    """Largest index-tuple count an expanded overlap monomial may reach."""
    return workbench_setting('MONOMIAL_TUPLE_CAP', MONOMIAL_TUPLE_CAP)


def family_from_spec(spec: Dict) -> InteractionFamily:
    """Build a family from validated FamilySpecSerializer data, honouring the configured caps."""
    params = FamilySpecSerializer.builder_parameters(spec)
    if spec['preset'] == 'rem':
        params['max_volume'] = workbench_setting('REM_MAX_VOLUME', 20)
    else:
        params['max_volume'] = workbench_setting('MAX_VOLUME', 24)
    return build_family(spec['preset'], **params)


def scheme_from_spec(spec: Dict) -> Scheme:
    if spec['kind'] == 'mc':
        return MonteCarlo(samples=spec['samples'], seed=spec['seed'])
    return Quadrature(order=spec['order'], node_cap=node_cap())


@dataclass(frozen=True)
class RunConfig:
    """A validated run configuration with the family and scheme already resolved."""
    family_spec: Dict
    family: InteractionFamily
    beta_range: Tuple[float, float]
    points: int
    measure: str
    replicas: int
    observables: Tuple[OverlapMonomial, ...]
    scheme: Scheme
    checks: Tuple[str, ...]
    delta_betas: Tuple[float, ...]
    variance_betas: Tuple[float, ...]
    variance_samples: int
    variance_seed: int
    exact_order: int
    output_dir: Path
    workers: int
    source: Optional[Path] = None

    def with_size(self, size: int) -> 'RunConfig':
        """Same run on the preset's size parameter set to `size` (N, or the side L on lattices)."""
        spec = dict(self.family_spec)
        spec[SIZE_PARAMETER[spec['preset']]] = size
        return replace(self, family_spec=spec, family=family_from_spec(spec))

    def as_dict(self) -> Dict:
        return {
            'family': {key: value for key, value in self.family_spec.items() if key != 'terms'},
            'family_descriptor': self.family.describe(),
            'beta_range': list(self.beta_range),
            'points': self.points,
            'measure': self.measure,
            'replicas': self.replicas,
            'observables': [str(m) for m in self.observables],
            'scheme': self.scheme.describe(),
            'checks': list(self.checks),
            'workers': self.workers,
        }


def parse_config(data: Dict, source: Optional[Path] = None,
                 output_dir: Optional[Path] = None, workers: Optional[int] = None) -> RunConfig:
    """Validate a parsed config mapping.

    Raises:
        ConfigError: the mapping fails validation or the family cannot be built
    """
    serializer = RunConfigSerializer(data=data)
    if not serializer.is_valid():
        message = _flatten_errors(serializer.errors)
        logger.error(f"Invalid configuration{f' {source}' if source else ''}: {message}")
        raise ConfigError(message)
    valid = serializer.validated_data
    family_spec = dict(valid['family'])
    scheme = scheme_from_spec(valid['scheme'])
    output = valid.get('output') or {}
    return RunConfig(
        family_spec=family_spec,
        family=family_from_spec(family_spec),
        beta_range=(valid['grid']['beta_min'], valid['grid']['beta_max']),
        points=valid['grid']['points'],
        measure=valid['grid']['measure'],
        replicas=valid['observables']['replicas'],
        observables=tuple(valid['observables']['monomials']),
        scheme=scheme,
        checks=tuple(dict.fromkeys(valid['checks']['run'])),
        delta_betas=tuple(valid['checks']['delta_betas']),
        variance_betas=tuple(valid['checks']['variance_betas']),
        variance_samples=valid['checks']['variance_samples'],
        variance_seed=valid['checks'].get('variance_seed', scheme.seed),
        exact_order=valid['checks']['exact_order'],
        output_dir=Path(output_dir or output.get('dir') or workbench_setting('OUTPUT_DIR', 'results')),
        workers=workers or output.get('workers') or workbench_setting('WORKERS', 1),
        source=source,
    )


def load_config(path, output_dir: Optional[Path] = None, workers: Optional[int] = None) -> RunConfig:
    """Read and validate a TOML run configuration.

    Args:
        path: Config file path
        output_dir: Overrides [output].dir
        workers: Overrides [output].workers

    Returns:
        RunConfig: Validated configuration

    Raises:
        ConfigError: unreadable file, TOML syntax error or invalid content
    """
    path = Path(path)
    try:
        with path.open('rb') as handle:
            data = tomllib.load(handle)
    except FileNotFoundError as exc:
        raise ConfigError(f"Config file {path} not found") from exc
    except tomllib.TOMLDecodeError as exc:
        logger.error(f"Cannot parse {path}: {exc}")
        raise ConfigError(f"Cannot parse {path}: {exc}") from exc
    logger.info(f"Loaded configuration {path}")
    return parse_config(data, source=path, output_dir=output_dir, workers=workers)
