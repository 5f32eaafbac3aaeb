"""Result types shared by the estimators, the experiment runner and the REST views."""

from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, Optional

MONTE_CARLO = 'monte-carlo'
QUADRATURE = 'quadrature'
# quadrature over couplings, replica Monte Carlo at each node
QUADRATURE_REPLICAS = 'quadrature-replica-mc'

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class QuenchedEstimate:
    """A disorder-averaged value with its standard error and provenance."""
    mean: float
    stderr: float
    n_samples: int
    method: str
    seed: int = 0
    order: Optional[int] = None

    def __post_init__(self):
        if self.stderr < 0:
            raise ValueError(f"stderr must be non-negative, got {self.stderr}")
        if self.method == QUADRATURE and self.stderr != 0.0:
            raise ValueError("Quadrature estimates carry stderr = 0")

    def scaled(self, factor: float) -> 'QuenchedEstimate':
        """Estimate of factor * value."""
        return QuenchedEstimate(
            mean=factor * self.mean,
            stderr=abs(factor) * self.stderr,
            n_samples=self.n_samples,
            method=self.method,
            seed=self.seed,
            order=self.order,
        )

    def with_value(self, mean: float, stderr: float) -> 'QuenchedEstimate':
        """Same provenance, new value."""
        if self.method == QUADRATURE:
            stderr = 0.0
        return QuenchedEstimate(mean, stderr, self.n_samples, self.method, self.seed, self.order)

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass
class ResultRecord:
    """One row of results.csv; every row can be re-run from its own fields."""
    check: str
    quantity: str
    family: str
    scheme: str
    value: float
    stderr: float = 0.0
    beta: Optional[float] = None
    beta_max: Optional[float] = None
    observable: str = ''
    replicas: Optional[int] = None
    bound: Optional[float] = None
    passed: Optional[bool] = None
    hard: bool = True
    seed: int = 0
    wall_time: float = 0.0
    code_version: str = ''
    schema_version: int = SCHEMA_VERSION
    extra: Dict = field(default_factory=dict)

    @classmethod
    def columns(cls) -> List[str]:
        return [f.name for f in fields(cls) if f.name != 'extra']

    def as_row(self) -> Dict[str, str]:
        """CSV row with a fixed, locale-free number format."""
        row = {}
        for name in self.columns():
            value = getattr(self, name)
            if value is None:
                row[name] = ''
            elif name == 'passed':
                row[name] = 'pass' if value else 'fail'
            elif isinstance(value, bool):
                row[name] = 'hard' if value else 'soft'
            elif isinstance(value, float):
                row[name] = repr(float(value))
            else:
                row[name] = str(value)
        return row
