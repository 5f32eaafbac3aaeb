"""Constants used in model construction, disorder averaging and identity checks."""

# Enumeration limits
MAX_VOLUME = 24
REM_MAX_VOLUME = 20

# Quadrature
DEFAULT_QUADRATURE_ORDER = 20
EXACT_QUADRATURE_ORDER = 40
MAX_EXACT_ORDER = 320
QUADRATURE_GROWTH = 1.5
# successive orders of an exact check must agree this closely
QUADRATURE_CONVERGENCE = 1e-10
QUADRATURE_NODE_CAP = 10**7
WEIGHT_SUM_TOLERANCE = 1e-14

# Overlap monomials
MAX_MONOMIAL_DEGREE = 3
MONOMIAL_TUPLE_CAP = 10**6

# Finite differences
WICK_STEP = 1e-5
BETA_STEP = 1e-4

# Estimators
MIN_MC_SAMPLES = 2
MIN_VARIANCE_SAMPLES = 100
BOOTSTRAP_RESAMPLES = 200
CONFIDENCE_LEVEL = 0.95

# Batching: chunk boundaries never depend on the worker count
CHUNK_SIZE = 1024
MAX_BATCH_ELEMENTS = 2**22

# Residual curves
DEFAULT_GRID_POINTS = 21
MIN_GRID_POINTS = 3

# Tolerances
STABILITY_TOLERANCE = 1e-12
DUAL_TOLERANCE = 1e-6
CANCELLATION_TOLERANCE = 1e-12
WICK_TOLERANCE = 1e-6
ENERGY_MEAN_TOLERANCE = 1e-8
ENERGY_SECOND_MOMENT_TOLERANCE = 1e-7
MC_AGREEMENT_SIGMAS = 4.0
VARIANCE_TOLERANCE = 1e-12

# Self-averaging bounds: V(𝒜) ≤ |Λ|(¼β²c̄ + 35/36·β⁴c̄²) and V(u) ≤ 15β²c̄²
FREE_ENERGY_QUADRATIC = 0.25
FREE_ENERGY_QUARTIC = 35.0 / 36.0
ENERGY_VARIANCE_FACTOR = 15.0

CHECKS = (
    "gg", "classical", "delta-dual", "wick", "energy-identities", "variance-bounds", "stability",
)

SK_VARIANCE_CONVENTIONS = ("variance", "deviation")
