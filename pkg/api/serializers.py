from rest_framework import serializers

from .spinglass.constants import (
    CHECKS, DEFAULT_GRID_POINTS, DEFAULT_QUADRATURE_ORDER, EXACT_QUADRATURE_ORDER, MIN_GRID_POINTS,
    MIN_VARIANCE_SAMPLES, SK_VARIANCE_CONVENTIONS,
)
from .spinglass.identities import MEASURES, MEASURE_BETA_SQUARED
from .spinglass.model import PRESETS
from .spinglass.observables import parse_monomial
from .utils.validation import ConfigError

# Parameters each preset accepts; the first group is required
PRESET_PARAMETERS = {
    'ea': (('dimension', 'side'), ('periodic',)),
    'long_range': (('alpha', 'dimension', 'side'), ('periodic',)),
    'sk': (('n',), ('convention',)),
    'p_spin': (('n', 'p'), ()),
    'rem': (('n',), ()),
    'custom': (('volume', 'terms'), ('claimed_bound',)),
}

# Parameter that a size sweep varies
SIZE_PARAMETER = {
    'ea': 'side', 'long_range': 'side', 'sk': 'n', 'p_spin': 'n', 'rem': 'n', 'custom': 'volume',
}


class TermSerializer(serializers.Serializer):
    sites = serializers.ListField(child=serializers.IntegerField(min_value=0), allow_empty=False,
                                  help_text="Sites of the interacting subset")
    variance = serializers.FloatField(min_value=0.0, help_text="Coupling variance Δ²_X")


class FamilySpecSerializer(serializers.Serializer):
    preset = serializers.CharField(help_text="EA, long_range, SK, p_spin, REM or custom")
    dimension = serializers.IntegerField(required=False, min_value=1, max_value=4)
    side = serializers.IntegerField(required=False, min_value=2)
    periodic = serializers.BooleanField(required=False, default=True)
    alpha = serializers.FloatField(required=False, help_text="Long-range decay exponent, > 1/2")
    n = serializers.IntegerField(required=False, min_value=1, help_text="Number of sites")
    p = serializers.IntegerField(required=False, min_value=1)
    convention = serializers.ChoiceField(required=False, choices=SK_VARIANCE_CONVENTIONS)
    volume = serializers.IntegerField(required=False, min_value=1)
    terms = TermSerializer(many=True, required=False)
    claimed_bound = serializers.FloatField(required=False, min_value=0.0)

    def validate_preset(self, value):
        key = value.lower().replace('-', '_')
        if key not in PRESETS:
            raise serializers.ValidationError(f"Unknown preset '{value}'; expected one of {sorted(PRESETS)}")
        return key

    def validate(self, data):
        required, optional = PRESET_PARAMETERS[data['preset']]
        missing = [name for name in required if name not in data]
        if missing:
            raise serializers.ValidationError(f"Preset '{data['preset']}' needs {', '.join(missing)}")
        allowed = set(required) | set(optional) | {'preset', 'periodic'}
        extra = sorted(name for name in data if name not in allowed and name != 'periodic')
        if extra:
            raise serializers.ValidationError(f"Preset '{data['preset']}' does not take {', '.join(extra)}")
        return data

    @staticmethod
    def builder_parameters(data):
        """Keyword arguments for build_family from validated data."""
        required, optional = PRESET_PARAMETERS[data['preset']]
        params = {name: data[name] for name in required + optional if name in data}
        if 'terms' in params:
            params['terms'] = [(term['sites'], term['variance']) for term in params['terms']]
        return params


class GridSerializer(serializers.Serializer):
    beta_min = serializers.FloatField(min_value=0.0, help_text="Lower end β₁ of the β range")
    beta_max = serializers.FloatField(min_value=0.0, help_text="Upper end β₂ of the β range")
    points = serializers.IntegerField(required=False, default=DEFAULT_GRID_POINTS, min_value=MIN_GRID_POINTS)
    measure = serializers.ChoiceField(required=False, default=MEASURE_BETA_SQUARED, choices=MEASURES)

    def validate(self, data):
        if data['beta_max'] < data['beta_min']:
            raise serializers.ValidationError("beta_max must not be smaller than beta_min")
        return data


class SchemeSerializer(serializers.Serializer):
    kind = serializers.ChoiceField(choices=('mc', 'quadrature'))
    samples = serializers.IntegerField(required=False, min_value=2, help_text="Monte Carlo disorder samples")
    seed = serializers.IntegerField(required=False, min_value=0)
    order = serializers.IntegerField(required=False, default=DEFAULT_QUADRATURE_ORDER, min_value=1, max_value=200)

    def validate(self, data):
        if data['kind'] == 'mc':
            if 'seed' not in data:
                raise serializers.ValidationError("Monte Carlo schemes need a seed")
            if 'samples' not in data:
                raise serializers.ValidationError("Monte Carlo schemes need a sample count")
        return data


class ObservablesSerializer(serializers.Serializer):
    replicas = serializers.IntegerField(min_value=1, max_value=8, help_text="Replica count R")
    specs = serializers.ListField(child=serializers.CharField(), required=False, default=list,
                                  help_text="Monomials such as q[1,2]*q[2,3] or q[1,2]^2")

    def validate(self, data):
        parsed = []
        for spec in data['specs']:
            try:
                parsed.append(parse_monomial(spec, data['replicas']))
            except ConfigError as exc:
                raise serializers.ValidationError(str(exc.detail))
        data['monomials'] = parsed
        return data


class ChecksSerializer(serializers.Serializer):
    run = serializers.ListField(child=serializers.ChoiceField(choices=CHECKS), allow_empty=False)
    delta_betas = serializers.ListField(child=serializers.FloatField(min_value=0.0), required=False,
                                        default=lambda: [0.3, 0.7, 1.1])
    variance_betas = serializers.ListField(child=serializers.FloatField(min_value=0.0), required=False,
                                           default=lambda: [0.5, 1.0])
    variance_samples = serializers.IntegerField(required=False, default=2000, min_value=MIN_VARIANCE_SAMPLES)
    variance_seed = serializers.IntegerField(required=False, min_value=0)
    exact_order = serializers.IntegerField(required=False, default=EXACT_QUADRATURE_ORDER, min_value=1)


class OutputSerializer(serializers.Serializer):
    dir = serializers.CharField(required=False)
    workers = serializers.IntegerField(required=False, min_value=1, max_value=256)


class RunConfigSerializer(serializers.Serializer):
    family = FamilySpecSerializer()
    grid = GridSerializer()
    observables = ObservablesSerializer()
    scheme = SchemeSerializer()
    checks = ChecksSerializer()
    output = OutputSerializer(required=False, default=dict)


class StabilityRequestSerializer(FamilySpecSerializer):
    """POST /api/stability/ body: a family spec."""


class MomentRequestSerializer(serializers.Serializer):
    family = FamilySpecSerializer()
    beta = serializers.FloatField(min_value=0.0, help_text="Inverse temperature β")
    observable = serializers.CharField(help_text="Overlap monomial, e.g. q[1,2]*q[2,3]")
    scheme = SchemeSerializer()

    def validate(self, data):
        try:
            data['monomial'] = parse_monomial(data['observable'])
        except ConfigError as exc:
            raise serializers.ValidationError({'observable': str(exc.detail)})
        return data
