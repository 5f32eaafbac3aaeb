"""Views for quick stability and moment queries on small families."""

from rest_framework import status
from rest_framework.response import Response
from rest_framework.views import APIView

from ..config import family_from_spec, scheme_from_spec, tuple_cap, workbench_setting
from ..serializers import MomentRequestSerializer, StabilityRequestSerializer
from ..spinglass.disorder import MonteCarlo
from ..spinglass.model import stability_report
from ..spinglass.observables import quenched_moment
from ..utils.logging import setup_logger
from ..utils.validation import InfeasibleError, validate_volume

logger = setup_logger(__name__)


class StabilityView(APIView):
    """Per-site variance of a family against its stability constant."""

    def post(self, request):
        serializer = StabilityRequestSerializer(data=request.data)
        if not serializer.is_valid():
            return Response(serializer.errors, status=status.HTTP_400_BAD_REQUEST)

        family = family_from_spec(dict(serializer.validated_data))
        report = stability_report(family)
        logger.info(f"Stability of {family.describe()}: {report.per_site_variance:.6g} vs {report.claimed_bound:.6g}")
        return Response({
            'family': family.describe(),
            'volume': family.volume,
            'couplings': family.size,
            'per_site_variance': report.per_site_variance,
            'claimed_bound': report.claimed_bound,
            'satisfied': report.satisfied,
            'site_share': report.site_share,
            'class_sum': report.class_sum,
        })


class MomentView(APIView):
    """Quenched moment ⟨G⟩ of an overlap monomial."""

    def post(self, request):
        """Handle POST request for a quenched moment.

        Args:
            request: HTTP request with family, beta, observable and scheme

        Returns:
            Response: The estimate, or validation errors
        """
        serializer = MomentRequestSerializer(data=request.data)
        if not serializer.is_valid():
            return Response(serializer.errors, status=status.HTTP_400_BAD_REQUEST)

        data = serializer.validated_data
        family = family_from_spec(dict(data['family']))
        # requests run inside the web worker, so they get tighter caps than the CLI
        validate_volume(family.volume, workbench_setting('API_MAX_VOLUME', 14))
        scheme = scheme_from_spec(data['scheme'])
        max_samples = workbench_setting('API_MAX_SAMPLES', 2000)
        if isinstance(scheme, MonteCarlo) and scheme.samples > max_samples:
            raise InfeasibleError(f"At most {max_samples} disorder samples per request, got {scheme.samples}")

        monomial = data['monomial']
        logger.info(f"Moment {monomial} on {family.describe()} at β={data['beta']} with {scheme.describe()}")
        estimate = quenched_moment(family, data['beta'], monomial, scheme, tuple_cap=tuple_cap())
        return Response({
            'family': family.describe(),
            'beta': data['beta'],
            'observable': str(monomial),
            'scheme': scheme.describe(),
            'estimate': estimate.to_dict(),
        })
