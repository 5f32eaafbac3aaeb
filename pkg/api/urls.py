from django.urls import path
from .views import MomentView, StabilityView

urlpatterns = [
    path('stability/', StabilityView.as_view(), name='stability'),
    path('moment/', MomentView.as_view(), name='moment'),
]
