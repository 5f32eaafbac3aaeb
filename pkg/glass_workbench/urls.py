"""
URL configuration for glass_workbench project.

The REST surface lives under /api/; see api/urls.py.
"""
from django.urls import include, path

urlpatterns = [
    path('api/', include('api.urls')),
]
