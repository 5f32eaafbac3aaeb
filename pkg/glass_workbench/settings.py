"""
Django settings for glass_workbench project.

For more information on this file, see
https://docs.djangoproject.com/en/5.0/topics/settings/

For the full list of settings and their values, see
https://docs.djangoproject.com/en/5.0/ref/settings/
"""

import os
from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = os.environ.get('GLASSBENCH_SECRET_KEY', 'django-insecure-glass-workbench-local-only')

# SECURITY WARNING: don't run with debug turned on in production!
DEBUG = os.environ.get('GLASSBENCH_DEBUG', '1') == '1'

ALLOWED_HOSTS = ['localhost', '127.0.0.1', 'testserver']


# Application definition

INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'django.contrib.auth',
    'rest_framework',
    'api',
]

MIDDLEWARE = [
    'django.middleware.security.SecurityMiddleware',
    'django.middleware.common.CommonMiddleware',
]

ROOT_URLCONF = 'glass_workbench.urls'

WSGI_APPLICATION = 'glass_workbench.wsgi.application'


# Every computation is in memory; nothing is persisted.
DATABASES = {}


REST_FRAMEWORK = {
    'DEFAULT_RENDERER_CLASSES': ['rest_framework.renderers.JSONRenderer'],
    'DEFAULT_PARSER_CLASSES': ['rest_framework.parsers.JSONParser'],
    'DEFAULT_AUTHENTICATION_CLASSES': [],
    'DEFAULT_PERMISSION_CLASSES': ['rest_framework.permissions.AllowAny'],
    'UNAUTHENTICATED_USER': None,
}


# Workbench runtime settings; domain functions default to api/spinglass/constants.py
WORKBENCH = {
    'MAX_VOLUME': 24,
    'REM_MAX_VOLUME': 20,
    'QUADRATURE_NODE_CAP': 10**7,
    'MONOMIAL_TUPLE_CAP': 10**6,
    'WORKERS': int(os.environ.get('GLASSBENCH_WORKERS', '1')),
    'OUTPUT_DIR': BASE_DIR / 'results',
    'LOG_LEVEL': 'INFO',
    # Requests to the REST surface stay interactive
    'API_MAX_VOLUME': 14,
    'API_MAX_SAMPLES': 2000,
}


# Internationalization
# https://docs.djangoproject.com/en/5.0/topics/i18n/

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = True

USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'
