from pathlib import Path
from decouple import config

BASE_DIR = Path(__file__).resolve().parent.parent

# 1. Chaves do ambiente (.env)
SECRET_KEY = config('SECRET_KEY', default='brane-dev-only-key')
DEBUG = config('DEBUG', default=False, cast=bool)

ALLOWED_HOSTS = []

# Application definition

INSTALLED_APPS = [
    'geometry',
    'dynamics',
    'phasespace',
    'runs',
]

# No tests touch the database; sqlite keeps the test runner happy.
DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': BASE_DIR / 'db.sqlite3',
    }
}

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = False
USE_TZ = True

# --- NUMERICAL SETTINGS ---

# Assembly limit for dense operator columns (nodes x normal components)
BRANE_DOF_BUDGET = config('BRANE_DOF_BUDGET', default=10000, cast=int)

# Richardson pair (h, h/2) for finite-difference curvature oracles
BRANE_FD_STEP = config('BRANE_FD_STEP', default=1e-3, cast=float)

# Centered action difference step eps for the first-variation oracle
BRANE_ACTION_FD_STEP = config('BRANE_ACTION_FD_STEP', default=1e-5, cast=float)

# Gram-Schmidt candidates whose normal projection is below this are skipped
BRANE_NORMAL_THRESHOLD = config('BRANE_NORMAL_THRESHOLD', default=1e-6, cast=float)

BRANE_DEGENERATE_DET = config('BRANE_DEGENERATE_DET', default=1e-14, cast=float)

# tau_kernel = factor * h_min^2 * operator scale
BRANE_KERNEL_FACTOR = config('BRANE_KERNEL_FACTOR', default=10.0, cast=float)

# Largest relative |j(1, 2) + j(2, 1)| a pair current may carry
BRANE_SWAP_TOLERANCE = config('BRANE_SWAP_TOLERANCE', default=1e-9, cast=float)

# --- LOGGING ---

BRANE_LOG_LEVEL = config('BRANE_LOG_LEVEL', default='INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'loggers': {
        app: {
            'handlers': ['console'],
            'level': BRANE_LOG_LEVEL,
            'propagate': False,
        }
        for app in INSTALLED_APPS
    },
}
