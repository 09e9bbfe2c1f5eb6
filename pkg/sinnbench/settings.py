import os
from pathlib import Path

from dotenv import load_dotenv

# ---------------------------------------------------
# Paths
# ---------------------------------------------------
BASE_DIR = Path(__file__).resolve().parent.parent

load_dotenv(BASE_DIR / ".env")


def env_flag(name, default=False):
    value = os.environ.get(name)
    if value is None:
        return default
    return value.strip().lower() in {"1", "true", "yes", "on"}


# ---------------------------------------------------
# Security
# ---------------------------------------------------
# No web surface; the key only satisfies Django's startup checks.
SECRET_KEY = os.environ.get("SINN_SECRET_KEY", "sinnbench-local-only")

DEBUG = env_flag("SINN_DEBUG")

ALLOWED_HOSTS = []

# ---------------------------------------------------
# Applications
# ---------------------------------------------------
INSTALLED_APPS = [
    "solver",
]

# ---------------------------------------------------
# Database (run records)
# ---------------------------------------------------
DATABASES = {
    "default": {
        "ENGINE": "django.db.backends.sqlite3",
        "NAME": os.environ.get("SINN_DB_PATH", BASE_DIR / "db.sqlite3"),
    }
}

# ---------------------------------------------------
# Internationalization
# ---------------------------------------------------
LANGUAGE_CODE = "en-us"
TIME_ZONE = "UTC"
USE_I18N = False
USE_TZ = True

# ---------------------------------------------------
# Default PK field
# ---------------------------------------------------
DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"

# ---------------------------------------------------
# Logging
# ---------------------------------------------------
LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {
            "format": "{asctime} {levelname} {name}: {message}",
            "style": "{",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "plain",
        },
    },
    "loggers": {
        "solver": {
            "handlers": ["console"],
            "level": os.environ.get("SINN_LOG_LEVEL", "INFO"),
            "propagate": False,
        },
    },
}

# ---------------------------------------------------
# Solver
# ---------------------------------------------------
SINN_OUTPUT_ROOT = Path(os.environ.get("SINN_OUTPUT_ROOT", BASE_DIR / "runs"))

# Deterministic torch kernels and a single thread.
SINN_REPRODUCIBLE = env_flag("SINN_REPRODUCIBLE", default=True)

# Fresh Halton test points per category (interior, boundary) for error tables.
SINN_TEST_POINTS = int(os.environ.get("SINN_TEST_POINTS", 2000))

SINN_WRITE_CHECKPOINTS = env_flag("SINN_WRITE_CHECKPOINTS", default=True)
