import os
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


def _optional_int(name):
    value = os.environ.get(name)
    return int(value) if value not in (None, '') else None


def _optional_float(name):
    value = os.environ.get(name)
    return float(value) if value not in (None, '') else None


class Config:
    LOG_LEVEL = os.environ.get('LOG_LEVEL', 'INFO').upper()
    # Runtime overrides; None means "not set in the environment"
    SGRD_OUT_DIR = os.environ.get('SGRD_OUT_DIR') or None
    SGRD_WORKERS = _optional_int('SGRD_WORKERS')
    SGRD_BURN_IN = _optional_float('SGRD_BURN_IN')
    # Fallbacks when neither flags, environment nor the config file say otherwise
    DEFAULT_OUT_DIR = 'runs'
    DEFAULT_WORKERS = min(4, os.cpu_count() or 1)
    DEFAULT_BURN_IN = 10.0
