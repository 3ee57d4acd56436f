import os
import logging
from dotenv import load_dotenv
from typing import Optional

# Load environment variables from .env file
load_dotenv()

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def get_config_value(key: str, default: Optional[str] = None, required: bool = False) -> Optional[str]:
    """Get configuration value with fallback chain: .env / environment -> default"""
    value = os.getenv(key)
    if value:
        return value

    if required:
        raise EnvironmentError(f"Missing {key}. Set it in the .env file or as an environment variable.")

    return default


def get_int_config(key: str, default: Optional[int] = None) -> Optional[int]:
    """Integer configuration value; malformed values are rejected"""
    raw = get_config_value(key)
    if raw is None:
        return default
    try:
        return int(raw)
    except ValueError:
        raise EnvironmentError(f"{key} must be an integer, got {raw!r}")


def setup_logging(level: Optional[str] = None) -> None:
    """Configure root logging once for command-line entry points (stderr)"""
    logging.basicConfig(level=(level or LOG_LEVEL).upper(), format=LOG_FORMAT)


# === Environment Configuration ===
LOG_LEVEL   = get_config_value("LOG_LEVEL", "INFO")
OUT_DIR     = get_config_value("DAS_OUT_DIR", "das_output")
CONFIG_PATH = get_config_value("DAS_CONFIG")  # Optional - PipelineConfig JSON document
DEFAULT_SEED = get_int_config("DAS_SEED")
