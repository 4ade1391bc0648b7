####################################
#   Settings : environment / .env  #
####################################

import os
from typing import Optional

from dotenv import load_dotenv

from qkd_logic.errors import ConfigParseError

load_dotenv()

DEFAULT_MEASUREMENT_GATE_HZ = 20e6
DEFAULT_DARK_FLOOR_CPS = 10.0
DEFAULT_PCR_WARN_CPS = 1e6
DEFAULT_SYNC_CEILING_DBM = -50.0


def get_env_float(var_name: str, default: Optional[float] = None) -> float:
    """
    Get a float value from environment variables with proper error handling.

    Args:
        var_name: Name of the environment variable
        default: Default value if variable is not set """
    value_str = os.getenv(var_name)

    if value_str is None or value_str.strip() == "":
        if default is not None:
            return default
        raise ConfigParseError(f"{var_name} not defined in environment variables", field=var_name)

    try:
        return float(value_str)
    except ValueError:
        raise ConfigParseError(f"{var_name} must be a valid number, got: {value_str}", field=var_name)


def measurement_gate_hz() -> float:
    """Gate rate of the SPD during IC-XT calibration (20 MHz in the reference set-up)"""
    return get_env_float("MCF_MEASUREMENT_GATE_HZ", DEFAULT_MEASUREMENT_GATE_HZ)


def dark_floor_cps() -> float:
    return get_env_float("MCF_DARK_FLOOR_CPS", DEFAULT_DARK_FLOOR_CPS)


def pcr_warn_cps() -> float:
    return get_env_float("MCF_PCR_WARN_CPS", DEFAULT_PCR_WARN_CPS)


def sync_ceiling_dbm() -> float:
    return get_env_float("MCF_SYNC_CEILING_DBM", DEFAULT_SYNC_CEILING_DBM)


def log_level() -> str:
    return os.getenv("MCF_LOG_LEVEL", "WARNING").upper()
