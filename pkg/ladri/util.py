import logging
import os
import socket
import time
from typing import Optional
from urllib.parse import urlparse

from ladri.consts import (
    DEFAULT_ENV_VARIABLES,
    ENV_VARIABLES_MAPPING,
    ENV_SEED,
    ENV_WORKERS,
    ENV_LOG_LEVEL,
    SERVICE_NAME_VALUE,
)
from ladri.errors import ConfigError

logger = logging.getLogger(__name__)

_UINT64_MASK = (1 << 64) - 1


def get_environ_vars():
    """
    Reads the LADRI environment variables and returns them as resource attributes.
    Unset variables fall back to DEFAULT_ENV_VARIABLES.

    Returns:
        dict: formatted attribute names mapped to their string values.

    Example:
        {
            "ladri.seed": "",
            "ladri.log.level": "INFO",
            "ladri.workers": "1",
            "ladri.otel.endpoint": "",
            "ladri.traces.file": "",
            "ladri.live.logs.file": "",
            "service.name": "ladri",
        }
    """

    env_variables = {
        key: os.getenv(key, default) for key, default in DEFAULT_ENV_VARIABLES.items()
    }
    return format_env_variables(env_variables)


def format_env_variables(env_variables):

    new_data = {}
    for key, value in env_variables.items():
        new_key = ENV_VARIABLES_MAPPING.get(key, key)
        new_data[new_key] = value

    def convert_key(key):
        return key.lower().replace("_", ".")

    converted_env_variables = {convert_key(k): v for k, v in new_data.items()}
    if converted_env_variables:
        converted_env_variables["service.name"] = SERVICE_NAME_VALUE
    return converted_env_variables


def seed_override() -> Optional[int]:
    """
    Returns the LADRI_SEED override, or None when the variable is unset or empty.

    Raises:
        ConfigError: the value is not an unsigned 64-bit integer.
    """
    raw = os.getenv(ENV_SEED, "").strip()
    if not raw:
        return None
    try:
        seed = int(raw)
    except ValueError:
        raise ConfigError(ENV_SEED, f"expected an unsigned integer, got '{raw}'")
    if seed < 0 or seed > _UINT64_MASK:
        raise ConfigError(ENV_SEED, f"out of unsigned 64-bit range: {seed}")
    logger.info(f"[LADRI] {ENV_SEED} overrides configured seed with {seed}")
    return seed


def worker_count() -> int:
    raw = os.getenv(ENV_WORKERS, DEFAULT_ENV_VARIABLES[ENV_WORKERS]).strip()
    try:
        workers = int(raw)
    except ValueError:
        raise ConfigError(ENV_WORKERS, f"expected a positive integer, got '{raw}'")
    if workers < 1:
        raise ConfigError(ENV_WORKERS, f"expected a positive integer, got {workers}")
    return workers


def log_level() -> int:
    name = os.getenv(ENV_LOG_LEVEL, DEFAULT_ENV_VARIABLES[ENV_LOG_LEVEL]).upper()
    level = logging.getLevelName(name)
    if not isinstance(level, int):
        logger.warning(f"[LADRI] Unknown {ENV_LOG_LEVEL} '{name}', using INFO")
        return logging.INFO
    return level


def derive_seed(master_seed: int, index: int) -> int:
    """Per-grid-point seed: master XOR index, kept in unsigned 64-bit range."""
    return (master_seed ^ index) & _UINT64_MASK


def format_float(value: float) -> str:
    """Shortest decimal text that parses back to the same double."""
    return repr(float(value))


def _is_endpoint_reachable(
    endpoint_url: str,
    retry_enabled: bool = False,
    timeout: int = 3,
    retries: int = 3,
    backoff: int = 1,
) -> bool:
    """
    Checks if an OTLP collector endpoint accepts TCP connections within a timeout.

    Args:
        endpoint_url (str): URL including host and port.
        retry_enabled (bool, optional): Whether to retry on failure. Defaults to False.
        timeout (int, optional): Connection timeout in seconds. Defaults to 3.
        retries (int, optional): Number of attempts when retrying. Defaults to 3.
        backoff (int, optional): Seconds between attempts. Defaults to 1.
    Returns:
        bool: True if the endpoint is reachable, False otherwise.
    """
    if not endpoint_url:
        logger.warning("[LADRI] OTel endpoint URL is empty. Assuming unreachable.")
        return False

    if not retry_enabled:
        retries = 1

    for attempt in range(retries):
        try:
            parsed_url = urlparse(endpoint_url)
            host = parsed_url.hostname
            port = parsed_url.port

            with socket.create_connection((host, port), timeout=timeout):
                return True
        except (socket.error, ConnectionRefusedError, socket.timeout) as e:
            if attempt < retries - 1:
                logger.warning(
                    f"[LADRI] OTel endpoint {endpoint_url} is not reachable: {e}. Retrying in {backoff} seconds..."
                )
                time.sleep(backoff)
            else:
                logger.warning(
                    f"[LADRI] OTel endpoint {endpoint_url} is not reachable after {retries} attempts: {e}"
                )
                return False
        except ValueError as e:
            logger.warning(
                f"[LADRI] Malformed OTel endpoint URL '{endpoint_url}': {e}. Assuming unreachable."
            )
            return False
    return False
