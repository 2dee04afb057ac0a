import os
import logging
from typing import Optional

from dotenv import load_dotenv

load_dotenv()

logger = logging.getLogger(__name__)

THREADS_ENV = "OWL3D_THREADS"
LOG_LEVEL = os.getenv("OWL3D_LOG_LEVEL", "INFO").upper()
CORS_ORIGINS = [o.strip() for o in os.getenv("OWL3D_CORS_ORIGINS", "http://localhost:3000").split(",") if o.strip()]


def env_threads() -> Optional[int]:
    """OWL3D_THREADS as an int, or None when unset or not an integer."""
    env_value = os.getenv(THREADS_ENV)
    if not env_value:
        return None
    try:
        return int(env_value)
    except ValueError:
        logger.warning(f"Ignoring non-integer {THREADS_ENV}={env_value!r}")
        return None


DEFAULT_THREADS = max(1, env_threads() or 1)


def resolve_threads(flag_value=None) -> int:
    """
    Worker count for parallel stages.
    Explicit flag wins, then OWL3D_THREADS (re-read so tests can patch it), then 1.
    """
    if flag_value is not None:
        return max(1, int(flag_value))
    return max(1, env_threads() or 1)


def configure_logging(level: str = LOG_LEVEL):
    """Send log records to stderr so report output on stdout stays clean."""
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
