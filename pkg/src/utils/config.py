import os
import logging
from typing import Tuple

import dotenv

dotenv.load_dotenv()

logger = logging.getLogger(__name__)

TOOLKIT_VERSION = "0.3.0"

# Five granularities and the consecutive coarse/fine pairs evaluated between them
DEFAULT_LEVELS: Tuple[int, ...] = (3, 5, 7, 11, 13)
CONSECUTIVE_PAIRS: Tuple[Tuple[int, int], ...] = ((3, 5), (5, 7), (7, 11), (11, 13))

DEFAULT_CURVATURES: Tuple[float, ...] = (0.2, 0.5, 1.0)
TAU_EXCL = 0.95

WORKERS_ENV = "HYPERLENS_WORKERS"
LOG_LEVEL_ENV = "HYPERLENS_LOG_LEVEL"


def consecutive_pairs(levels) -> Tuple[Tuple[int, int], ...]:
    """Pair every level with the next finer one."""
    levels = sorted(levels)
    return tuple(zip(levels[:-1], levels[1:]))


def get_default_workers() -> int:
    """
    Read the default worker count from the environment.

    Returns:
        The value of HYPERLENS_WORKERS, or 1 when unset or invalid
    """
    raw = os.environ.get(WORKERS_ENV)
    if not raw:
        return 1
    try:
        workers = int(raw)
    except ValueError:
        logger.warning(f"{WORKERS_ENV}={raw!r} is not an integer, using 1 worker")
        return 1
    if workers < 1:
        logger.warning(f"{WORKERS_ENV}={workers} must be at least 1, using 1 worker")
        return 1
    return workers


def get_log_level() -> str:
    level = os.environ.get(LOG_LEVEL_ENV, "INFO").upper()
    if level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
        return "INFO"
    return level
