import sys
import time
import logging
from typing import Optional

# Dedicated stage timing logger, kept off the root logger so timings stay readable
timing_logger = logging.getLogger("analysis_timing")
if not timing_logger.handlers:
    timing_handler = logging.StreamHandler(sys.stderr)
    timing_handler.setLevel(logging.INFO)
    timing_handler.setFormatter(logging.Formatter('⏱️ %(asctime)s - %(message)s', datefmt='%H:%M:%S'))
    timing_logger.addHandler(timing_handler)
    timing_logger.setLevel(logging.INFO)
    timing_logger.propagate = False


def configure_logging(level: str = "INFO", quiet: bool = False) -> None:
    """
    Configure root logging on standard error.

    Args:
        level: Log level name for the root logger
        quiet: Only warnings and errors are emitted when set
    """
    effective = logging.WARNING if quiet else getattr(logging, level.upper(), logging.INFO)
    logging.basicConfig(
        level=effective,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        stream=sys.stderr,
        force=True,
    )
    timing_logger.setLevel(logging.WARNING if quiet else logging.INFO)


def log_stage_timing(stage: str, duration: float, extra_info: str = "") -> None:
    """Log stage timing information in a consistent, visible format."""
    if extra_info:
        timing_logger.info(f"STAGE: {stage:<25} | Time: {duration:.3f}s | {extra_info}")
    else:
        timing_logger.info(f"STAGE: {stage:<25} | Time: {duration:.3f}s")


class StageTimer:
    """Context manager that logs the wall time of a named stage."""

    def __init__(self, stage: str, extra_info: str = ""):
        self.stage = stage
        self.extra_info = extra_info
        self.elapsed: Optional[float] = None
        self._start = 0.0

    def __enter__(self) -> "StageTimer":
        self._start = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        self.elapsed = time.perf_counter() - self._start
        if exc_type is None:
            log_stage_timing(self.stage, self.elapsed, self.extra_info)
