import os
import sys

from loguru import logger


# Worker cap for replica simulation. Exposed as env var so CI boxes can pin it.
LIMSET_THREADS = int(os.getenv("LIMSET_THREADS", str(os.cpu_count() or 1)))

LOG_FORMAT = "{time:HH:mm:ss} | {level: <8} | {name}:{function} - {message}"
LOG_FILE = "limset.log"


def setup_logging(verbose: bool = False, quiet: bool = False, log_dir: str | None = None):
    level = "DEBUG" if verbose else "WARNING" if quiet else "INFO"
    logger.remove()
    logger.add(sys.stderr, level=level, format=LOG_FORMAT)
    if log_dir is not None:
        attach_run_log(log_dir)


def attach_run_log(log_dir: str) -> int:
    """DEBUG file sink inside a run directory; returns the loguru handler id."""
    os.makedirs(log_dir, exist_ok=True)
    return logger.add(
        os.path.join(log_dir, LOG_FILE),
        level="DEBUG",
        format=LOG_FORMAT,
        encoding="utf-8",
    )


def worker_count(requested: int | None) -> int:
    """Clamp a requested worker count to [1, LIMSET_THREADS]."""
    cap = max(1, LIMSET_THREADS)
    if requested is None:
        return cap
    return max(1, min(int(requested), cap))
