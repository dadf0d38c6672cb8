"""
Runtime configuration for hardylab.

Values come from the process environment, optionally seeded from a .env file
in the working directory. Command-line flags override these.
"""

import os

from dotenv import load_dotenv

DEFAULT_SEED = 7
DEFAULT_GRID = 64
DEFAULT_DT = 1e-4
DEFAULT_PATHS = 10_000
DEFAULT_MAX_STEPS = 1_000_000
DEFAULT_LOG_LEVEL = "WARNING"


def _env_int(name, default):
    raw = os.getenv(name)
    if raw is None or raw == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"{name} must be an integer, got {raw!r}")


def _env_float(name, default):
    raw = os.getenv(name)
    if raw is None or raw == "":
        return default
    try:
        return float(raw)
    except ValueError:
        raise ValueError(f"{name} must be a number, got {raw!r}")


class Settings:
    """
    Snapshot of the HARDYLAB_* environment taken at construction time.

    Attributes:
        seed: default seed for every subcommand (HARDYLAB_SEED)
        grid: default torus grid resolution N (HARDYLAB_GRID)
        threads: default worker count (HARDYLAB_THREADS)
        dt, paths, max_steps: Brownian defaults (HARDYLAB_DT, HARDYLAB_PATHS,
            HARDYLAB_MAX_STEPS)
        log_level: logging level name (HARDYLAB_LOG_LEVEL)
    """

    def __init__(self, dotenv=True):
        if dotenv:
            load_dotenv()
        self.seed = _env_int("HARDYLAB_SEED", DEFAULT_SEED)
        self.grid = _env_int("HARDYLAB_GRID", DEFAULT_GRID)
        self.threads = _env_int("HARDYLAB_THREADS", os.cpu_count() or 1)
        self.dt = _env_float("HARDYLAB_DT", DEFAULT_DT)
        self.paths = _env_int("HARDYLAB_PATHS", DEFAULT_PATHS)
        self.max_steps = _env_int("HARDYLAB_MAX_STEPS", DEFAULT_MAX_STEPS)
        self.log_level = os.getenv("HARDYLAB_LOG_LEVEL", DEFAULT_LOG_LEVEL).upper()
