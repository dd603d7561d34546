"""Centralized environment configuration for hpunet.

Default directories, evaluation sizes and logging switches are defined here.
Values can be overridden via environment variables or a .env file. Model and
training hyper-parameters live in run configuration files instead
(see hpunet.io.config_file).
"""
from __future__ import annotations
import os
from pathlib import Path

# Load .env file if it exists
try:
    from dotenv import load_dotenv
    # Look for .env in current directory, home directory, or project root
    env_paths = [
        Path.cwd() / ".env",
        Path.home() / ".hpunet" / ".env",
        Path(__file__).parent.parent / ".env",
    ]
    for env_path in env_paths:
        if env_path.exists():
            load_dotenv(env_path)
            break
except ImportError:
    # python-dotenv not installed, skip .env loading
    pass


def _env_bool(name: str, default: str) -> bool:
    return os.environ.get(name, default).lower() in ("true", "1", "yes")


class Config:
    """Global configuration for hpunet."""

    # Base directory for all hpunet data
    BASE_DIR: Path = Path(os.environ.get(
        "HPUNET_BASE_DIR",
        str(Path.home() / ".hpunet")
    ))

    # Default parent directory for training runs
    RUNS_DIR: Path = Path(os.environ.get(
        "HPUNET_RUNS_DIR",
        str(BASE_DIR / "runs")
    ))

    LOG_LEVEL: str = os.environ.get("HPUNET_LOG_LEVEL", "INFO").upper()

    # Whether to print debug logs to console in addition to the run log file
    DEBUG_LOG_TO_CONSOLE: bool = _env_bool(
        "HPUNET_DEBUG_LOG_TO_CONSOLE", "false")

    # Number of prior samples drawn per image by evaluate / sample
    DEFAULT_NUM_SAMPLES: int = int(os.environ.get(
        "HPUNET_NUM_SAMPLES",
        "16"
    ))

    # Bootstrap resamples over images for metric standard deviations
    DEFAULT_BOOTSTRAP: int = int(os.environ.get(
        "HPUNET_BOOTSTRAP",
        "1000"
    ))

    # Largest duplicated set size accepted by Hungarian matching
    MAX_LCM: int = int(os.environ.get(
        "HPUNET_MAX_LCM",
        "64"
    ))

    @classmethod
    def ensure_directories(cls) -> None:
        """Create necessary directories if they don't exist."""
        cls.BASE_DIR.mkdir(parents=True, exist_ok=True)
        cls.RUNS_DIR.mkdir(parents=True, exist_ok=True)
