"""
Configuration Module
=====================
Loads environment variables from .env file for:
- SEGMINT_LOG_LEVEL: Root logging level for the CLI (default INFO)
- SEGMINT_WORKERS: joblib worker count used by clustering sweeps (default 1)
- SEGMINT_MISSING_TOKEN: CSV token read and written for Missing cells (default "NA")
- SEGMINT_SILHOUETTE_WORKING_MEMORY_MB: chunk budget for silhouette distance
  computation (default 256)

Worker count is an execution setting only. It is not part of run configs
and artifacts do not depend on it.

Raises RuntimeError at import if a variable is set to a malformed value,
preventing a run from starting in a half-configured state.
"""

import os
from dotenv import load_dotenv

load_dotenv()


def _int_env(name: str, default: int, minimum: int = 1) -> int:
    raw = os.getenv(name, "")
    if not raw.strip():
        return default
    try:
        value = int(raw)
    except ValueError:
        raise RuntimeError(f"{name}={raw!r} is not an integer; check .env file")
    if value < minimum:
        raise RuntimeError(f"{name}={value} must be >= {minimum}; check .env file")
    return value


LOG_LEVEL: str = os.getenv("SEGMINT_LOG_LEVEL", "INFO").upper()
WORKERS: int = _int_env("SEGMINT_WORKERS", 1)
MISSING_TOKEN: str = os.getenv("SEGMINT_MISSING_TOKEN", "NA")
SILHOUETTE_WORKING_MEMORY_MB: int = _int_env("SEGMINT_SILHOUETTE_WORKING_MEMORY_MB", 256)

if not MISSING_TOKEN:
    raise RuntimeError("SEGMINT_MISSING_TOKEN must not be empty; check .env file")
