import os
from pathlib import Path
from typing import Dict

from dotenv import dotenv_values, find_dotenv, load_dotenv

from .logger import Logger

_TRUE_VALUES = {"1", "true", "yes", "on"}


def load_environment(dotenv_path: str = None) -> bool:
    """
    Load a `.env` file into the process environment without overriding
    variables that are already set. Without a path, the search starts at the
    working directory and walks up.

    Returns:
        bool: True if a file was found and loaded
    """
    loaded = load_dotenv(dotenv_path or find_dotenv(usecwd=True))
    Logger.debug(f"Environment loaded from .env: {loaded}", name=__name__)
    return loaded


def worker_count() -> int:
    """
    Worker cap from CURVELIGHT_THREADS.

    0 (the default) means single-threaded deterministic mode.
    """
    raw = os.getenv("CURVELIGHT_THREADS", "0").strip()
    try:
        workers = int(raw)
    except ValueError:
        Logger.error(f"CURVELIGHT_THREADS must be an integer, got {raw!r}", name=__name__)
        raise ValueError(f"CURVELIGHT_THREADS must be an integer, got {raw!r}")
    if workers < 0:
        raise ValueError(f"CURVELIGHT_THREADS must be >= 0, got {workers}")
    return workers


def debug_enabled() -> bool:
    """True when CURVELIGHT_DEBUG asks for curve range checks."""
    return os.getenv("CURVELIGHT_DEBUG", "").strip().lower() in _TRUE_VALUES


def read_config_file(path) -> Dict[str, str]:
    """
    Read a flat `key = value` UTF-8 config file.

    Keys are lower-cased and dashes become underscores, so `val-fraction`
    and `VAL_FRACTION` name the same setting. Keys without a value are dropped.
    """
    config_path = Path(path)
    if not config_path.is_file():
        Logger.error(f"Config file not found: {config_path}", name=__name__)
        raise FileNotFoundError(f"Config file not found: {config_path}")

    values = dotenv_values(config_path, encoding="utf-8")
    config = {
        key.strip().lower().replace("-", "_"): value.strip()
        for key, value in values.items()
        if value is not None
    }
    Logger.info(f"Read {len(config)} settings from {config_path}", name=__name__)
    return config
