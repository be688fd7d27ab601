import os
from typing import Optional

from dotenv import load_dotenv

CONFIG_DIR = os.path.dirname(os.path.abspath(__file__))

# config/.env is optional; variables already set in the environment win
ENV_PATH = os.path.join(CONFIG_DIR, ".env")
load_dotenv(dotenv_path=ENV_PATH)

DEFAULT_CONFIG_PATH = os.path.join(CONFIG_DIR, "defaults.conf")


def get_env(key: str, default: Optional[str] = None) -> Optional[str]:
    return os.getenv(key, default)


def get_env_flag(key: str, default: bool = False) -> bool:
    """Boolean env var: 1/true/yes/on, case-insensitive."""
    value = os.getenv(key)
    if value is None:
        return default
    return value.strip().lower() in ("1", "true", "yes", "on")
