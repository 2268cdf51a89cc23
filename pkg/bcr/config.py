"""
Runtime configuration and logging setup.
Settings come from the environment (optionally a .env file); CLI flags override them.
"""
import logging
import os
from dataclasses import dataclass, replace
from typing import Optional

import colorlog
from dotenv import load_dotenv

# =====================================================================
# DEFAULTS
# =====================================================================

DEFAULT_ENDPOINT = "https://api.openai.com/v1/chat/completions"
DEFAULT_MODEL = "gpt-3.5-turbo"
LOG_FORMAT = "%(log_color)s%(asctime)s [%(levelname)s] %(name)s: %(message)s"


@dataclass(frozen=True)
class Settings:
    api_key: str = ""
    llm_endpoint: str = DEFAULT_ENDPOINT
    llm_model: str = DEFAULT_MODEL
    log_level: str = "INFO"
    http_timeout: float = 30.0
    http_max_retries: int = 5

    def with_overrides(self, **overrides) -> "Settings":
        """Return a copy with every non-None override applied"""
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


def load_settings(env_file: Optional[str] = None) -> Settings:
    """
    Read settings from the environment.

    Args:
        env_file: optional .env path; by default python-dotenv searches upward from cwd
    """
    load_dotenv(env_file, override=False)
    return Settings(
        api_key=os.getenv("BCR_API_KEY", ""),
        llm_endpoint=os.getenv("BCR_LLM_ENDPOINT", DEFAULT_ENDPOINT),
        llm_model=os.getenv("BCR_LLM_MODEL", DEFAULT_MODEL),
        log_level=os.getenv("BCR_LOG_LEVEL", "INFO"),
        http_timeout=float(os.getenv("BCR_HTTP_TIMEOUT", "30")),
        http_max_retries=int(os.getenv("BCR_HTTP_MAX_RETRIES", "5")),
    )


class SecretRedactingFilter(logging.Filter):
    """Masks a secret in every record that passes through a handler"""

    def __init__(self, secret: str):
        super().__init__()
        self.secret = secret

    def filter(self, record: logging.LogRecord) -> bool:
        if self.secret:
            message = record.getMessage()
            if self.secret in message:
                record.msg = message.replace(self.secret, "***")
                record.args = ()
        return True


def setup_logging(level: str = "INFO", secret: str = "") -> None:
    """Install a single colored console handler on the root logger"""
    handler = colorlog.StreamHandler()
    handler.setFormatter(colorlog.ColoredFormatter(LOG_FORMAT))
    handler.addFilter(SecretRedactingFilter(secret))

    root = logging.getLogger()
    for existing in list(root.handlers):
        root.removeHandler(existing)
    root.addHandler(handler)
    root.setLevel(level.upper())
