import os
import sys
import logging
from contextlib import contextmanager
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Iterator, Optional, Union

from tqdm import tqdm

from config import get_env, get_env_flag

CONSOLE_FORMAT = "[%(asctime)s] [%(levelname)s] %(name)s - %(message)s"
FILE_FORMAT = "[%(asctime)s] [%(levelname)s] [%(module)s:%(lineno)d] %(name)s - %(message)s"
RUN_LOG_FILE = "run.log"


class TqdmConsoleHandler(logging.Handler):
    """Writes records through tqdm so they don't break progress bars."""

    def emit(self, record: logging.LogRecord) -> None:
        try:
            tqdm.write(self.format(record), file=sys.stderr)
        except Exception:
            self.handleError(record)


def setup_logger(name="zsl-dual", log_file=None):
    """
    Sets up the logger shared by the zsl package, the config loader and the CLI.
    Level is DEBUG with env DEBUG=true, WARNING otherwise; the rotating file
    lives in env ZSL_LOG_DIR (./logs by default). Prevents duplicate handlers.
    """
    log_dir = os.path.abspath(get_env("ZSL_LOG_DIR", "./logs"))
    os.makedirs(log_dir, exist_ok=True)
    if not log_file:
        log_file = os.path.join(log_dir, "zsl.log")

    logger = logging.getLogger(name)
    logger.setLevel(logging.DEBUG if get_env_flag("DEBUG") else logging.WARNING)

    if not logger.handlers:
        console_handler = TqdmConsoleHandler()
        console_handler.setFormatter(logging.Formatter(CONSOLE_FORMAT))
        console_handler.setLevel(logging.INFO)
        logger.addHandler(console_handler)

        file_handler = RotatingFileHandler(log_file, maxBytes=5 * 1024 * 1024, backupCount=3)
        file_handler.setFormatter(logging.Formatter(FILE_FORMAT))
        file_handler.setLevel(logging.DEBUG)
        logger.addHandler(file_handler)

    return logger


@contextmanager
def run_log(logger: logging.Logger, run_dir: Union[str, os.PathLike],
            level: Optional[int] = None) -> Iterator[Path]:
    """Mirror the logger into ``run_dir/run.log`` while the block runs."""
    path = Path(run_dir) / RUN_LOG_FILE
    path.parent.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(path, mode="w", encoding="utf-8")
    handler.setFormatter(logging.Formatter(FILE_FORMAT))
    handler.setLevel(level if level is not None else logging.DEBUG)
    logger.addHandler(handler)
    try:
        yield path
    finally:
        logger.removeHandler(handler)
        handler.close()
