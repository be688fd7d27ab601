import functools
from typing import Callable

import click
import typer
from rich.console import Console

from util import logger
from zsl.errors import StageError, ZslError

EXIT_UNEXPECTED = 1
EXIT_DOMAIN = 2
EXIT_STAGE = 3

err_console = Console(stderr=True)


def stage_error_handler(exc: StageError) -> int:
    logger.error(f"Run aborted in stage '{exc.stage}': {exc.cause}", exc_info=True)
    err_console.print(f"[bold red]error[/] in stage [bold]{exc.stage}[/]: {exc.cause}")
    return EXIT_STAGE


def zsl_exception_handler(exc: ZslError) -> int:
    logger.warning(f"{type(exc).__name__}: {exc}", exc_info=True)
    err_console.print(f"[bold red]error[/] ({type(exc).__name__}): {exc}")
    return EXIT_DOMAIN


def generic_exception_handler(exc: Exception) -> int:
    logger.critical(f"Unhandled exception: {exc}", exc_info=True)
    err_console.print(f"[bold red]internal error[/]: {exc}")
    return EXIT_UNEXPECTED


def handle_errors(command: Callable) -> Callable:
    """Run a CLI command, turning exceptions into exit statuses."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except (typer.Exit, typer.Abort, click.ClickException):
            raise
        except StageError as exc:
            raise typer.Exit(code=stage_error_handler(exc))
        except ZslError as exc:
            raise typer.Exit(code=zsl_exception_handler(exc))
        except Exception as exc:
            raise typer.Exit(code=generic_exception_handler(exc))

    return wrapper
