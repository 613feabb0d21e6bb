import functools
import logging
from enum import Enum
from typing import Any, Callable, Optional, TypeVar

import typer
from rich.console import Console

logger = logging.getLogger(__name__)

F = TypeVar("F", bound=Callable[..., Any])


class ErrorCode(str, Enum):
    VALIDATION_ERROR = "VALIDATION_ERROR"
    DOMAIN_ERROR = "DOMAIN_ERROR"
    DIMENSION_MISMATCH = "DIMENSION_MISMATCH"
    NOT_POSITIVE_DEFINITE = "NOT_POSITIVE_DEFINITE"
    RANK_DEFICIENT_BASIS = "RANK_DEFICIENT_BASIS"
    CONSTRAINT_VIOLATION = "CONSTRAINT_VIOLATION"
    SAMPLER_ERROR = "SAMPLER_ERROR"
    PARSE_ERROR = "PARSE_ERROR"
    TAXON_MISMATCH = "TAXON_MISMATCH"
    MODEL_FILE_ERROR = "MODEL_FILE_ERROR"
    BENCHMARK_ERROR = "BENCHMARK_ERROR"
    NON_BINARY_RESPONSE = "NON_BINARY_RESPONSE"
    SPLIT_INFEASIBLE = "SPLIT_INFEASIBLE"


class ExitCode(int, Enum):
    OK = 0
    INPUT_ERROR = 1
    NOT_CONVERGED = 2
    BENCHMARK_DEGRADED = 3


class PamirError(Exception):
    def __init__(
        self,
        code: ErrorCode,
        message: str,
        exit_code: int = ExitCode.INPUT_ERROR,
        detail: Optional[Any] = None,
    ):
        super().__init__(message)
        self.code = code
        self.message = message
        self.exit_code = int(exit_code)
        self.detail = detail

    def __str__(self) -> str:
        return f"[{self.code.value}] {self.message}"


def cli_errors(func: F) -> F:
    """Map PamirError (and anything unexpected) onto the CLI exit-code contract."""

    @functools.wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        console = Console(stderr=True)
        try:
            return func(*args, **kwargs)
        except PamirError as exc:
            console.print(f"[bold red]error[/] {exc.code.value}: {exc.message}")
            if exc.detail:
                console.print(exc.detail)
            raise typer.Exit(code=exc.exit_code)
        except typer.Exit:
            raise
        except Exception as exc:
            logger.error("Unexpected error", exc_info=True)
            console.print(f"[bold red]error[/] INTERNAL: {exc}")
            raise typer.Exit(code=int(ExitCode.INPUT_ERROR))

    return wrapper  # type: ignore[return-value]
