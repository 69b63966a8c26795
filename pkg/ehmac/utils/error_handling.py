"""
Error handling utilities for the toolkit.

This module provides the exception hierarchy shared by all modules and the
decorators used by the CLI handlers to turn failures into one-line,
machine-parsable error reports.
"""

import logging
import sys
from functools import wraps
from typing import Any, Callable, Dict, Optional

import numpy as np

from ..constants import ErrorCodes

logger = logging.getLogger(__name__)


class EhmacError(Exception):
    """Base exception for toolkit errors."""

    code = ErrorCodes.INTERNAL

    def __init__(self, message: str, code: Optional[str] = None):
        super().__init__(message)
        if code is not None:
            self.code = code

    def __reduce__(self):
        return (self.__class__, (str(self), self.code))


class ConfigError(EhmacError):
    """Raised when a configuration value is missing or invalid."""

    code = ErrorCodes.CONFIG

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key
        self.detail = message

    def __reduce__(self):
        return (self.__class__, (self.key, self.detail))


class CausalityError(EhmacError):
    """Raised when an action spends energy or bits that are not available."""

    code = ErrorCodes.ENERGY_CAUSALITY


class DimensionError(EhmacError):
    """Raised when vector dimensions do not match."""

    code = ErrorCodes.DIMENSION


class GridClosureError(EhmacError):
    """Raised when a discretization is not closed under the dynamics."""

    code = ErrorCodes.GRID_CLOSURE


class SolverError(EhmacError):
    """Raised by the barrier solver; carries the best iterate when available."""

    code = ErrorCodes.MAX_ITERATIONS

    def __init__(
        self,
        message: str,
        code: Optional[str] = None,
        best_iterate: Optional[np.ndarray] = None,
    ):
        super().__init__(message, code)
        self.best_iterate = best_iterate

    def __reduce__(self):
        return (self.__class__, (str(self), self.code, self.best_iterate))


class TrainingError(EhmacError):
    """Raised when training diverges."""

    code = ErrorCodes.NON_FINITE_LOSS

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}

    def __reduce__(self):
        return (self.__class__, (str(self), self.diagnostics))


class PolicyInfeasibleError(EhmacError):
    """Raised when a policy returns an action violating a constraint."""

    code = ErrorCodes.POLICY_INFEASIBLE

    def __init__(self, slot: int, constraint: str, detail: str = ""):
        message = f"slot {slot} violates {constraint}"
        if detail:
            message = f"{message} ({detail})"
        super().__init__(message)
        self.slot = slot
        self.constraint = constraint
        self.detail = detail

    def __reduce__(self):
        return (self.__class__, (self.slot, self.constraint, self.detail))


class DominanceError(EhmacError):
    """Raised when an online policy beats the offline lower bound on a path."""

    code = ErrorCodes.DOMINANCE


class PathSolveError(EhmacError):
    """Raised when the offline solve of a sample path fails."""

    code = ErrorCodes.PATH_SOLVE

    def __init__(self, seed: int, cause: Exception):
        super().__init__(f"offline solve failed for path seed {seed}: {cause}")
        self.seed = seed
        self.cause = cause

    def __reduce__(self):
        return (self.__class__, (self.seed, self.cause))


def format_error_line(error: BaseException) -> str:
    """
    Render an exception as a single machine-parsable line.

    Args:
        error: Exception to render

    Returns:
        ``error code=<code> message="<text>"`` without newlines
    """
    if isinstance(error, EhmacError):
        code = error.code
    elif isinstance(error, OSError):
        code = ErrorCodes.IO
    else:
        code = ErrorCodes.INTERNAL
    text = " ".join(str(error).split()).replace('"', "'")
    return f'error code={code} message="{text}"'


def handle_errors(log_error: bool = True, reraise: bool = False) -> Callable:
    """
    Decorator for consistent error handling in CLI handlers.

    The wrapped handler returns an exit code; any exception is logged,
    reported on stderr as one line and mapped to exit code 1.

    Args:
        log_error: Whether to log the error
        reraise: Whether to reraise the exception after reporting

    Returns:
        Decorated function with error handling
    """

    def decorator(func: Callable[..., int]) -> Callable[..., int]:
        @wraps(func)
        def wrapper(*args, **kwargs) -> int:
            try:
                return func(*args, **kwargs)
            except EhmacError as e:
                if log_error:
                    logger.warning(f"Error in {func.__name__}: {e}")
                print(format_error_line(e), file=sys.stderr)
                if reraise:
                    raise
                return 1
            except Exception as e:
                if log_error:
                    logger.error(
                        f"Unexpected error in {func.__name__}: {e}", exc_info=True
                    )
                print(format_error_line(e), file=sys.stderr)
                if reraise:
                    raise
                return 1

        return wrapper

    return decorator


class ErrorContext:
    """Context manager that prefixes toolkit errors with a context label."""

    def __init__(self, context: str):
        self.context = context

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        if isinstance(exc_val, EhmacError) and not getattr(exc_val, "_contextualized", False):
            exc_val.args = (f"[{self.context}] {exc_val.args[0]}",) + exc_val.args[1:]
            exc_val._contextualized = True  # type: ignore[attr-defined]
        return False


def log_function_call(func_name: str, **kwargs) -> None:
    """
    Log function call with parameters.

    Args:
        func_name: Name of the function being called
        **kwargs: Function parameters to log
    """
    params = ", ".join([f"{k}={v}" for k, v in kwargs.items()])
    logger.debug(f"Calling {func_name}({params})")
