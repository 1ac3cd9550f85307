"""
Centralized Error Handler for the impulse control toolkit
Provides the exception hierarchy, exit-code mapping for the CLI
and logging of failures with context.
"""

import logging
from functools import wraps
from typing import Optional, Any, Dict

logger = logging.getLogger(__name__)


# ==================== Custom Exception Classes ====================

class ImpulseControlError(Exception):
    """Base exception for all toolkit errors"""
    exit_code = 1

    def __init__(self, message: str, details: Optional[str] = None,
                 anchor: Optional[str] = None):
        self.message = message
        self.details = details
        self.anchor = anchor
        super().__init__(self.message)

    def __str__(self) -> str:
        text = self.message
        if self.anchor and self.anchor not in text:
            text = f"{text} [{self.anchor}]"
        if self.details:
            text = f"{text} ({self.details})"
        return text


class ValidationError(ImpulseControlError):
    """Invalid input data: shapes, non-finite entries, malformed config fields"""
    pass


class ConfigurationError(ImpulseControlError):
    """Configuration files that cannot be read or interpreted"""
    pass


class PreconditionError(ImpulseControlError):
    """A mathematical hypothesis required by an operation does not hold"""
    pass


class NumericalError(ImpulseControlError):
    """Non-convergence, overflow or a failed internal verification"""
    exit_code = 2


class ReproductionFailure(ImpulseControlError):
    """An assertion of a reproduce scenario failed"""
    exit_code = 3


# ==================== Error Handler Class ====================

class ErrorHandler:
    """
    Centralized error handling for CLI runs:
    - Detailed logging with context
    - Exit code selection
    """

    EXIT_CODES = {
        'success': 0,
        'validation': 1,
        'numerical': 2,
        'assertion': 3,
    }

    @staticmethod
    def handle_exception(exception: Exception, context: Optional[Dict[str, Any]] = None,
                         log_error: bool = True) -> int:
        """
        Log an exception and return the process exit code for it

        Args:
            exception: The exception to handle
            context: Additional context information
            log_error: Whether to log the error

        Returns:
            Exit code (1 validation, 2 numerical failure, 3 assertion failure)
        """
        error_type = type(exception).__name__
        context_str = ""
        if context:
            context_str = " | ".join([f"{k}={v}" for k, v in context.items()])

        if isinstance(exception, ImpulseControlError):
            code = exception.exit_code
            if log_error:
                logger.error(f"{error_type}: {exception} {context_str}".rstrip())
        else:
            # numpy/scipy failures surface as numerical failures
            code = ErrorHandler.EXIT_CODES['numerical']
            if log_error:
                logger.error(f"{error_type}: {exception} {context_str}".rstrip(), exc_info=True)
        return code

    @staticmethod
    def describe(exception: Exception) -> str:
        """One-line message suitable for stderr"""
        if isinstance(exception, ImpulseControlError):
            return f"{type(exception).__name__}: {exception}"
        return f"Unexpected error: {exception}"


# ==================== Decorator for Error Handling ====================

def handle_errors(log_error: bool = True):
    """
    Decorator turning toolkit exceptions raised by a CLI command into exit codes

    Usage:
        @handle_errors()
        def command(args) -> int:
            ...
    """
    def decorator(func):
        @wraps(func)
        def wrapper(*args, **kwargs):
            try:
                return func(*args, **kwargs)
            except Exception as e:
                code = ErrorHandler.handle_exception(
                    e, context={'command': func.__name__}, log_error=log_error
                )
                print(ErrorHandler.describe(e))
                return code
        return wrapper
    return decorator


# ==================== Utility Functions ====================

def validate_and_raise(condition: bool, error_class: type, message: str,
                       anchor: Optional[str] = None):
    """
    Validate a condition and raise an error if false

    Args:
        condition: Condition to check
        error_class: Exception class to raise
        message: Error message
        anchor: Name of the hypothesis being enforced
    """
    if not condition:
        raise error_class(message, anchor=anchor)
