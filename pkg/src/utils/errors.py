"""
Errors - Exception hierarchy shared by the solvers, the instance store and the CLI
"""


class NewsvendorError(Exception):
    """Base class for every error raised by this package"""


class DomainError(NewsvendorError, ValueError):
    """Input outside the mathematical domain of an operation (non-finite value, p outside (0, 1))"""


class ConfigurationError(NewsvendorError, ValueError):
    """Invalid parameter value or range in a configuration or instance"""


class ArgumentError(NewsvendorError, ValueError):
    """Arguments inconsistent with each other (length mismatch, wrong transport mode)"""


class InstanceFormatError(NewsvendorError):
    """Malformed instance file"""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"Invalid instance field '{field}': {message}")


class InstanceVersionError(NewsvendorError):
    """Instance file written with an unsupported format version"""

    def __init__(self, found, expected):
        self.found = found
        self.expected = expected
        super().__init__(f"Unsupported instance format_version {found!r} (expected {expected})")


class ConvergenceError(NewsvendorError):
    """Iterative solver stopped before reaching its tolerance"""

    def __init__(self, message, last_iterate=None, gradient_norm=None, q0=None):
        self.last_iterate = last_iterate
        self.gradient_norm = gradient_norm
        self.q0 = q0
        self.base_message = message
        details = []
        if last_iterate is not None:
            details.append(f"last iterate={last_iterate}")
        if gradient_norm is not None:
            details.append(f"gradient norm={gradient_norm:.3e}")
        if q0 is not None:
            details.append(f"Q_0={q0:.4f}")
        suffix = f" ({', '.join(details)})" if details else ""
        super().__init__(f"{message}{suffix}")

    def with_q0(self, q0):
        """Return a copy of this error tagged with the central order quantity being searched"""
        return ConvergenceError(self.base_message, self.last_iterate, self.gradient_norm, q0)


class SingularityError(NewsvendorError, ArithmeticError):
    """Derivative undefined at the requested point"""


class SearchRangeError(DomainError):
    """Solver search range is empty or degenerate for the given instance (Q_lb <= 0)"""
