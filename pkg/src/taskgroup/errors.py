"""Exception types shared across the package."""


class TaskGroupError(Exception):
    """Base class for all package errors."""


class StructuralError(TaskGroupError, ValueError):
    """Shapes, indices or names do not fit together."""


class DomainError(TaskGroupError, ValueError):
    """An argument lies outside the domain of an operation (e.g. an empty task set)."""


class NumericalError(TaskGroupError, ArithmeticError):
    """A non-finite value showed up during simulation or aggregation."""


class SizeGuardError(TaskGroupError, ValueError):
    """A brute-force routine was asked to enumerate a problem that is too large."""
