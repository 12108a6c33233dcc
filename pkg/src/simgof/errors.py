"""Exception types shared across the package.

Configuration and input problems derive from :class:`SpecError` (a
``ValueError``); failures of an external or user-supplied simulator derive
from :class:`SimulationError` (a ``RuntimeError``). The CLI maps the former
to exit code 2 and the latter to exit code 1.
"""


class SpecError(ValueError):
    """An argument or specification is invalid (bad k, level, interval...)."""


class SchemaError(SpecError):
    """The column-role schema does not match the file contents."""


class ValidationError(SpecError):
    """A cell failed numeric validation; carries row and column."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class EmptyTableError(SpecError):
    """A table has zero rows."""


class SizeError(SpecError):
    """More rows or neighbors requested than available."""


class TransformError(SpecError):
    """A parameter violates its declared bounds or ordering constraints."""


class SimulationError(RuntimeError):
    """A (re)simulation failed; carries the index of the offending particle."""

    def __init__(self, message, particle=None):
        super().__init__(message)
        self.particle = particle
