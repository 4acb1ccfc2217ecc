"""Exception hierarchy shared across the toolkit.

Every error raised by morphkit derives from MorphkitError so callers can
catch the whole family at API boundaries (the CLI maps subclasses to exit
codes; the engine converts runtime faults into events instead of raising).
"""

from __future__ import annotations


class MorphkitError(Exception):
    """Base class for all morphkit errors."""

    def __init__(self, message: str, location: str | None = None):
        super().__init__(message if location is None else f"{location}: {message}")
        self.message = message
        self.location = location


class ParseError(MorphkitError):
    """Malformed input text (bad JSON, bad expression syntax)."""

    def __init__(self, message: str, location: str | None = None, column: int | None = None):
        if column is not None:
            message = f"{message} (column {column})"
        super().__init__(message, location)
        self.column = column


class SchemaError(MorphkitError):
    """Structurally well-formed input that violates a shape invariant."""


class SemanticError(MorphkitError):
    """Dangling references, duplicate names, and similar cross-field faults."""


class ArityError(ParseError):
    """A known function called with the wrong number of arguments."""


class EvalError(MorphkitError):
    """Expression evaluation fault; subclasses say which kind."""


class EvalTypeError(EvalError):
    """Operator or function applied to values of the wrong runtime tag."""


class DivisionByZero(EvalError):
    """Division (or normalise with an empty range) hit a zero denominator."""


class LayoutError(MorphkitError):
    """A visualisation cannot be laid out (e.g. quantitative channel on text)."""


class MergeError(MorphkitError):
    """Keyframe merge produced an invalid specification."""


class ResolveError(MorphkitError):
    """A keyframe placeholder could not be substituted."""


class PreconditionError(MorphkitError):
    """An operation was invoked outside its stated precondition."""


class CycleError(MorphkitError):
    """The signal dependency graph contains a cycle."""


class OrderError(MorphkitError):
    """A scenario trace has decreasing tick numbers."""


class UnknownEntityError(MorphkitError):
    """A scene command referenced an entity id that does not exist."""
