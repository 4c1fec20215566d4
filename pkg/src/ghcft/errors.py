"""Exception and warning types shared across the package."""

from __future__ import annotations


class GhcftError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(GhcftError):
    """Syntax or structural error in a model or report document."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{line}:{column}: {message}")
        self.message = message
        self.line = line
        self.column = column


class InvalidModelError(GhcftError):
    """An operation was given a model that violates its preconditions."""


class UnresolvedInputError(GhcftError):
    """An input failure mode has no rate bound to it."""


class CyclicDependencyError(GhcftError):
    """The component connection graph contains a cycle."""

    def __init__(self, cycle: tuple[str, ...]):
        super().__init__("cyclic component dependency: " + " -> ".join(cycle))
        self.cycle = cycle


class TransformError(GhcftError):
    """A state-machine element cannot be rewritten as Boolean failure logic."""


class AnalysisError(GhcftError):
    """A quantitative analysis was requested outside its domain of validity."""


class MissionTimeRequiredError(AnalysisError):
    """AND gates have no rate semantics without a mission time.

    An AND over failure rates is dimensionally unsound; the evaluator
    composes per-input unavailabilities over a finite mission time and
    refuses to run when none is configured.
    """


class SharedEventError(AnalysisError):
    """A basic event influences the top event through more than one
    state-machine inport (or through a state-machine inport and a parallel
    Boolean path), which quantitative analysis cannot handle."""


class NumericalError(GhcftError):
    """A linear solve or integration failed or is untrustworthy."""


class ResourceLimitError(GhcftError):
    """A configured resource cap (cut-set count, step count) was exceeded."""


class GhcftWarning(UserWarning):
    """Non-fatal diagnostics emitted by analysis operations."""
