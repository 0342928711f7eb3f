"""Exception types shared across the package."""

from __future__ import annotations


class DomainError(ValueError):
    """An input lies outside the domain of a model or operation."""


class ScenarioError(ValueError):
    """A scenario file or mapping could not be turned into a valid scenario."""

    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SimulationAborted(RuntimeError):
    """A closed-loop run produced a non-finite state.

    ``trace`` holds the samples recorded up to the last finite state.
    """

    def __init__(self, t: float, message: str, trace=None) -> None:
        self.t = t
        self.trace = trace
        super().__init__(f"t={t:.6g} s: {message}")
