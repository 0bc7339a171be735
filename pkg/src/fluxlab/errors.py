"""Failure types shared across the package.

Numerical failures carry a diagnostics dict so callers (and the command-line
front end) can report what broke without parsing message strings.
"""

from __future__ import annotations


class ConfigError(ValueError):
    """Invalid configuration: bad key, bad value, or conflicting inputs."""


class NumericFailure(RuntimeError):
    """A numerical routine could not deliver its contract.

    Parameters
    ----------
    message : str
        Human-readable description.
    diagnostics : dict, optional
        Machine-readable context (residuals, iteration counts, grid sizes).
    """

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics) if diagnostics else {}


class UnusableFringeError(NumericFailure):
    """Interference record too weak or too noisy to extract a shift from."""
