"""Shared exception types for the lab."""

from __future__ import annotations


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of the operation."""


class Refusal(ValueError):
    """Inputs are formally valid but insufficient for a meaningful answer."""


class ConfigError(ValueError):
    """Experiment configuration failed validation; message carries the field path."""


class FbmSynthesisError(RuntimeError):
    """Exact synthesis failed: the covariance embedding is not positive semidefinite."""


class IntegrationError(RuntimeError):
    """Numerical blow-up during SDE integration."""

    def __init__(self, message: str, step_index: int | None = None):
        super().__init__(message)
        self.step_index = step_index


class InfeasibleError(RuntimeError):
    """The constraint system has no solution in the searched region."""

    def __init__(self, message: str, binding: list[str] | None = None):
        super().__init__(message)
        self.binding = list(binding or [])
