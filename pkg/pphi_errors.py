#!/usr/bin/env python3
"""
Exception hierarchy for the P(phi)_2 zeros laboratory.

Library code raises these; the command line catches them at the
subcommand boundary and maps them to exit codes.
"""


class PPhiError(Exception):
    """Base class for every error raised by the laboratory."""


class ConfigurationError(PPhiError):
    """Invalid run-config, geometry or potential specification (exit code 2)."""

    def __init__(self, message, problems=None):
        self.problems = list(problems or [])
        if self.problems:
            message = message + "\n" + "\n".join(f"  - {p}" for p in self.problems)
        super().__init__(message)


class DegenerateMeasureError(PPhiError):
    """The auxiliary measure is too thin for the requested degree."""


class DegenerateSectionError(PPhiError):
    """A section with zero norm (or zero leading coefficient) where one is not allowed."""


class DiagonalEvaluationError(PPhiError):
    """The Green's function was evaluated on the diagonal."""


class RootFinderError(PPhiError):
    """Root finding failed; the offending coefficient vector is attached."""

    def __init__(self, message, coeffs=None, residual=None):
        super().__init__(message)
        self.coeffs = coeffs
        self.residual = residual


class UnrepresentablePolynomialError(PPhiError):
    """A zero configuration with zeros at infinity cannot be expanded in monomials."""


class SolverError(PPhiError):
    """The equilibrium solver could not certify optimality within its iteration cap."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report or {}


class EmptyDataError(PPhiError):
    """Plotting or aggregation was asked to work on nothing."""


class PlotWriteError(PPhiError):
    """The plot could not be written to the requested path."""


class ConvergenceWarning(UserWarning):
    """MCMC chains did not pass the R-hat diagnostic."""
