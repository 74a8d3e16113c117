"""Exception types. Each maps onto a CLI exit code."""
from __future__ import annotations


class QresError(Exception):
    exit_code = 1


class ValidationError(QresError, ValueError):
    """Malformed or invalid input; carries structured findings when available."""

    exit_code = 2

    def __init__(self, findings):
        if isinstance(findings, str):
            self.findings = []
            msg = findings
        else:
            self.findings = list(findings)
            msg = "; ".join(str(f) for f in self.findings if getattr(f, "severity", "error") == "error")
            msg = msg or "; ".join(str(f) for f in self.findings)
        super().__init__(msg)


class DimensionError(ValidationError):
    pass


class DomainError(QresError, ValueError):
    exit_code = 2


class ResourceError(QresError):
    exit_code = 2


class SolverError(QresError):
    exit_code = 3

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ExtractionError(QresError):
    exit_code = 3


class WitnessRejected(QresError):
    exit_code = 1

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
