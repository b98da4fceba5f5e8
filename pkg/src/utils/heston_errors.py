"""Exception hierarchy shared by the solver, the verifiers and the CLI."""

from typing import Iterable, List, Optional


class HestonDegenError(Exception):
    """Base class for every error raised by heston-degen."""


class ConfigError(HestonDegenError):
    def __init__(self, message: str, line: Optional[int] = None) -> None:
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(f"{prefix}{message}")


class ParameterError(HestonDegenError):
    def __init__(self, violations: Iterable[str]) -> None:
        self.violations: List[str] = list(violations)
        super().__init__("; ".join(self.violations) or "invalid parameters")


class AdmissibilityError(HestonDegenError):
    """A parameter gate that the requested operation depends on failed."""


class GridError(HestonDegenError):
    """Shape mismatch between a field and its grid, or a point outside the grid."""


class DomainError(HestonDegenError):
    """Evaluation outside a function's domain."""


class PreconditionError(DomainError):
    """A test function or exponent pair lies outside the class an inequality is stated for."""


class NumericalError(HestonDegenError):
    """Singular factorization, blow-up or a quadrature that did not converge."""


__all__ = [
    "HestonDegenError",
    "ConfigError",
    "ParameterError",
    "AdmissibilityError",
    "GridError",
    "DomainError",
    "PreconditionError",
    "NumericalError",
]
