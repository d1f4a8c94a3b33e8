"""Exception types raised across the package."""

from __future__ import annotations

from dataclasses import dataclass, field


class ModelError(ValueError):
    """Raised when an operation is called on a model it does not support."""


@dataclass
class DivergenceReport:
    """Record of an integral declared divergent by the doubling detector.

    Attributes:
        quantity: short name of what was being integrated.
        extents: truncation extents tried, in order.
        estimates: truncated estimates at each extent.
        detail: free-form context (e.g. the offending cluster).
    """

    quantity: str
    extents: list[float] = field(default_factory=list)
    estimates: list[float] = field(default_factory=list)
    detail: str = ""

    def as_dict(self) -> dict:
        return {
            "quantity": self.quantity,
            "extents": list(self.extents),
            "estimates": list(self.estimates),
            "detail": self.detail,
        }


class DivergenceError(ArithmeticError):
    """An integral (density, mass, expectation) was found to be infinite."""

    def __init__(self, report: DivergenceReport):
        self.report = report
        super().__init__(f"{report.quantity} diverges ({report.detail})".rstrip())
