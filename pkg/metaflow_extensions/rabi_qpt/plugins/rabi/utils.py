# pyright: strict, reportTypeCommentUsage=false, reportMissingTypeStubs=false
from __future__ import annotations

import math

from typing import Optional, Sequence, Union

from metaflow.exception import MetaflowException

# Critical coupling of the Rabi model in the dimensionless coupling g
G_C = 1.0

# Literal used for the Omega/omega0 -> infinity limit in flags, files and tables
INFINITE = math.inf
INFINITE_LITERAL = "inf"


class RabiException(MetaflowException):
    headline = "Rabi model computation failed."

    def __init__(self, error: Union[Sequence[Exception], str]):
        if isinstance(error, list):
            error = "\n".join([str(x) for x in error])
        super(RabiException, self).__init__(error)  # type: ignore


class InvalidParameterException(RabiException):
    headline = "Invalid model parameter."


class DivergentQuantityException(RabiException):
    headline = "Quantity diverges at the critical point."


class VariationalException(RabiException):
    headline = "Variational minimization failed."


class QuenchIntegrationException(RabiException):
    headline = "Quench integration failed."

    def __init__(self, error: str, grid_index: Optional[int] = None):
        self.grid_index = grid_index
        if grid_index is not None:
            error = "Grid point %d: %s" % (grid_index, error)
        super(QuenchIntegrationException, self).__init__(error)


class FitException(RabiException):
    headline = "Power-law fit failed."


class RabiConfigException(RabiException):
    headline = "Invalid configuration."


def is_infinite(ratio: float) -> bool:
    return math.isinf(ratio)


def check_coupling(g: float) -> float:
    g = float(g)
    if math.isnan(g) or g < 0:
        raise InvalidParameterException("Coupling g must be >= 0 (got %r)" % g)
    return g


def check_finite_ratio(ratio: float, what: str) -> float:
    ratio = float(ratio)
    if is_infinite(ratio):
        raise InvalidParameterException(
            "%s requires a finite ratio Omega/omega0 (got '%s')"
            % (what, INFINITE_LITERAL)
        )
    if not ratio > 0:
        raise InvalidParameterException(
            "Ratio Omega/omega0 must be > 0 (got %r)" % ratio
        )
    return ratio


def scaled_ratio(ratio: float) -> float:
    # q = 2 Omega / (3 omega0), the natural variable of the finite-frequency corrections
    return 2.0 * ratio / 3.0


def format_ratio(ratio: float) -> str:
    if is_infinite(ratio):
        return INFINITE_LITERAL
    return "%g" % ratio


def plural_marker(nbr: int) -> str:
    return "s" if nbr != 1 else ""
