"""Exception hierarchy shared across the toolkit.

All toolkit errors derive from ConvexoError so callers (and the CLI) can
separate expected numeric/domain failures from bugs.
"""


class ConvexoError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(ConvexoError):
    """Malformed or inconsistent run configuration."""


class ExprSyntaxError(ConvexoError):
    """Source text does not match the expression grammar."""

    def __init__(self, position: int, expected: str, found: str = ""):
        self.position = position
        self.expected = expected
        self.found = found
        msg = f"at position {position}: expected {expected}"
        if found:
            msg += f", found {found!r}"
        super().__init__(msg)


class UnknownIdentifier(ConvexoError):
    def __init__(self, name: str, position: int = -1):
        self.name = name
        self.position = position
        super().__init__(f"unknown identifier {name!r}")


class DimensionError(ConvexoError):
    """Variable index outside the declared state/control dimensions."""

    def __init__(self, name: str, index: int, declared: int):
        self.name = name
        self.index = index
        self.declared = declared
        super().__init__(
            f"{name!r} references component {index} but only {declared} are declared"
        )


class EvalError(ConvexoError):
    """Domain violation while evaluating an expression (log/sqrt of a
    negative, unguarded division by zero, fractional power of a negative
    base, or a non-finite result)."""

    def __init__(self, detail: str):
        self.detail = detail
        super().__init__(detail)


class HorizonMismatch(ConvexoError):
    """Two control signals with different horizons were combined."""


class BudgetExceeded(ConvexoError):
    """A requested enumeration is larger than the configured cap."""


class EmptyMask(ConvexoError):
    """A grid function ended up with no masked-in nodes."""


class Infeasible(ConvexoError):
    """Query point lies outside the convex hull of the masked-in nodes."""


class CapExceeded(ConvexoError):
    """Exact envelope oracle invoked on more nodes than its cap allows."""


class DimensionMismatch(ConvexoError):
    """Operands live in different state dimensions."""


class NonPositiveParameter(ConvexoError):
    """A certificate parameter that must be positive is not."""


class NonFiniteState(ConvexoError):
    """Integration produced NaN without crossing the blow-up threshold."""
