"""Exception hierarchy shared by the analytical and simulation layers."""

from __future__ import annotations

from dataclasses import dataclass


class PaoiError(Exception):
    """Base class for every error raised by this package."""


@dataclass
class InvalidParam:
    name: str
    value: object
    constraint: str

    def __str__(self) -> str:
        return f"{self.name}={self.value!r} violates {self.constraint}"


class ConfigError(PaoiError):
    """Validation failed; ``violations`` lists every broken invariant."""

    def __init__(self, violations: list[InvalidParam]):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


class ParseError(PaoiError):
    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class EpsilonOne(PaoiError):
    """Generic intensity called with full path-loss inversion (use the limit branch)."""


class QuadratureFailure(PaoiError):
    pass


class DegenerateVariance(PaoiError):
    """Moment pair has (numerically) zero variance; ``mean`` holds the point mass."""

    def __init__(self, mean: float, variance: float):
        self.mean = mean
        self.variance = variance
        super().__init__(f"degenerate variance {variance:.3e} at mean {mean:.6f}")


class BisectionFailure(PaoiError):
    pass


class NoConvergence(PaoiError):
    pass


class NonConvergence(PaoiError):
    pass


class Unstable(PaoiError):
    pass


class SingularBoundary(PaoiError):
    pass


class TruncationFailure(PaoiError):
    pass


class WarmupTimeout(PaoiError):
    pass


class InsufficientSamples(PaoiError):
    pass


class DegenerateRealization(PaoiError):
    pass
