"""Exception types raised across the package."""


class SadynError(Exception):
    """Base class for all package errors."""


class PrecisionLoss(SadynError):
    """A p-adic value cannot be distinguished from zero at the working precision."""


class ExplosionGuard(SadynError):
    """An enumeration exceeded its candidate budget."""


class NotRational(SadynError):
    pass


class NoDecomposition(SadynError):
    pass


class ExpDivergent(SadynError):
    """The exponential series does not converge at an ultrametric place."""


class LogUndefined(SadynError):
    pass


class NonStabilizing(SadynError):
    pass


class DegenerateLambda(SadynError):
    """The supplied linear map does not have kernel exactly A_L."""


class UnsupportedL(SadynError):
    pass


class NonTermination(SadynError):
    pass


class ConfigError(SadynError):
    """Bad scenario configuration; carries the offending field and line when known."""

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class MissingArtifact(SadynError):
    pass


class DegenerateFit(UserWarning):
    """Emitted by fit_good when the sublevel data carry no exponent information."""
