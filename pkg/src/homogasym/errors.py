"""Exception hierarchy shared by all modules."""


class HomogError(Exception):
    """Base class for every error raised by the package."""


class NonConvergence(HomogError):
    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class NotPositive(HomogError):
    pass


class CompatibilityViolated(HomogError):
    pass


class DimensionUnsupported(HomogError):
    pass


class NotCoercive(HomogError):
    pass


class ShootingFailed(HomogError):
    pass


class BlowUp(HomogError):
    pass


class NewtonDiverged(HomogError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class CFLViolation(HomogError):
    pass


class WrapContamination(HomogError):
    pass


class OutOfDomain(HomogError):
    pass


class WeightTooSmall(HomogError):
    pass


class HypothesisViolated(HomogError):
    pass


class ConfigInvalid(HomogError):
    def __init__(self, message, field=None, line=None):
        loc = []
        if field is not None:
            loc.append(f"field '{field}'")
        if line is not None:
            loc.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(loc)})" if loc else message)
        self.field = field
        self.line = line
