"""Exception hierarchy shared by all modules."""


class GBHError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(GBHError, ValueError):
    """A physical or domain constraint is violated.

    ``violations`` lists every failed constraint, not only the first.
    """

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class NonPositiveCoefficient(ParameterError):
    pass


class InadmissibleKappa(ParameterError):
    pass


class TooCoarse(GBHError, ValueError):
    pass


class ConfigError(GBHError, ValueError):
    pass


class ListTooShort(GBHError, ValueError):
    pass


class DegenerateController(GBHError):
    pass


class A1Violated(GBHError):
    """Boundary Gram matrix of the controlled normal derivatives is (numerically) singular."""


class GainConditionFailed(GBHError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class SolverSingular(GBHError):
    pass


class InsufficientSamples(GBHError, ValueError):
    pass


class UnstableStep(GBHError):
    pass


class FieldOverflow(GBHError):
    pass


class NewtonDiverged(GBHError):
    pass


class DegenerateSeries(GBHError, ValueError):
    pass
