"""Exception and warning types shared across the package."""


class ImpulseWeightsError(Exception):
    """Base class for computation errors (CLI exit code 1)."""


class RankDeficient(ImpulseWeightsError):
    pass


class InsufficientData(ImpulseWeightsError):
    pass


class DegenerateSample(ImpulseWeightsError):
    pass


class DegenerateVariance(ImpulseWeightsError):
    pass


class CellTooSmall(ImpulseWeightsError):
    pass


class HorizonTooLong(ImpulseWeightsError):
    pass


class StateDegenerate(ImpulseWeightsError):
    pass


class MissingStep(ImpulseWeightsError):
    pass


class BandwidthDegenerate(ImpulseWeightsError):
    pass


class DegenerateDensity(ImpulseWeightsError):
    pass


class InvalidSpec(ImpulseWeightsError):
    pass


class RequiresLatent(ImpulseWeightsError):
    pass


class AsymmetricRLaw(ImpulseWeightsError):
    pass


class DegenerateCovariance(ImpulseWeightsError):
    pass


class TooHighDimensional(ImpulseWeightsError):
    pass


class ParseError(ImpulseWeightsError):
    pass


class EmptyInput(ImpulseWeightsError):
    pass


class NegativeWeightRisk(UserWarning):
    """Flexible controls fit the shock much better than the linear ones."""


class WeakNormalizer(UserWarning):
    """Normalizing reduced-form coefficient is within 2 SE of zero."""


class WeakIdentification(UserWarning):
    """Heteroskedasticity instrument barely moves the first outcome."""
