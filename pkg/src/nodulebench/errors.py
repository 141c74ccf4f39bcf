"""Exception hierarchy.

Every error raised on purpose by the library derives from
:class:`NodulebenchError`; the CLI prints ``error[<category>]: <message>``
where the category is the class name, so callers can parse failures.
"""


class NodulebenchError(Exception):
    """Base class of all library errors."""

    @property
    def category(self) -> str:
        return type(self).__name__


class InvalidBox(NodulebenchError, ValueError):
    pass


class EmptyMask(NodulebenchError, ValueError):
    pass


class DegenerateLabels(NodulebenchError, ValueError):
    pass


class UnknownImageId(NodulebenchError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class NoNodulesInReference(NodulebenchError, ValueError):
    pass


class EmptyCurve(NodulebenchError, ValueError):
    pass


class ZeroVariance(NodulebenchError, ArithmeticError):
    pass


class AllZeroWeights(NodulebenchError, ValueError):
    pass


class EmptyLungMask(EmptyMask):
    pass


class PlacementExhausted(NodulebenchError, RuntimeError):
    pass


class EmptySegmentation(NodulebenchError, ValueError):
    pass


class BoxOutsideImage(NodulebenchError, ValueError):
    pass


class PlacementOutsideImage(BoxOutsideImage):
    pass


class NonConvergence(NodulebenchError, RuntimeError):
    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class FullyHomogeneousImage(NodulebenchError, ValueError):
    pass


class ConstantImage(NodulebenchError, ValueError):
    pass


class BoxOutsideCrop(NodulebenchError, ValueError):
    pass


class ParseError(NodulebenchError, ValueError):
    pass


class ValidationError(NodulebenchError, ValueError):
    def __init__(self, message, problems=()):
        super().__init__(message)
        self.problems = list(problems)


class MissingPredictions(NodulebenchError, FileNotFoundError):
    def __str__(self):
        return Exception.__str__(self)
