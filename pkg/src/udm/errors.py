"""Exception types raised across the package.

Every error derives from :class:`UdmError` so callers (the CLI in
particular) can separate user/config errors from internal failures.
"""


class UdmError(Exception):
    """Base class for all package errors."""


# dataset
class MalformedRow(UdmError, ValueError):
    pass


class DimensionMismatch(UdmError, ValueError):
    pass


class DuplicateInstanceId(UdmError, ValueError):
    pass


class MalformedLine(UdmError, ValueError):
    pass


class InvalidUtf8(UdmError, ValueError):
    pass


class TooFewObjects(UdmError, ValueError):
    pass


class InvalidConfig(UdmError, ValueError):
    pass


class IoError(UdmError, OSError):
    pass


# vae
class NonPositiveVariance(UdmError, ValueError):
    pass


class EmptyTrainingSet(UdmError, ValueError):
    pass


class NonFiniteLoss(UdmError, ArithmeticError):
    pass


# negatives
class NoNegativesAvailable(UdmError, ValueError):
    pass


class CorpusTooSmall(UdmError, ValueError):
    pass


class ZeroVector(UdmError, ValueError):
    pass


# classifier
class DegenerateDimension(UdmError, ValueError):
    pass


class EmptyClass(UdmError, ValueError):
    pass


# evaluate
class InsufficientTestInstances(UdmError, ValueError):
    pass


class MissingCategoryManifest(UdmError, ValueError):
    pass


class UnknownCategory(UdmError, KeyError):
    pass


class FractionTooSmall(UdmError, ValueError):
    pass
