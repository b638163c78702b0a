"""Exception hierarchy shared by all pipeline stages.

Every error raised by the package derives from :class:`EyeswapError` so the
CLI can map failures to structured diagnostics with a single handler.
"""


class EyeswapError(Exception):
    """Base class for all pipeline errors."""


# imaging
class MalformedHeader(EyeswapError):
    pass


class UnsupportedMaxval(EyeswapError):
    pass


class TruncatedPayload(EyeswapError):
    pass


class IoFailure(EyeswapError):
    pass


class OutOfBounds(EyeswapError):
    pass


# segmentation
class NoPupilFound(EyeswapError):
    pass


class NoLimbusFound(EyeswapError):
    pass


class DimensionMismatch(EyeswapError):
    pass


# rubber sheet
class InvalidGeometry(EyeswapError):
    pass


class DegenerateTexture(EyeswapError):
    pass


# iris codes
class TextureTooSmall(EyeswapError):
    pass


class GeometryMismatch(EyeswapError):
    pass


class InsufficientMask(EyeswapError):
    pass


# gaze calibration and metrics
class DegenerateDesign(EyeswapError):
    pass


class TooFewPoints(EyeswapError):
    pass


class NoValidationSamples(EyeswapError):
    pass


# synthetic data
class GazeOutOfFrame(EyeswapError):
    pass


# liveness
class TooFewSamples(EyeswapError):
    pass


class NonMonotonicTime(EyeswapError):
    pass


class AllSamplesCapped(EyeswapError):
    pass


class SignalTooShort(EyeswapError):
    pass


class NonFiniteInput(EyeswapError):
    pass


class SingleClassPartition(EyeswapError):
    pass


class DivergedLoss(EyeswapError):
    pass


class NoWindows(EyeswapError):
    pass


class NoSpoofedSamples(EyeswapError):
    pass


# harness
class TooFewSubjects(EyeswapError):
    pass


class ConfigError(EyeswapError):
    pass
