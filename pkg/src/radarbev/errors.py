"""Exception hierarchy. Every error raised by the package derives from RadarBevError."""


class RadarBevError(ValueError):
    pass


class NonFiniteInput(RadarBevError):
    pass


class BadAzimuthSize(RadarBevError):
    pass


class BadFraction(RadarBevError):
    pass


class WindowTooLarge(RadarBevError):
    pass


class EmptyPointCloud(RadarBevError):
    pass


class NoResults(RadarBevError):
    pass


class BadShape(RadarBevError):
    pass


class ShapeMismatch(RadarBevError):
    pass


class BadScheduleParams(RadarBevError):
    pass


class NoiseAtFinalStep(RadarBevError):
    pass


class TooSmall(RadarBevError):
    pass


class MissingForwardCache(RadarBevError):
    pass


class FormatError(RadarBevError):
    """Malformed or unrecognised binary file."""
